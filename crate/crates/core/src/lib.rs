//! Simulation and analysis of a multimode resonator whose modes are
//! parametrically coupled by a pump comb through a shared nonlinear mirror.
//!
//! The pipeline runs from the physical drive model ([`modesys`]) through the
//! mode-coupling matrix ([`coupling`]) and input–output scattering
//! ([`scattering`]) to output Gaussian states ([`gaussian`]), which are then
//! de-embedded from the amplifier chain ([`calibration`]), made physical
//! ([`reconstruct`]) and tested for entanglement ([`entanglement`]).

pub mod calibration;
pub mod coupling;
pub mod entanglement;
pub mod error;
pub mod gaussian;
pub mod linalg;
pub mod modesys;
pub mod reconstruct;
pub mod scattering;
pub mod units;

pub use calibration::{CalibrationStore, PlanckFit};
pub use coupling::{CouplingMatrix, FourWaveMatch, PairCoupling};
pub use entanglement::{Bipartition, EntanglementReport};
pub use error::{Error, Result};
pub use gaussian::{AmplifierModel, CovarianceMatrix, QuadratureSamples};
pub use modesys::{MaterialParams, MirrorSpec, ModeSpec, PumpTone};
pub use scattering::{QuadratureScattering, ScatteringPair};
