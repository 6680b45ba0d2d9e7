//! Amplifier-chain calibration: Planck spectroscopy for (G, n), the
//! two-mode correlation lineshape fit for (G, ε) and the PPT temperature sweep.

pub mod fit;
pub mod lineshape;
pub mod planck;
pub mod store;

pub use lineshape::{
    added_noise_from_pump_off, added_noise_per_mode, c_lineshape, fit_gain_from_correlations, pair_output_state,
    ppt_temperature_sweep, CorrelationFit, SweepPoint, TemperatureSweep,
};
pub use planck::{noise_temperature, planck_fit, planck_fit_all, planck_power, PlanckData, PlanckFit};
pub use store::{CalibrationEntry, CalibrationStore};
