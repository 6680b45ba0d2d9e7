use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::CovarianceMatrix;
use crate::error::{Error, Result};
use crate::units::HBAR;

/// Standard errors of a per-mode (G, n) fit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitUncertainty {
    pub sigma_g: f64,
    pub sigma_n: f64,
    /// Cov(G, n).
    pub cov_gn: f64,
}

/// Phenomenological amplifier chain: Ṽ = T V T + N with T = ⊕ √G_i · I₂ and
/// N = ⊕ [(G_i − 1)(2n_i + 1) + (G_I,i − 1)(2n_I,i + 1)] · I₂.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AmplifierModel {
    pub gains: Vec<f64>,
    pub added: Vec<f64>,
    pub idler_gains: Vec<f64>,
    pub idler_added: Vec<f64>,
    pub fit: Vec<Option<FitUncertainty>>,
}

impl AmplifierModel {
    /// Per-mode gains and added photons, no idler contribution.
    pub fn new(gains: Vec<f64>, added: Vec<f64>) -> Result<Self> {
        let n = gains.len();
        Self::with_idler(gains, added, vec![1.0; n], vec![0.0; n])
    }

    pub fn with_idler(gains: Vec<f64>, added: Vec<f64>, idler_gains: Vec<f64>, idler_added: Vec<f64>) -> Result<Self> {
        let n = gains.len();
        if added.len() != n || idler_gains.len() != n || idler_added.len() != n {
            return Err(Error::DimensionMismatch("amplifier parameter lists differ in length".into()));
        }
        let amp = Self { gains, added, idler_gains, idler_added, fit: vec![None; n] };
        amp.validate()?;
        Ok(amp)
    }

    pub fn uniform(n_modes: usize, gain: f64, added: f64) -> Result<Self> {
        Self::new(vec![gain; n_modes], vec![added; n_modes])
    }

    pub fn with_fit(mut self, fit: Vec<Option<FitUncertainty>>) -> Result<Self> {
        if fit.len() != self.gains.len() {
            return Err(Error::DimensionMismatch("fit uncertainty list length".into()));
        }
        self.fit = fit;
        Ok(self)
    }

    pub fn n_modes(&self) -> usize {
        self.gains.len()
    }

    pub fn validate(&self) -> Result<()> {
        for (i, (&g, &gi)) in self.gains.iter().zip(&self.idler_gains).enumerate() {
            if !(g >= 1.0) {
                return Err(Error::GainBelowUnity { mode: i, gain: g });
            }
            if !(gi >= 1.0) {
                return Err(Error::GainBelowUnity { mode: i, gain: gi });
            }
        }
        if let Some(n) = self.added.iter().chain(&self.idler_added).find(|n| !(**n >= 0.0)) {
            return Err(Error::NegativeNoise(*n));
        }
        Ok(())
    }

    /// Diagonal noise term N_i for mode i.
    pub fn noise(&self, i: usize) -> f64 {
        (self.gains[i] - 1.0) * (2.0 * self.added[i] + 1.0) + (self.idler_gains[i] - 1.0) * (2.0 * self.idler_added[i] + 1.0)
    }

    fn check(&self, v: &CovarianceMatrix) -> Result<()> {
        if v.n_modes() != self.n_modes() {
            return Err(Error::DimensionMismatch(format!(
                "amplifier has {} modes, state has {}",
                self.n_modes(),
                v.n_modes()
            )));
        }
        self.validate()
    }
}

/// Ṽ = T V T + N.
pub fn amplify(v: &CovarianceMatrix, amp: &AmplifierModel) -> Result<CovarianceMatrix> {
    amp.check(v)?;
    let dim = 2 * amp.n_modes();
    let root: Vec<f64> = (0..dim).map(|q| amp.gains[q / 2].sqrt()).collect();
    let m = v.matrix();
    let out = DMatrix::from_fn(dim, dim, |r, c| {
        let noise = if r == c { amp.noise(r / 2) } else { 0.0 };
        root[r] * m[(r, c)] * root[c] + noise
    });
    CovarianceMatrix::from_symmetrized(out)
}

/// V = T⁻¹ (Ṽ − N) T⁻¹.
pub fn deamplify(v: &CovarianceMatrix, amp: &AmplifierModel) -> Result<CovarianceMatrix> {
    amp.check(v)?;
    let dim = 2 * amp.n_modes();
    let root: Vec<f64> = (0..dim).map(|q| amp.gains[q / 2].sqrt()).collect();
    let m = v.matrix();
    let out = DMatrix::from_fn(dim, dim, |r, c| {
        let noise = if r == c { amp.noise(r / 2) } else { 0.0 };
        (m[(r, c)] - noise) / (root[r] * root[c])
    });
    CovarianceMatrix::from_symmetrized(out)
}

/// Convert raw amplitude moments ⟨A_i A_j⟩ (V²) to photon-normalized covariance:
/// V_ij = ⟨A_i A_j⟩ / (½ Z₀ ħ √(ω_i ω_j) Δ_BW). `omegas` holds one angular
/// frequency per mode, `bandwidth` is in Hz.
pub fn normalize_raw_moments(raw: &DMatrix<f64>, omegas: &[f64], z0: f64, bandwidth: f64) -> Result<CovarianceMatrix> {
    let dim = 2 * omegas.len();
    if raw.nrows() != dim || raw.ncols() != dim {
        return Err(Error::DimensionMismatch(format!("raw moments {}x{}, expected {dim}", raw.nrows(), raw.ncols())));
    }
    if !(z0 > 0.0 && bandwidth > 0.0) || omegas.iter().any(|w| !(*w > 0.0)) {
        return Err(Error::InvalidParameter("impedance, bandwidth and frequencies must be positive".into()));
    }
    let out = DMatrix::from_fn(dim, dim, |r, c| {
        raw[(r, c)] / (0.5 * z0 * HBAR * (omegas[r / 2] * omegas[c / 2]).sqrt() * bandwidth)
    });
    CovarianceMatrix::from_symmetrized(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn random_physical(n: usize, seed: &[f64]) -> CovarianceMatrix {
        // A Aᵀ + I is PSD with V + iΩ ⪰ 0 since I + iΩ ⪰ 0.
        let dim = 2 * n;
        let a = DMatrix::from_fn(dim, dim, |r, c| seed[(r * dim + c) % seed.len()]);
        CovarianceMatrix::from_symmetrized(&a * a.transpose() + DMatrix::identity(dim, dim)).unwrap()
    }

    #[test]
    fn unit_gain_is_identity() {
        let v = CovarianceMatrix::two_mode_squeezed(0.4);
        let amp = AmplifierModel::uniform(2, 1.0, 0.0).unwrap();
        assert_eq!(amplify(&v, &amp).unwrap(), v);
    }

    #[test]
    fn vacuum_uniform_gain() {
        let (g, n) = (250.0, 0.7);
        let amp = AmplifierModel::uniform(3, g, n).unwrap();
        let out = amplify(&CovarianceMatrix::vacuum(3), &amp).unwrap();
        let expect = g + (g - 1.0) * (2.0 * n + 1.0);
        assert!((out.matrix() - DMatrix::identity(6, 6) * expect).amax() < 1e-10);
        let back = deamplify(&out, &amp).unwrap();
        assert!((back.matrix() - DMatrix::identity(6, 6)).amax() < 1e-12);
    }

    #[test]
    fn idler_term() {
        let amp = AmplifierModel::with_idler(vec![10.0], vec![1.0], vec![10.0], vec![0.5]).unwrap();
        assert!((amp.noise(0) - (9.0 * 3.0 + 9.0 * 2.0)).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(matches!(AmplifierModel::uniform(2, 0.5, 0.0), Err(Error::GainBelowUnity { .. })));
        assert!(matches!(AmplifierModel::uniform(2, 2.0, -0.1), Err(Error::NegativeNoise(_))));
        let amp = AmplifierModel::uniform(2, 2.0, 0.0).unwrap();
        assert!(amplify(&CovarianceMatrix::vacuum(3), &amp).is_err());
    }

    #[test]
    fn raw_moment_scaling_maps_vacuum_power_to_identity() {
        let omegas = [2.0 * std::f64::consts::PI * 4e9, 2.0 * std::f64::consts::PI * 4.1e9];
        let (z0, bw) = (50.0, 1e5);
        let raw = DMatrix::from_fn(4, 4, |r, c| {
            if r == c {
                0.5 * z0 * HBAR * omegas[r / 2] * bw
            } else {
                0.0
            }
        });
        let v = normalize_raw_moments(&raw, &omegas, z0, bw).unwrap();
        assert!((v.matrix() - DMatrix::identity(4, 4)).amax() < 1e-12);
    }

    proptest! {
        #[test]
        fn roundtrip_and_trace(seed in prop::collection::vec(-1.0f64..1.0, 16),
                               gains in prop::collection::vec(1.0f64..500.0, 2),
                               added in prop::collection::vec(0.0f64..5.0, 2)) {
            let v = random_physical(2, &seed);
            let amp = AmplifierModel::new(gains.clone(), added).unwrap();
            let out = amplify(&v, &amp).unwrap();
            prop_assert!((out.matrix() - out.matrix().transpose()).amax() == 0.0);
            if gains.iter().all(|g| *g > 1.0 + 1e-9) {
                prop_assert!(out.matrix().trace() > v.matrix().trace());
            }
            let back = deamplify(&out, &amp).unwrap();
            let scale = v.matrix().amax().max(1.0);
            prop_assert!((back.matrix() - v.matrix()).amax() < 1e-10 * scale);
        }
    }
}
