//! Gain and added noise of the amplifier chain from output noise power
//! against the temperature of a thermal source.

use nalgebra::{DVector, Matrix2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::fit::least_squares;
use crate::error::{Error, Result};
use crate::gaussian::FitUncertainty;
use crate::units::{H, K_B};

/// Noise power spectral density P = G h f [½ coth(hf / 2k_B T) + ½(2n + 1)] in W/Hz.
pub fn planck_power(temperature: f64, freq_hz: f64, gain: f64, added: f64) -> f64 {
    gain * H * freq_hz * (0.5 * half_coth(temperature, freq_hz) + 0.5 * (2.0 * added + 1.0))
}

/// coth(hf / 2k_B T), equal to 1 at T = 0.
fn half_coth(temperature: f64, freq_hz: f64) -> f64 {
    if temperature <= 0.0 {
        return 1.0;
    }
    let x = H * freq_hz / (2.0 * K_B * temperature);
    1.0 / x.tanh()
}

/// Added-noise photon number expressed as a temperature: n = 1/(e^{hf/k_B T_n} − 1).
pub fn noise_temperature(added: f64, freq_hz: f64) -> f64 {
    if added <= 0.0 {
        return 0.0;
    }
    H * freq_hz / (K_B * (1.0 / added).ln_1p())
}

/// Measured noise power at one frequency.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanckData {
    pub freq_hz: f64,
    /// Source temperatures (K).
    pub temps: Vec<f64>,
    /// Output power spectral densities (W/Hz).
    pub powers: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlanckFit {
    pub freq_hz: f64,
    pub gain: f64,
    pub added: f64,
    /// Covariance of (G, n).
    pub covariance: Matrix2<f64>,
    /// Relative residuals (model − data)/data.
    pub residuals: Vec<f64>,
}

impl PlanckFit {
    pub fn uncertainty(&self) -> FitUncertainty {
        FitUncertainty {
            sigma_g: self.covariance[(0, 0)].max(0.0).sqrt(),
            sigma_n: self.covariance[(1, 1)].max(0.0).sqrt(),
            cov_gn: self.covariance[(0, 1)],
        }
    }

    pub fn residual_rms(&self) -> f64 {
        (self.residuals.iter().map(|r| r * r).sum::<f64>() / self.residuals.len() as f64).sqrt()
    }
}

/// Least-squares fit of (G, n) with relative residuals. The starting gain comes
/// from the slope between the two hottest points.
pub fn planck_fit(temps: &[f64], powers: &[f64], freq_hz: f64) -> Result<PlanckFit> {
    if temps.len() != powers.len() {
        return Err(Error::DimensionMismatch(format!("{} temperatures, {} powers", temps.len(), powers.len())));
    }
    if !(freq_hz > 0.0) {
        return Err(Error::InvalidParameter(format!("frequency must be positive, got {freq_hz}")));
    }
    if temps.iter().any(|t| !(*t >= 0.0 && t.is_finite())) {
        return Err(Error::InvalidParameter("temperatures must be finite and nonnegative".into()));
    }
    if powers.iter().any(|p| !(*p > 0.0 && p.is_finite())) {
        return Err(Error::InvalidParameter("powers must be finite and positive".into()));
    }
    let mut order: Vec<usize> = (0..temps.len()).collect();
    order.sort_by(|&a, &b| temps[a].total_cmp(&temps[b]));
    let mut distinct: Vec<f64> = order.iter().map(|&i| temps[i]).collect();
    distinct.dedup();
    if distinct.len() < 3 {
        return Err(Error::InsufficientData(format!("{} distinct temperatures, need 3", distinct.len())));
    }

    let hot = order[order.len() - 1];
    let warm = *order.iter().rev().find(|&&i| temps[i] < temps[hot]).unwrap();
    let dcoth = half_coth(temps[hot], freq_hz) - half_coth(temps[warm], freq_hz);
    let g0 = (powers[hot] - powers[warm]) / (0.5 * H * freq_hz * dcoth);
    if !(g0 > 0.0 && g0.is_finite()) {
        return Err(Error::FitDiverged("power does not increase with temperature".into()));
    }
    let cold = order[0];
    let n0 = powers[cold] / (g0 * H * freq_hz) - 0.5 * half_coth(temps[cold], freq_hz) - 0.5;

    let m = temps.len();
    let model = |x: &DVector<f64>| {
        Some(DVector::from_iterator(
            m,
            temps.iter().zip(powers).map(|(&t, &p)| planck_power(t, freq_hz, g0 * x[0], x[1]) / p - 1.0),
        ))
    };
    let out = least_squares(model, DVector::from_vec(vec![1.0, n0]), m)?;
    let gain = g0 * out.params[0];
    if !(gain > 0.0) {
        return Err(Error::FitDiverged(format!("fitted gain {gain}")));
    }
    let scale = Matrix2::new(g0, 0.0, 0.0, 1.0);
    let cov = Matrix2::new(out.covariance[(0, 0)], out.covariance[(0, 1)], out.covariance[(1, 0)], out.covariance[(1, 1)]);
    Ok(PlanckFit {
        freq_hz,
        gain,
        added: out.params[1],
        covariance: scale * cov * scale,
        residuals: out.residuals.iter().copied().collect(),
    })
}

/// Independent fits at each frequency, in input order.
pub fn planck_fit_all(data: &[PlanckData]) -> Vec<Result<PlanckFit>> {
    data.par_iter().map(|d| planck_fit(&d.temps, &d.powers, d.freq_hz)).collect()
}
