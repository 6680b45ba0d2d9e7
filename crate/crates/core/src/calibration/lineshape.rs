//! Two-mode correlation lineshape C(δ), the (G, ε) fit built on it, added
//! noise from pump-off statistics and the PPT temperature sweep.

use nalgebra::{DVector, Matrix2};
use num_complex::Complex64;
use rayon::prelude::*;

use super::fit::least_squares;
use crate::coupling::{CouplingMatrix, PairCoupling};
use crate::entanglement::ppt_min_eigenvalue;
use crate::error::{Error, Result};
use crate::gaussian::{
    amplify, correlation_quantity, deamplify, output_covariance, thermal_covariance, AmplifierModel, CovarianceMatrix,
};
use crate::modesys::ModeSpec;
use crate::scattering::scattering_matrices;

/// Fraction of the instability threshold the fitted |ε| may approach.
const EPS_CEILING: f64 = 0.999;
const SCAN_POINTS: usize = 49;

fn threshold(modes: &[ModeSpec; 2]) -> f64 {
    (modes[0].gamma_tot() * modes[1].gamma_tot()).sqrt() / 2.0
}

/// Unamplified output state of a pumped pair. The probe sits at δ above mode 0
/// and the conjugate idler at δ below mode 1; all inputs are thermal at `t_eff`.
pub fn pair_output_state(delta: f64, epsilon: f64, modes: &[ModeSpec; 2], t_eff: f64) -> Result<CovarianceMatrix> {
    let detunings = [
        Complex64::new(delta, modes[0].gamma_tot() / 2.0),
        Complex64::new(-delta, modes[1].gamma_tot() / 2.0),
    ];
    let coupling = PairCoupling { pump_index: 0, mode_j: 0, mode_k: 1, epsilon: Complex64::new(epsilon, 0.0) };
    let cm = CouplingMatrix::from_parts(&detunings, &[coupling])?;
    let sc = scattering_matrices(&cm, &[modes[0].gamma_ext, modes[1].gamma_ext], &[modes[0].gamma_int, modes[1].gamma_int])?
        .to_quadrature_basis()?;
    let th = thermal_covariance(modes, t_eff)?;
    output_covariance(&sc, &th, &th)
}

/// Correlation quantity C of the amplified pair output at detuning `delta` (rad/s).
pub fn c_lineshape(delta: f64, gain: f64, epsilon: f64, modes: &[ModeSpec; 2], t_eff: f64) -> Result<f64> {
    let v = pair_output_state(delta, epsilon, modes, t_eff)?;
    let amp = AmplifierModel::uniform(2, gain, 0.0)?;
    correlation_quantity(&amplify(&v, &amp)?)
}

fn unit_shape(deltas: &[f64], epsilon: f64, modes: &[ModeSpec; 2], t_eff: f64) -> Result<Vec<f64>> {
    deltas.iter().map(|&d| correlation_quantity(&pair_output_state(d, epsilon, modes, t_eff)?)).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationFit {
    pub gain: f64,
    /// |ε| (rad/s).
    pub epsilon: f64,
    /// Covariance of (G, ε).
    pub covariance: Matrix2<f64>,
    /// Model minus data, in the units of C.
    pub residuals: Vec<f64>,
}

/// Fit (G, |ε|) to (δ, C) pairs with the input temperature held at `t_eff`.
/// A scan over ε with the gain solved in closed form provides the start.
pub fn fit_gain_from_correlations(data: &[(f64, f64)], modes: &[ModeSpec; 2], t_eff: f64) -> Result<CorrelationFit> {
    if data.len() < 3 {
        return Err(Error::InsufficientData(format!("{} lineshape points, need 3", data.len())));
    }
    if data.iter().any(|(d, c)| !d.is_finite() || !c.is_finite()) {
        return Err(Error::InvalidParameter("non-finite lineshape data".into()));
    }
    let deltas: Vec<f64> = data.iter().map(|p| p.0).collect();
    let c: Vec<f64> = data.iter().map(|p| p.1).collect();
    let scale = c.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    if scale == 0.0 {
        return Err(Error::FitDiverged("lineshape is identically zero".into()));
    }
    let cap = EPS_CEILING * threshold(modes);

    let mut start: Option<(f64, f64, f64)> = None;
    for k in 1..=SCAN_POINTS {
        let eps = cap * k as f64 / (SCAN_POINTS + 1) as f64;
        let shape = unit_shape(&deltas, eps, modes, t_eff)?;
        let norm: f64 = shape.iter().map(|s| s * s).sum();
        if norm == 0.0 {
            continue;
        }
        let g = shape.iter().zip(&c).map(|(s, c)| s * c).sum::<f64>() / norm;
        let rss: f64 = shape.iter().zip(&c).map(|(s, c)| (g * s - c).powi(2)).sum();
        if g > 0.0 && start.is_none_or(|(_, _, best)| rss < best) {
            start = Some((g, eps, rss));
        }
    }
    let (g0, eps0, _) = start.ok_or_else(|| Error::FitDiverged("no positive-gain start in the ε scan".into()))?;

    // x = (ln(G/G0), u) with ε = cap·logistic(u), which keeps ε below threshold.
    let logistic = |u: f64| 1.0 / (1.0 + (-u).exp());
    let m = data.len();
    let model = |x: &DVector<f64>| {
        let g = g0 * x[0].exp();
        let shape = unit_shape(&deltas, cap * logistic(x[1]), modes, t_eff).ok()?;
        Some(DVector::from_iterator(m, shape.iter().zip(&c).map(|(s, c)| (g * s - c) / scale)))
    };
    let u0 = (eps0 / (cap - eps0)).ln();
    let out = least_squares(model, DVector::from_vec(vec![0.0, u0]), m)?;
    let gain = g0 * out.params[0].exp();
    let epsilon = cap * logistic(out.params[1]);
    let jac = Matrix2::new(gain, 0.0, 0.0, epsilon * (1.0 - epsilon / cap));
    let cov = Matrix2::new(out.covariance[(0, 0)], out.covariance[(0, 1)], out.covariance[(1, 0)], out.covariance[(1, 1)]);
    Ok(CorrelationFit {
        gain,
        epsilon,
        covariance: jac * cov * jac,
        residuals: out.residuals.iter().map(|r| r * scale).collect(),
    })
}

/// Added noise per mode from pump-off statistics, taking the unamplified state
/// to be thermal at `t_eff`: Ṽ_ii = G V_ii + (G − 1)(2n + 1), averaged over I and Q.
pub fn added_noise_per_mode(v_off: &CovarianceMatrix, modes: &[ModeSpec], gain: f64, t_eff: f64) -> Result<Vec<f64>> {
    if v_off.n_modes() != modes.len() {
        return Err(Error::DimensionMismatch(format!("{} modes for a {}-mode state", modes.len(), v_off.n_modes())));
    }
    if !(gain >= 1.0) {
        return Err(Error::GainBelowUnity { mode: 0, gain });
    }
    if gain == 1.0 {
        return Err(Error::InvalidParameter("added noise is undetermined at unit gain".into()));
    }
    let th = thermal_covariance(modes, t_eff)?;
    let (vo, vt) = (v_off.matrix(), th.matrix());
    Ok((0..modes.len())
        .map(|i| {
            let mean = |m: &nalgebra::DMatrix<f64>| 0.5 * (m[(2 * i, 2 * i)] + m[(2 * i + 1, 2 * i + 1)]);
            ((mean(vo) - gain * mean(vt)) / (gain - 1.0) - 1.0) / 2.0
        })
        .collect())
}

/// Mode-averaged added noise n; negative solutions signal an inconsistent G or `t_eff`.
pub fn added_noise_from_pump_off(v_off: &CovarianceMatrix, modes: &[ModeSpec], gain: f64, t_eff: f64) -> Result<f64> {
    let per_mode = added_noise_per_mode(v_off, modes, gain, t_eff)?;
    let n = per_mode.iter().sum::<f64>() / per_mode.len() as f64;
    if n < 0.0 {
        return Err(Error::NegativeNoise(n));
    }
    Ok(n)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    pub temperature: f64,
    pub gain: f64,
    pub epsilon: f64,
    pub added: f64,
    pub lambda_min: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TemperatureSweep {
    pub points: Vec<SweepPoint>,
    /// Temperature where λ_min first turns nonnegative, if the grid brackets it.
    pub crossing: Option<f64>,
}

fn sweep_point(
    v_on: &CovarianceMatrix,
    v_off: &CovarianceMatrix,
    c_data: &[(f64, f64)],
    modes: &[ModeSpec; 2],
    t: f64,
) -> Result<SweepPoint> {
    let fit = fit_gain_from_correlations(c_data, modes, t)?;
    let added = added_noise_from_pump_off(v_off, modes, fit.gain, t)?;
    let v = deamplify(v_on, &AmplifierModel::uniform(2, fit.gain, added)?)?;
    let lambda_min = ppt_min_eigenvalue(&v, &[1])?;
    Ok(SweepPoint { temperature: t, gain: fit.gain, epsilon: fit.epsilon, added, lambda_min })
}

/// For each assumed phonon temperature: refit G from the lineshape, solve n
/// from the pump-off state, de-amplify the pump-on state and evaluate the
/// PPT minimum eigenvalue. A bracketed sign change is refined by bisection.
pub fn ppt_temperature_sweep(
    v_on: &CovarianceMatrix,
    v_off: &CovarianceMatrix,
    c_data: &[(f64, f64)],
    modes: &[ModeSpec; 2],
    t_grid: &[f64],
) -> Result<TemperatureSweep> {
    if t_grid.is_empty() || t_grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidParameter("temperature grid must be nonempty and increasing".into()));
    }
    if v_on.n_modes() != 2 || v_off.n_modes() != 2 {
        return Err(Error::DimensionMismatch("temperature sweep needs two-mode states".into()));
    }
    let points: Vec<SweepPoint> =
        t_grid.par_iter().map(|&t| sweep_point(v_on, v_off, c_data, modes, t)).collect::<Result<_>>()?;
    let crossing = match points.windows(2).find(|w| w[0].lambda_min < 0.0 && w[1].lambda_min >= 0.0) {
        None => None,
        Some(w) => {
            let (mut lo, mut hi) = (w[0].temperature, w[1].temperature);
            while hi - lo > 1e-6 {
                let mid = 0.5 * (lo + hi);
                if sweep_point(v_on, v_off, c_data, modes, mid)?.lambda_min < 0.0 {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            Some(0.5 * (lo + hi))
        }
    };
    Ok(TemperatureSweep { points, crossing })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::units::{hz_to_rad, H, K_B};
    use std::f64::consts::PI;

    fn pair(int_hz: f64) -> [ModeSpec; 2] {
        [
            ModeSpec::from_hz(0, 3.858e9, 20e3, int_hz).unwrap(),
            ModeSpec::from_hz(1, 3.858e9 + 2.3e6, 20e3, int_hz).unwrap(),
        ]
    }

    fn synth(g: f64, eps: f64, modes: &[ModeSpec; 2], t: f64) -> Vec<(f64, f64)> {
        (-10..=10)
            .map(|k| {
                let d = hz_to_rad(3e3 * k as f64);
                (d, c_lineshape(d, g, eps, modes, t).unwrap())
            })
            .collect()
    }

    #[test]
    fn zero_coupling_has_no_correlation() {
        let modes = pair(20e3);
        for k in -5..=5 {
            assert_eq!(c_lineshape(hz_to_rad(5e3 * k as f64), 1e8, 0.0, &modes, 0.03).unwrap(), 0.0);
        }
    }

    #[test]
    fn lineshape_is_amplified_output_correlation() {
        let modes = pair(20e3);
        let d = hz_to_rad(4e3);
        let c0 = correlation_quantity(&pair_output_state(d, hz_to_rad(6e3), &modes, 0.03).unwrap()).unwrap();
        let c = c_lineshape(d, 1e8, hz_to_rad(6e3), &modes, 0.03).unwrap();
        assert!((c / (1e8 * c0) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn peak_even_and_about_a_linewidth_wide() {
        let modes = pair(20e3);
        let (g, eps) = (1e8, hz_to_rad(6e3));
        let gamma = modes[0].gamma_tot();
        let c = |d: f64| c_lineshape(d, g, eps, &modes, 0.03).unwrap();
        let peak = c(0.0);
        assert!(peak > c(gamma));
        for k in 1..20 {
            let d = gamma * k as f64 / 10.0;
            assert!((c(d) - c(-d)).abs() < 1e-9 * peak);
            assert!(c(d) < c(d - gamma / 10.0));
        }
        // half width at half maximum, by bisection
        let (mut lo, mut hi) = (0.0, 5.0 * gamma);
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            if c(mid) > 0.5 * peak {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let fwhm = 2.0 * lo;
        assert!(fwhm > 0.3 * gamma && fwhm < 1.5 * gamma, "fwhm/γ = {}", fwhm / gamma);
    }

    #[test]
    fn above_threshold_is_rejected() {
        let modes = pair(20e3);
        let thr = threshold(&modes);
        assert!(matches!(c_lineshape(0.0, 1e8, 1.01 * thr, &modes, 0.03), Err(Error::AboveThreshold { .. })));
    }

    #[test]
    fn fit_recovers_noiseless_parameters() {
        let modes = pair(20e3);
        let (g, eps) = (1e8, 2.0 * PI * 6e3);
        let fit = fit_gain_from_correlations(&synth(g, eps, &modes, 0.03), &modes, 0.03).unwrap();
        assert!((fit.gain / g - 1.0).abs() < 1e-6, "G = {}", fit.gain);
        assert!((fit.epsilon / eps - 1.0).abs() < 1e-6, "ε = {}", fit.epsilon);
        let scale = fit.residuals.iter().fold(0.0f64, |m, r| m.max(r.abs()));
        assert!(scale < 1e-8 * c_lineshape(0.0, g, eps, &modes, 0.03).unwrap());
    }

    /// With 1% additive noise on 21 points the gain is only determined to a
    /// few percent; the reported standard errors must describe the scatter.
    #[test]
    fn noisy_fit_errors_match_reported_uncertainty() {
        use rand::SeedableRng;
        use rand_distr::{Distribution, Normal};
        let modes = pair(20e3);
        let (g, eps) = (1e8, 2.0 * PI * 6e3);
        let clean = synth(g, eps, &modes, 0.03);
        let peak = clean.iter().fold(0.0f64, |m, p| m.max(p.1));
        let noise = Normal::new(0.0, 0.01 * peak).unwrap();
        let (mut sq, mut var) = (0.0, 0.0);
        for seed in 0..20 {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let noisy: Vec<(f64, f64)> = clean.iter().map(|&(d, c)| (d, c + noise.sample(&mut rng))).collect();
            let fit = fit_gain_from_correlations(&noisy, &modes, 0.03).unwrap();
            let (sg, se) = (fit.covariance[(0, 0)].sqrt(), fit.covariance[(1, 1)].sqrt());
            assert!((fit.gain - g).abs() < 3.5 * sg, "seed {seed}: G = {} ± {sg}", fit.gain);
            assert!((fit.epsilon - eps).abs() < 3.5 * se, "seed {seed}: ε = {} ± {se}", fit.epsilon);
            assert!(fit.covariance[(0, 1)] < 0.0);
            sq += (fit.gain / g - 1.0).powi(2);
            var += (sg / g).powi(2);
        }
        let ratio = (sq / var).sqrt();
        assert!(ratio > 0.5 && ratio < 2.0, "scatter/reported = {ratio}");
    }

    #[test]
    fn scaled_data_scales_gain_only() {
        let modes = pair(20e3);
        let data = synth(1e8, hz_to_rad(6e3), &modes, 0.03);
        let base = fit_gain_from_correlations(&data, &modes, 0.03).unwrap();
        let scaled: Vec<(f64, f64)> = data.iter().map(|&(d, c)| (d, 3.0 * c)).collect();
        let fit = fit_gain_from_correlations(&scaled, &modes, 0.03).unwrap();
        assert!((fit.gain / base.gain - 3.0).abs() < 1e-6);
        assert!((fit.epsilon / base.epsilon - 1.0).abs() < 1e-6);
    }

    #[test]
    fn hotter_input_needs_less_gain() {
        let modes = pair(20e3);
        let data = synth(1e8, hz_to_rad(6e3), &modes, 0.03);
        let gains: Vec<f64> =
            [0.02, 0.03, 0.05, 0.1].iter().map(|&t| fit_gain_from_correlations(&data, &modes, t).unwrap().gain).collect();
        assert!(gains.windows(2).all(|w| w[1] < w[0]), "{gains:?}");
    }

    #[test]
    fn fit_needs_three_points() {
        let modes = pair(20e3);
        assert!(matches!(
            fit_gain_from_correlations(&[(0.0, 1.0), (1.0, 0.5)], &modes, 0.03),
            Err(Error::InsufficientData(_))
        ));
    }

    #[test]
    fn added_noise_inverts_amplifier() {
        let modes = pair(20e3);
        let th = thermal_covariance(&modes, 0.04).unwrap();
        let v_off = amplify(&th, &AmplifierModel::uniform(2, 1e8, 0.08).unwrap()).unwrap();
        let n = added_noise_from_pump_off(&v_off, &modes, 1e8, 0.04).unwrap();
        assert!((n - 0.08).abs() < 1e-9);
        let cooler = added_noise_from_pump_off(&v_off, &modes, 1e8, 0.03).unwrap();
        let hotter = added_noise_from_pump_off(&v_off, &modes, 1e8, 0.05).unwrap();
        assert!(hotter < n && n < cooler);
        assert!(matches!(added_noise_from_pump_off(&v_off, &modes, 1e8, 0.5), Err(Error::NegativeNoise(_))));
        assert!(added_noise_from_pump_off(&v_off, &modes, 1.0, 0.04).is_err());
    }

    /// λ_min(T) crosses zero where coth(hf/2k_B T) = e^{2r}, the squeezing of
    /// the lossless vacuum-input network with on-resonance |S₁₁| = cosh r.
    #[test]
    fn sweep_crosses_at_two_mode_threshold() {
        let modes = pair(0.0);
        let (g, n, eps, t_true) = (1e8, 0.08, 2.0 * PI * 3e3, 0.03);
        let amp = AmplifierModel::uniform(2, g, n).unwrap();
        let v_on = amplify(&pair_output_state(0.0, eps, &modes, t_true).unwrap(), &amp).unwrap();
        let v_off = amplify(&thermal_covariance(&modes, t_true).unwrap(), &amp).unwrap();
        let c_data = synth(g, eps, &modes, t_true);
        let grid: Vec<f64> = (1..=12).map(|k| 0.05 * k as f64).collect();
        let sweep = ppt_temperature_sweep(&v_on, &v_off, &c_data, &modes, &grid).unwrap();
        assert!(sweep.points.windows(2).all(|w| w[1].lambda_min > w[0].lambda_min));

        let k = (modes[0].gamma_tot() / 2.0 / eps).powi(2);
        let cosh_r = (k + 1.0) / (k - 1.0);
        let e2r = (cosh_r + (cosh_r * cosh_r - 1.0).sqrt()).powi(2);
        let f = 0.5 * (modes[0].omega + modes[1].omega) / (2.0 * PI);
        let t_star = H * f / (2.0 * K_B * (1.0 / e2r).atanh());
        let crossing = sweep.crossing.unwrap();
        assert!((crossing - t_star).abs() < 2e-3, "{crossing} vs {t_star}");

        let at_true = sweep_point(&v_on, &v_off, &c_data, &modes, t_true).unwrap();
        let direct = ppt_min_eigenvalue(&pair_output_state(0.0, eps, &modes, t_true).unwrap(), &[1]).unwrap();
        assert!(at_true.lambda_min < 0.0);
        assert!((at_true.lambda_min - direct).abs() < 1e-6);
    }

    #[test]
    fn sweep_rejects_unsorted_grid() {
        let modes = pair(20e3);
        let v = CovarianceMatrix::vacuum(2);
        assert!(ppt_temperature_sweep(&v, &v, &[], &modes, &[0.1, 0.05]).is_err());
    }

    proptest::proptest! {
        #![proptest_config(proptest::prelude::ProptestConfig::with_cases(16))]
        #[test]
        fn even_in_detuning(frac in 0.05f64..0.95, d_khz in 0.0f64..60.0, t in 0.0f64..0.2) {
            let modes = pair(20e3);
            let eps = frac * threshold(&modes);
            let d = hz_to_rad(d_khz * 1e3);
            let a = c_lineshape(d, 1e6, eps, &modes, t).unwrap();
            let b = c_lineshape(-d, 1e6, eps, &modes, t).unwrap();
            proptest::prop_assert!((a - b).abs() <= 1e-9 * a.max(b));
        }

        #[test]
        fn noiseless_fit_is_exact(lg in 4.0f64..10.0, frac in 0.1f64..0.9) {
            let modes = pair(20e3);
            let (g, eps) = (10f64.powf(lg), frac * threshold(&modes));
            let data = synth(g, eps, &modes, 0.03);
            let fit = fit_gain_from_correlations(&data, &modes, 0.03).unwrap();
            proptest::prop_assert!((fit.gain / g - 1.0).abs() < 1e-6);
            proptest::prop_assert!((fit.epsilon / eps - 1.0).abs() < 1e-6);
            let peak = data.iter().fold(0.0f64, |m, p| m.max(p.1));
            proptest::prop_assert!(fit.residuals.iter().all(|r| r.abs() < 1e-8 * peak));
        }
    }
}
