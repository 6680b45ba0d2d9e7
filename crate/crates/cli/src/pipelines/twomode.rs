//! Two-mode squeezing versus pump-probe detuning with a chopped pump.

use std::fmt::Write as _;

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::Value;

use phonocomb::gaussian::{
    align_pair_phase, amplify, histogram_2d, sample_with_rng, squeezing_stats, thermal_covariance, PumpState,
};
use phonocomb::units::hz_to_rad;
use phonocomb::{AmplifierModel, CovarianceMatrix, QuadratureSamples};

use super::{amplifiers, fmt};
use crate::config::LoadedConfig;
use crate::error::CliResult;
use crate::network::Network;
use crate::report::{linspace, OutputDir};

#[derive(Debug, Serialize)]
pub struct DetuningPoint {
    pub detuning_hz: f64,
    pub r_e: f64,
    pub r_p: f64,
    /// Ellipticity of the noiseless input-referred state.
    pub r_e_theory: f64,
}

struct Point {
    stats: phonocomb::gaussian::SqueezingStats,
    histogram: String,
    covariance: String,
    r_e_theory: f64,
}

/// Divide each mode's quadratures by √G to refer them to the amplifier input.
fn input_referred(mut s: QuadratureSamples, amp: &AmplifierModel) -> QuadratureSamples {
    let d = 2 * s.n_modes;
    for (i, x) in s.data.iter_mut().enumerate() {
        *x /= amp.gains[(i % d) / 2].sqrt();
    }
    s
}

/// σ₊/σ₋ of I₀ ± I₁ after rotating mode 1 onto the I–I correlation.
fn ellipticity(v: &CovarianceMatrix) -> f64 {
    let m = v.matrix();
    let theta = m[(0, 3)].atan2(m[(0, 2)]);
    let (s, c) = theta.sin_cos();
    let v11 = c * c * m[(2, 2)] + s * s * m[(3, 3)] + 2.0 * s * c * m[(2, 3)];
    let cross = (m[(0, 2)].powi(2) + m[(0, 3)].powi(2)).sqrt();
    let plus = m[(0, 0)] + v11 + 2.0 * cross;
    let minus = m[(0, 0)] + v11 - 2.0 * cross;
    (plus.max(minus) / plus.min(minus)).sqrt()
}

/// One detuning: alternate pump-on and pump-off blocks at the chopping rate
/// from a single random stream.
#[allow(clippy::too_many_arguments)]
fn run_point(
    net: &Network,
    cfg: &LoadedConfig,
    amp_truth: &AmplifierModel,
    amp_assumed: &AmplifierModel,
    delta: f64,
    stream: u64,
) -> CliResult<Point> {
    let c = &cfg.config;
    let s = c.sampling.as_ref().expect("validated");
    let t = c.twomode.as_ref().expect("validated");
    let v_on_in = net.output_state(&[delta, -delta], c.system.temp_k)?;
    let v_on = amplify(&v_on_in, amp_truth)?;
    let v_off = amplify(&thermal_covariance(&net.modes, c.system.temp_k)?, amp_truth)?;

    let cycles = ((s.interval_length_s * t.chop_rate_hz).round() as usize).max(1);
    let block = (s.n_samples / (2 * cycles)).max(1);
    let mut rng = ChaCha20Rng::seed_from_u64(s.seed.expect("validated"));
    rng.set_stream(stream);
    let mut on = sample_with_rng(&v_on, block, &mut rng)?;
    let mut off = sample_with_rng(&v_off, block, &mut rng)?.with_pump_state(PumpState::Off);
    for _ in 1..cycles {
        on.extend(&sample_with_rng(&v_on, block, &mut rng)?)?;
        off.extend(&sample_with_rng(&v_off, block, &mut rng)?.with_pump_state(PumpState::Off))?;
    }
    let on = input_referred(on, amp_assumed);
    let off = input_referred(off, amp_assumed);
    let (_, on) = align_pair_phase(&on, 0, 1)?;
    let stats = squeezing_stats(&on, &off, (0, 1))?;
    let h_on = histogram_2d(&on, 0, 2, t.histogram_bins, t.histogram_half_width)?;
    let h_off = histogram_2d(&off, 0, 2, t.histogram_bins, t.histogram_half_width)?;
    let referred = CovarianceMatrix::from_symmetrized({
        let g: Vec<f64> = (0..4).map(|q| amp_assumed.gains[q / 2].sqrt()).collect();
        let m = v_on.matrix();
        nalgebra::DMatrix::from_fn(4, 4, |r, c| m[(r, c)] / (g[r] * g[c]))
    })?;
    Ok(Point {
        stats,
        histogram: h_on.subtract(&h_off)?.to_csv(),
        covariance: on.covariance()?.to_csv(),
        r_e_theory: ellipticity(&referred),
    })
}

pub fn run(cfg: &LoadedConfig, out: &mut OutputDir) -> CliResult<Value> {
    let t = cfg.config.twomode.as_ref().expect("validated");
    let net = Network::from_config(cfg)?;
    let amps = amplifiers(cfg, &net.modes)?;
    let grid = linspace(t.detuning_start_hz, t.detuning_stop_hz, t.detuning_steps);
    let points: Vec<Point> = grid
        .par_iter()
        .enumerate()
        .map(|(k, d)| run_point(&net, cfg, &amps.truth, &amps.assumed, hz_to_rad(*d), k as u64))
        .collect::<CliResult<_>>()?;

    let mut csv = String::from("detuning_hz,r_e,r_p,sigma_max,sigma_min,sigma_off,r_e_theory\n");
    let mut summary = Vec::with_capacity(points.len());
    for (k, (d, p)) in grid.iter().zip(&points).enumerate() {
        let s = &p.stats;
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{},{}",
            fmt(*d),
            fmt(s.r_e),
            fmt(s.r_p),
            fmt(s.sigma_max),
            fmt(s.sigma_min),
            fmt(s.sigma_off),
            fmt(p.r_e_theory)
        );
        out.write(&format!("histograms_{k:03}.csv"), &p.histogram)?;
        out.write(&format!("covariance_{k:03}.csv"), &p.covariance)?;
        summary.push(DetuningPoint { detuning_hz: *d, r_e: s.r_e, r_p: s.r_p, r_e_theory: p.r_e_theory });
    }
    out.write("twomode_stats.csv", &csv)?;
    Ok(serde_json::json!({
        "modes": net.labels(),
        "n_matches": net.matches.len(),
        "points": summary,
    }))
}
