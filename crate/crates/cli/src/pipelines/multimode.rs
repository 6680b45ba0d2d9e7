//! Interval-by-interval entanglement analysis of a synthesized multimode record.

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::Value;

use phonocomb::entanglement::{propagate_errors, significance, test_all_bipartitions};
use phonocomb::gaussian::{amplify, deamplify, sample_with_rng};
use phonocomb::reconstruct::reconstruct_physical;
use phonocomb::{CovarianceMatrix, EntanglementReport};

use super::{amplifiers, fmt, Amplifiers};
use crate::config::LoadedConfig;
use crate::error::CliResult;
use crate::network::Network;
use crate::report::OutputDir;

const PHYSICAL_TOL: f64 = 1e-9;

struct Interval {
    measured: CovarianceMatrix,
    reconstructed: CovarianceMatrix,
    objective: f64,
    converged: bool,
    reports: Vec<EntanglementReport>,
}

#[derive(Debug, Serialize)]
pub struct TableRow {
    pub bipartition: String,
    /// E of the noiseless network output.
    pub e_theory: f64,
    /// Inverse-variance weighted E over intervals.
    pub e_weighted: f64,
    pub sigma: f64,
    pub sigma_w: f64,
    pub intervals_negative: usize,
    pub entangled: bool,
}

fn run_interval(
    v_meas: &CovarianceMatrix,
    amps: &Amplifiers,
    n_samples: usize,
    seed: u64,
    stream: u64,
    phase_drift: bool,
) -> CliResult<Interval> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    let n = v_meas.n_modes();
    let source = if phase_drift {
        let angles: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..std::f64::consts::TAU)).collect();
        v_meas.rotate_modes(&angles)?
    } else {
        v_meas.clone()
    };
    let samples = sample_with_rng(&source, n_samples, &mut rng)?;
    let raw = samples.covariance()?;
    let sem = samples.covariance_sem()?;
    let measured = deamplify(&raw, &amps.assumed)?;
    let sigma = propagate_errors(&raw, &amps.assumed, &sem)?;
    let rec = reconstruct_physical(&measured, &sigma, PHYSICAL_TOL)?;
    let reports = test_all_bipartitions(&rec.v, Some(&sigma))?;
    Ok(Interval { measured, reconstructed: rec.v, objective: rec.objective, converged: rec.converged, reports })
}

fn mean(vs: impl Iterator<Item = CovarianceMatrix>, count: usize) -> CliResult<CovarianceMatrix> {
    let sum = vs.map(CovarianceMatrix::into_matrix).reduce(|a, b| a + b).expect("at least one interval");
    Ok(CovarianceMatrix::from_symmetrized(sum / count as f64)?)
}

pub fn run(cfg: &LoadedConfig, out: &mut OutputDir) -> CliResult<Value> {
    let c = &cfg.config;
    let sampling = c.sampling.as_ref().expect("validated");
    let seed = sampling.seed.expect("validated");
    let net = Network::from_config(cfg)?;
    let detune = vec![phonocomb::units::hz_to_rad(c.probes.as_ref().map_or(0.0, |p| p.detuning_hz)); net.modes.len()];
    let margin_hz = net.stability_margin_hz(&detune)?;
    let v_theory = net.output_state(&detune, c.system.temp_k)?;
    let amps = amplifiers(cfg, &net.modes)?;
    let v_meas = amplify(&v_theory, &amps.truth)?;
    let labels = net.labels();

    let intervals: Vec<Interval> = (0..sampling.interval_count)
        .into_par_iter()
        .map(|i| run_interval(&v_meas, &amps, sampling.n_samples, seed, i as u64, sampling.phase_drift))
        .collect::<CliResult<_>>()?;

    let theory = test_all_bipartitions(&v_theory, None)?;
    let mut table = Vec::with_capacity(theory.len());
    for (b, th) in theory.iter().enumerate() {
        let pairs: Vec<(f64, f64)> = intervals
            .iter()
            .map(|iv| (iv.reports[b].value_e, iv.reports[b].sigma.expect("sigma supplied")))
            .collect();
        let w = significance(&pairs)?;
        table.push(TableRow {
            bipartition: th.bipartition.label(&labels),
            e_theory: th.value_e,
            e_weighted: w.value_e,
            sigma: w.sigma,
            sigma_w: w.significance,
            intervals_negative: pairs.iter().filter(|(e, _)| *e < 0.0).count(),
            entangled: w.significance < 0.0,
        });
    }

    let mut csv = String::from("interval,objective,converged");
    for row in &table {
        let _ = write!(csv, ",e[{}],sigma[{}]", row.bipartition, row.bipartition);
    }
    csv.push('\n');
    for (i, iv) in intervals.iter().enumerate() {
        let _ = write!(csv, "{i},{},{}", fmt(iv.objective), u8::from(iv.converged));
        for r in &iv.reports {
            let _ = write!(csv, ",{},{}", fmt(r.value_e), fmt(r.sigma.unwrap_or(0.0)));
        }
        csv.push('\n');
    }
    let count = intervals.len();
    out.write("covariance_theory.csv", &v_theory.to_csv())?;
    out.write("covariance_measured_mean.csv", &mean(intervals.iter().map(|i| i.measured.clone()), count)?.to_csv())?;
    out.write(
        "covariance_reconstructed_mean.csv",
        &mean(intervals.iter().map(|i| i.reconstructed.clone()), count)?.to_csv(),
    )?;
    out.write("intervals.csv", &csv)?;
    out.write_json("entanglement_table.json", &table)?;

    let objectives: Vec<f64> = intervals.iter().map(|i| i.objective).collect();
    if intervals.iter().any(|i| !i.converged) {
        log::warn!("reconstruction did not fully converge in some intervals");
    }
    Ok(serde_json::json!({
        "modes": labels,
        "n_matches": net.matches.len(),
        "stability_margin_hz": margin_hz,
        "intervals": count,
        "samples_per_interval": sampling.n_samples,
        "mean_objective": objectives.iter().sum::<f64>() / count as f64,
        "max_objective": objectives.iter().copied().fold(0.0, f64::max),
        "bipartitions": table,
    }))
}
