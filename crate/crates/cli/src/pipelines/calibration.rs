//! Amplifier calibration: Planck noise fits, the correlation lineshape fit
//! and the phonon-temperature sweep of the PPT eigenvalue.

use std::fmt::Write as _;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Deserialize;
use serde_json::{json, Value};

use phonocomb::calibration::{
    added_noise_from_pump_off, c_lineshape, fit_gain_from_correlations, pair_output_state, planck_fit, planck_power,
    ppt_temperature_sweep, PlanckFit,
};
use phonocomb::gaussian::{amplify, thermal_covariance};
use phonocomb::units::{hz_to_rad, rad_to_hz};
use phonocomb::{AmplifierModel, CalibrationStore, ModeSpec};

use super::{fmt, nominal_amplifier};
use crate::config::{CalibrationConfig, LoadedConfig};
use crate::error::{CliError, CliResult};
use crate::network::Network;
use crate::report::{linspace, OutputDir};

#[derive(Debug, Deserialize)]
struct PlanckRow {
    freq_hz: f64,
    temp_k: f64,
    power_w_per_hz: f64,
}

#[derive(Debug, Deserialize)]
struct LineshapeRow {
    detuning_hz: f64,
    c: f64,
}

fn read_csv<T: for<'de> Deserialize<'de>>(cfg: &LoadedConfig, rel: &str, field: &str) -> CliResult<Vec<T>> {
    let path = cfg.resolve(rel);
    let mut reader = csv::Reader::from_path(&path).map_err(|e| csv_error(cfg, &path, field, e))?;
    reader.deserialize().collect::<Result<Vec<T>, _>>().map_err(|e| csv_error(cfg, &path, field, e))
}

fn csv_error(cfg: &LoadedConfig, path: &Path, field: &str, e: csv::Error) -> CliError {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => CliError::io(format!("reading {}", path.display()), io),
        kind => cfg.error(field, format!("{}: {kind:?}", path.display())),
    }
}

fn truth(cfg: &LoadedConfig, modes: &[ModeSpec], what: &str) -> CliResult<AmplifierModel> {
    nominal_amplifier(cfg, modes)?
        .ok_or_else(|| cfg.error("amplifier", format!("synthesizing {what} needs gain_db and added")))
}

/// Per-frequency (temps, powers), either read or synthesized with
/// multiplicative Gaussian noise.
fn planck_data(cfg: &LoadedConfig, cal: &CalibrationConfig, modes: &[ModeSpec]) -> CliResult<Vec<(f64, Vec<f64>, Vec<f64>)>> {
    if let Some(rel) = &cal.planck_csv {
        let rows: Vec<PlanckRow> = read_csv(cfg, rel, "calibration.planck_csv")?;
        let mut groups: Vec<(f64, Vec<f64>, Vec<f64>)> = Vec::new();
        for r in rows {
            match groups.iter_mut().find(|g| g.0 == r.freq_hz) {
                Some(g) => {
                    g.1.push(r.temp_k);
                    g.2.push(r.power_w_per_hz);
                }
                None => groups.push((r.freq_hz, vec![r.temp_k], vec![r.power_w_per_hz])),
            }
        }
        return Ok(groups);
    }
    let amp = truth(cfg, modes, "Planck data")?;
    let mut rng = ChaCha20Rng::seed_from_u64(cal.seed);
    Ok(modes
        .iter()
        .enumerate()
        .map(|(i, m)| {
            let f = rad_to_hz(m.omega);
            let powers = cal
                .planck_temps_k
                .iter()
                .map(|&t| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    planck_power(t, f, amp.gains[i], amp.added[i]) * (1.0 + cal.planck_noise_rel * z)
                })
                .collect();
            (f, cal.planck_temps_k.clone(), powers)
        })
        .collect())
}

fn planck_section(
    cfg: &LoadedConfig,
    cal: &CalibrationConfig,
    modes: &[ModeSpec],
    out: &mut OutputDir,
) -> CliResult<Vec<PlanckFit>> {
    let data = planck_data(cfg, cal, modes)?;
    let mut raw = String::from("freq_hz,temp_k,power_w_per_hz\n");
    let mut fits = Vec::with_capacity(data.len());
    for (f, temps, powers) in &data {
        for (t, p) in temps.iter().zip(powers) {
            let _ = writeln!(raw, "{},{},{}", fmt(*f), fmt(*t), fmt(*p));
        }
        fits.push(planck_fit(temps, powers, *f)?);
    }
    let mut table = String::from("freq_hz,gain,added,sigma_gain,sigma_added,cov_gain_added,residual_rms\n");
    let idler = cfg.config.amplifier.as_ref().and_then(|a| a.idler_temp_k);
    let mut store = CalibrationStore::new(idler);
    for fit in &fits {
        let u = fit.uncertainty();
        let _ = writeln!(
            table,
            "{},{},{},{},{},{},{}",
            fmt(fit.freq_hz),
            fmt(fit.gain),
            fmt(fit.added),
            fmt(u.sigma_g),
            fmt(u.sigma_n),
            fmt(u.cov_gn),
            fmt(fit.residual_rms())
        );
        store.insert_fit(fit);
    }
    out.write("planck_data.csv", &raw)?;
    out.write("planck_fits.csv", &table)?;
    out.write("calibration.json", &(store.to_json() + "\n"))?;
    Ok(fits)
}

fn lineshape_section(
    cfg: &LoadedConfig,
    cal: &CalibrationConfig,
    net: &Network,
    out: &mut OutputDir,
) -> CliResult<Value> {
    let modes: [ModeSpec; 2] = [net.modes[0], net.modes[1]];
    let epsilon = net.coupling_matrix(&[0.0, 0.0])?.b_block()[(0, 1)].norm();
    let temp = cfg.config.system.temp_k;
    let data: Vec<(f64, f64)> = match &cal.lineshape_csv {
        Some(rel) => read_csv::<LineshapeRow>(cfg, rel, "calibration.lineshape_csv")?
            .into_iter()
            .map(|r| (hz_to_rad(r.detuning_hz), r.c))
            .collect(),
        None => {
            let amp = truth(cfg, &net.modes, "lineshape data")?;
            let grid = linspace(-cal.lineshape_span_hz, cal.lineshape_span_hz, cal.lineshape_points);
            let peak = c_lineshape(0.0, amp.gains[0], epsilon, &modes, temp)?;
            let mut rng = ChaCha20Rng::seed_from_u64(cal.seed);
            rng.set_stream(1);
            grid.iter()
                .map(|&d| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    let c = c_lineshape(hz_to_rad(d), amp.gains[0], epsilon, &modes, temp)?;
                    Ok((hz_to_rad(d), c + cal.lineshape_noise_rel * peak * z))
                })
                .collect::<CliResult<_>>()?
        }
    };
    let fit = fit_gain_from_correlations(&data, &modes, cal.t_eff_k)?;
    let mut csv = String::from("detuning_hz,c,c_fit\n");
    for (d, c) in &data {
        let model = c_lineshape(*d, fit.gain, fit.epsilon, &modes, cal.t_eff_k)?;
        let _ = writeln!(csv, "{},{},{}", fmt(rad_to_hz(*d)), fmt(*c), fmt(model));
    }
    out.write("lineshape.csv", &csv)?;
    let mut metrics = json!({
        "gain": fit.gain,
        "sigma_gain": fit.covariance[(0, 0)].sqrt(),
        "epsilon_hz": rad_to_hz(fit.epsilon),
        "sigma_epsilon_hz": rad_to_hz(fit.covariance[(1, 1)].sqrt()),
    });

    // Synthetic pump-off and pump-on states for the added noise and the sweep.
    let Ok(amp) = truth(cfg, &net.modes, "pump states") else { return Ok(metrics) };
    let pair_amp = AmplifierModel::uniform(2, amp.gains[0], amp.added[0])?;
    let v_off = amplify(&thermal_covariance(&modes, temp)?, &pair_amp)?;
    let added = added_noise_from_pump_off(&v_off, &modes, fit.gain, cal.t_eff_k)?;
    metrics["added"] = json!(added);
    if !cal.sweep_temps_k.is_empty() {
        let v_on = amplify(&pair_output_state(0.0, epsilon, &modes, temp)?, &pair_amp)?;
        let sweep = ppt_temperature_sweep(&v_on, &v_off, &data, &modes, &cal.sweep_temps_k)?;
        let mut csv = String::from("temp_k,gain,epsilon_hz,added,lambda_min\n");
        for p in &sweep.points {
            let _ = writeln!(
                csv,
                "{},{},{},{},{}",
                fmt(p.temperature),
                fmt(p.gain),
                fmt(rad_to_hz(p.epsilon)),
                fmt(p.added),
                fmt(p.lambda_min)
            );
        }
        out.write("ppt_sweep.csv", &csv)?;
        if let Some(t) = sweep.crossing {
            metrics["ppt_crossing_k"] = json!(t);
        }
    }
    Ok(metrics)
}

pub fn run(cfg: &LoadedConfig, out: &mut OutputDir) -> CliResult<Value> {
    let cal = cfg.config.calibration.as_ref().expect("validated");
    let net = Network::from_config(cfg)?;
    let fits = planck_section(cfg, cal, &net.modes, out)?;
    let planck: Vec<Value> = fits
        .iter()
        .map(|f| {
            let u = f.uncertainty();
            json!({ "freq_hz": f.freq_hz, "gain": f.gain, "added": f.added, "sigma_gain": u.sigma_g, "sigma_added": u.sigma_n })
        })
        .collect();
    let mut metrics = json!({ "planck": planck });
    if net.modes.len() == 2 && !net.matches.is_empty() {
        metrics["lineshape"] = lineshape_section(cfg, cal, &net, out)?;
    } else {
        log::info!("lineshape fit skipped: it needs two probe modes coupled by a pump");
    }
    Ok(metrics)
}
