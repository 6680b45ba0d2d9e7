//! Scattering-matrix magnitudes versus pump-comb spacing.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde_json::{json, Value};

use phonocomb::units::hz_to_rad;
use phonocomb::PumpTone;

use super::fmt;
use crate::config::LoadedConfig;
use crate::error::CliResult;
use crate::network::{mirror, probe_modes, Coupling, Network};
use crate::report::{linspace, OutputDir};

struct Step {
    table: String,
    n_matches: usize,
    margin_hz: f64,
    max_db: f64,
}

pub fn run(cfg: &LoadedConfig, out: &mut OutputDir) -> CliResult<Value> {
    let s = cfg.config.scattering.as_ref().expect("validated");
    let modes = probe_modes(cfg)?;
    let coupling = match s.epsilon_hz {
        Some(eps) => Coupling::Ideal(vec![hz_to_rad(eps); s.pump_count]),
        None => Coupling::Drive(mirror(cfg)?.expect("validated")),
    };
    let labels: Vec<i64> = modes.iter().map(|m| m.index).collect();
    let reference = match &s.reference {
        Some(r) => {
            let pos = |idx: i64| labels.iter().position(|l| *l == idx);
            match (pos(r.get_ref()[0]), pos(r.get_ref()[1])) {
                (Some(a), Some(b)) => (a, b),
                _ => return Err(cfg.error_at(r.span(), "scattering.reference", "reference modes must be probe modes")),
            }
        }
        None => (0, 0),
    };
    let spacings = linspace(s.spacing_start_hz, s.spacing_stop_hz, s.spacing_steps);
    let steps: Vec<Step> = spacings
        .par_iter()
        .map(|&spacing| {
            let center = (s.pump_count as f64 - 1.0) / 2.0;
            let pumps = (0..s.pump_count)
                .map(|p| PumpTone::from_hz(s.pump_center_hz + (p as f64 - center) * spacing, s.flux_phi0, 0.0))
                .collect::<phonocomb::Result<Vec<_>>>()?;
            let net = Network::build(cfg, modes.clone(), pumps, coupling.clone())?;
            let zero = vec![0.0; modes.len()];
            let sp = net.scattering(&zero)?;
            let max = sp.s.iter().map(|z| z.norm()).fold(0.0, f64::max);
            Ok(Step {
                table: sp.magnitude_db_csv(&labels, reference)?,
                n_matches: net.matches.len(),
                margin_hz: net.stability_margin_hz(&zero)?,
                max_db: 20.0 * max.log10(),
            })
        })
        .collect::<CliResult<_>>()?;

    let mut csv = String::from("spacing_hz,n_matches,stability_margin_hz,max_magnitude_db\n");
    for (k, (sp, st)) in spacings.iter().zip(&steps).enumerate() {
        out.write(&format!("scattering_{k:03}.csv"), &st.table)?;
        let _ = writeln!(csv, "{},{},{},{}", fmt(*sp), st.n_matches, fmt(st.margin_hz), fmt(st.max_db));
    }
    out.write("scattering_summary.csv", &csv)?;
    let peak = steps.iter().map(|s| s.max_db).fold(f64::NEG_INFINITY, f64::max);
    Ok(json!({
        "modes": labels,
        "steps": steps.len(),
        "max_matches": steps.iter().map(|s| s.n_matches).max().unwrap_or(0),
        "peak_magnitude_db": peak,
    }))
}
