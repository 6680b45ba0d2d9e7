pub mod calibration;
pub mod multimode;
pub mod scattering;
pub mod twomode;

use phonocomb::gaussian::FitUncertainty;
use phonocomb::units::{bose_occupation, db_to_linear};
use phonocomb::{AmplifierModel, CalibrationStore, ModeSpec};

use crate::config::LoadedConfig;
use crate::error::{CliError, CliResult};

/// Amplifier that produced the synthetic data and the one assumed when
/// de-embedding it. They differ when a calibration store is supplied.
pub struct Amplifiers {
    pub truth: AmplifierModel,
    pub assumed: AmplifierModel,
}

pub fn nominal_amplifier(cfg: &LoadedConfig, modes: &[ModeSpec]) -> CliResult<Option<AmplifierModel>> {
    let a = cfg.config.amplifier.as_ref().ok_or_else(|| cfg.error("amplifier", "amplifier section is required"))?;
    let (Some(gain_db), Some(added)) = (a.gain_db, a.added) else { return Ok(None) };
    let g = db_to_linear(gain_db);
    let n = modes.len();
    let (idler_gains, idler_added) = match a.idler_temp_k {
        Some(t) => (vec![g; n], modes.iter().map(|m| bose_occupation(m.omega, t)).collect()),
        None => (vec![1.0; n], vec![0.0; n]),
    };
    let fit = FitUncertainty { sigma_g: a.sigma_gain_rel * g, sigma_n: a.sigma_added, cov_gn: 0.0 };
    let amp = AmplifierModel::with_idler(vec![g; n], vec![added; n], idler_gains, idler_added)
        .and_then(|m| m.with_fit(vec![Some(fit); n]))
        .map_err(|e| cfg.error("amplifier", e.to_string()))?;
    Ok(Some(amp))
}

pub fn amplifiers(cfg: &LoadedConfig, modes: &[ModeSpec]) -> CliResult<Amplifiers> {
    let a = cfg.config.amplifier.as_ref().expect("validated");
    let nominal = nominal_amplifier(cfg, modes)?;
    let stored = match &a.calibration_path {
        None => None,
        Some(p) => {
            let path = cfg.resolve(p);
            let text = std::fs::read_to_string(&path).map_err(|e| CliError::io(format!("reading {}", path.display()), e))?;
            let store = CalibrationStore::from_json(&text).map_err(|e| cfg.error("amplifier.calibration_path", e.to_string()))?;
            let freqs: Vec<f64> = modes.iter().map(|m| m.omega / (2.0 * std::f64::consts::PI)).collect();
            Some(store.amplifier_for(&freqs, a.calibration_tol_hz)?)
        }
    };
    match (nominal, stored) {
        (Some(truth), Some(assumed)) => Ok(Amplifiers { truth, assumed }),
        (Some(truth), None) => Ok(Amplifiers { assumed: truth.clone(), truth }),
        (None, Some(assumed)) => Ok(Amplifiers { truth: assumed.clone(), assumed }),
        (None, None) => Err(cfg.error("amplifier", "give gain_db and added, or calibration_path")),
    }
}

/// Every file the scenario reads besides itself, in a fixed order.
pub fn referenced_inputs(cfg: &LoadedConfig) -> Vec<String> {
    let mut out = Vec::new();
    if let Some(p) = cfg.config.amplifier.as_ref().and_then(|a| a.calibration_path.clone()) {
        out.push(p);
    }
    if let Some(c) = &cfg.config.calibration {
        out.extend(c.planck_csv.clone());
        out.extend(c.lineshape_csv.clone());
    }
    out
}

pub fn fmt(x: f64) -> String {
    format!("{x:.9e}")
}
