//! Per-frequency calibration results as JSON.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::planck::PlanckFit;
use crate::error::{Error, Result};
use crate::gaussian::{AmplifierModel, FitUncertainty};
use crate::units::{bose_occupation, hz_to_rad};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationEntry {
    pub freq_hz: f64,
    pub gain: f64,
    pub added: f64,
    pub uncertainty: Option<FitUncertainty>,
}

/// Calibration entries keyed by frequency rounded to the nearest hertz. When
/// `idler_temperature_k` is set, amplifiers built from the store carry an idler
/// with G_I = G and thermal occupation at that temperature.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CalibrationStore {
    pub idler_temperature_k: Option<f64>,
    pub entries: BTreeMap<u64, CalibrationEntry>,
}

impl CalibrationStore {
    pub fn new(idler_temperature_k: Option<f64>) -> Self {
        Self { idler_temperature_k, entries: BTreeMap::new() }
    }

    pub fn insert(&mut self, entry: CalibrationEntry) {
        self.entries.insert(entry.freq_hz.round() as u64, entry);
    }

    pub fn insert_fit(&mut self, fit: &PlanckFit) {
        self.insert(CalibrationEntry {
            freq_hz: fit.freq_hz,
            gain: fit.gain,
            added: fit.added,
            uncertainty: Some(fit.uncertainty()),
        });
    }

    /// Entry nearest to `freq_hz`, if within `tol_hz`.
    pub fn lookup(&self, freq_hz: f64, tol_hz: f64) -> Option<&CalibrationEntry> {
        self.entries
            .values()
            .map(|e| ((e.freq_hz - freq_hz).abs(), e))
            .filter(|(d, _)| *d <= tol_hz)
            .min_by(|a, b| a.0.total_cmp(&b.0))
            .map(|(_, e)| e)
    }

    pub fn amplifier_for(&self, freqs_hz: &[f64], tol_hz: f64) -> Result<AmplifierModel> {
        let entries = freqs_hz
            .iter()
            .map(|&f| {
                self.lookup(f, tol_hz)
                    .ok_or_else(|| Error::InsufficientData(format!("no calibration within {tol_hz} Hz of {f} Hz")))
            })
            .collect::<Result<Vec<_>>>()?;
        let gains: Vec<f64> = entries.iter().map(|e| e.gain).collect();
        let added = entries.iter().map(|e| e.added).collect();
        let (idler_gains, idler_added) = match self.idler_temperature_k {
            Some(t) => (gains.clone(), freqs_hz.iter().map(|&f| bose_occupation(hz_to_rad(f), t)).collect()),
            None => (vec![1.0; gains.len()], vec![0.0; gains.len()]),
        };
        AmplifierModel::with_idler(gains, added, idler_gains, idler_added)?
            .with_fit(entries.iter().map(|e| e.uncertainty).collect())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("calibration store serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::InvalidParameter(format!("calibration store: {e}")))
    }
}
