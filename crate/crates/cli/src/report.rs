//! Output directory bookkeeping and the run report.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, PartialEq, Serialize, serde::Deserialize)]
pub struct RunReport {
    pub pipeline: String,
    /// SHA-256 of the scenario text followed by every input file it references.
    pub inputs_digest: String,
    /// Files written, relative to the output directory, sorted.
    pub files: Vec<String>,
    pub metrics: Value,
}

/// Collects written files for the manifest.
pub struct OutputDir {
    root: PathBuf,
    files: Vec<String>,
}

impl OutputDir {
    pub fn create(root: &Path) -> CliResult<Self> {
        std::fs::create_dir_all(root).map_err(|e| CliError::io(format!("creating {}", root.display()), e))?;
        Ok(Self { root: root.to_path_buf(), files: Vec::new() })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn write(&mut self, name: &str, contents: &str) -> CliResult<()> {
        let path = self.root.join(name);
        std::fs::write(&path, contents).map_err(|e| CliError::io(format!("writing {}", path.display()), e))?;
        self.files.push(name.to_string());
        Ok(())
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> CliResult<()> {
        let text = serde_json::to_string_pretty(value).expect("report values serialize");
        self.write(name, &(text + "\n"))
    }

    /// Write report.json and return the report.
    pub fn finish(mut self, pipeline: &str, inputs_digest: String, metrics: Value) -> CliResult<RunReport> {
        check_finite(&metrics, "metrics")?;
        self.files.push("report.json".into());
        self.files.sort();
        self.files.dedup();
        let report = RunReport { pipeline: pipeline.into(), inputs_digest, files: self.files.clone(), metrics };
        let text = serde_json::to_string_pretty(&report).expect("report serializes");
        let path = self.root.join("report.json");
        std::fs::write(&path, text + "\n").map_err(|e| CliError::io(format!("writing {}", path.display()), e))?;
        Ok(report)
    }
}

/// serde_json writes non-finite floats as null, so a null anywhere in the
/// metrics means a NaN or infinity slipped through.
fn check_finite(v: &Value, at: &str) -> CliResult<()> {
    match v {
        Value::Null => Err(CliError::Numerical(phonocomb::Error::InvalidParameter(format!("metric {at} is not finite")))),
        Value::Array(a) => a.iter().enumerate().try_for_each(|(i, x)| check_finite(x, &format!("{at}[{i}]"))),
        Value::Object(o) => o.iter().try_for_each(|(k, x)| check_finite(x, &format!("{at}.{k}"))),
        _ => Ok(()),
    }
}

pub fn digest(parts: &[&[u8]]) -> String {
    let mut h = Sha256::new();
    for p in parts {
        h.update((p.len() as u64).to_le_bytes());
        h.update(p);
    }
    h.finalize().iter().fold(String::with_capacity(64), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

/// Evenly spaced grid including both ends; a single step gives `start`.
pub fn linspace(start: f64, stop: f64, steps: usize) -> Vec<f64> {
    if steps <= 1 {
        return vec![start];
    }
    (0..steps).map(|i| start + (stop - start) * i as f64 / (steps - 1) as f64).collect()
}
