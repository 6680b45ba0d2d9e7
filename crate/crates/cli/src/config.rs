//! Scenario file schema. Every physical quantity carries its unit in the key.

use std::path::{Path, PathBuf};

use serde::Deserialize;
use toml::Spanned;

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Pipeline {
    Twomode,
    Multimode,
    Calibration,
    Scattering,
}

impl Pipeline {
    pub fn name(self) -> &'static str {
        match self {
            Pipeline::Twomode => "twomode",
            Pipeline::Multimode => "multimode",
            Pipeline::Calibration => "calibration",
            Pipeline::Scattering => "scattering",
        }
    }

    pub fn samples(self) -> bool {
        matches!(self, Pipeline::Twomode | Pipeline::Multimode)
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub pipeline: Pipeline,
    pub output_dir: String,
    pub system: SystemConfig,
    #[serde(default)]
    pub pumps: Vec<Spanned<PumpConfig>>,
    pub probes: Option<ProbesConfig>,
    pub amplifier: Option<AmplifierConfig>,
    pub sampling: Option<SamplingConfig>,
    pub twomode: Option<TwomodeConfig>,
    pub calibration: Option<CalibrationConfig>,
    pub scattering: Option<ScatteringConfig>,
}

fn default_temp() -> f64 {
    0.03
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemConfig {
    /// Phonon temperature of every input port.
    #[serde(default = "default_temp")]
    pub temp_k: f64,
    #[serde(default)]
    pub allow_unstable: bool,
    pub matching_tol_hz: Option<f64>,
    pub modes: Spanned<Vec<ModeConfig>>,
    pub mirror: Option<MirrorConfig>,
    pub materials: Option<MaterialsConfig>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModeConfig {
    pub index: i64,
    pub freq_hz: f64,
    pub loss_ext_hz: f64,
    #[serde(default)]
    pub loss_int_hz: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MirrorConfig {
    pub freq_lc_hz: Option<f64>,
    pub l_j_h: Option<f64>,
    pub c_f: Option<f64>,
    /// Vacuum coupling; estimated from `materials` when absent.
    pub g_vac_hz: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaterialsConfig {
    pub e14_c_per_m2: f64,
    pub eps_f_per_m: f64,
    pub rho_kg_per_m3: f64,
    pub v_saw_m_per_s: f64,
    pub area_m2: f64,
    pub l_p_m: f64,
    pub l_m_m: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PumpConfig {
    pub freq_hz: f64,
    #[serde(default)]
    pub flux_phi0: f64,
    #[serde(default)]
    pub theta_rad: f64,
    /// Uniform |ε|/2π for every pair this pump matches. Without it the
    /// coupling follows from the mirror drive model.
    pub epsilon_hz: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProbesConfig {
    /// Mode `index` values.
    pub modes: Spanned<Vec<i64>>,
    #[serde(default)]
    pub detuning_hz: f64,
}

fn default_cal_tol() -> f64 {
    1e3
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AmplifierConfig {
    pub gain_db: Option<f64>,
    pub added: Option<f64>,
    pub idler_temp_k: Option<f64>,
    #[serde(default)]
    pub sigma_gain_rel: f64,
    #[serde(default)]
    pub sigma_added: f64,
    /// Calibration store used for de-amplification instead of the nominal values.
    pub calibration_path: Option<String>,
    #[serde(default = "default_cal_tol")]
    pub calibration_tol_hz: f64,
}

fn default_intervals() -> usize {
    75
}

fn default_interval_length() -> f64 {
    2.0
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplingConfig {
    pub n_samples: usize,
    pub seed: Option<u64>,
    #[serde(default = "default_intervals")]
    pub interval_count: usize,
    #[serde(default = "default_interval_length")]
    pub interval_length_s: f64,
    /// Random quadrature phase per mode and interval.
    #[serde(default)]
    pub phase_drift: bool,
}

fn default_chop() -> f64 {
    2.0
}

fn default_bins() -> usize {
    41
}

fn default_half_width() -> f64 {
    6.0
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TwomodeConfig {
    pub detuning_start_hz: f64,
    pub detuning_stop_hz: f64,
    pub detuning_steps: usize,
    #[serde(default = "default_chop")]
    pub chop_rate_hz: f64,
    #[serde(default = "default_bins")]
    pub histogram_bins: usize,
    /// Histogram range in input-referred vacuum units.
    #[serde(default = "default_half_width")]
    pub histogram_half_width: f64,
}

fn default_planck_noise() -> f64 {
    0.01
}

fn default_lineshape_points() -> usize {
    21
}

fn default_lineshape_span() -> f64 {
    30e3
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrationConfig {
    /// CSV with columns freq_hz,temp_k,power_w_per_hz. Synthesized when absent.
    pub planck_csv: Option<String>,
    #[serde(default)]
    pub planck_temps_k: Vec<f64>,
    #[serde(default = "default_planck_noise")]
    pub planck_noise_rel: f64,
    /// CSV with columns detuning_hz,c. Synthesized when absent.
    pub lineshape_csv: Option<String>,
    #[serde(default = "default_lineshape_points")]
    pub lineshape_points: usize,
    #[serde(default = "default_lineshape_span")]
    pub lineshape_span_hz: f64,
    #[serde(default)]
    pub lineshape_noise_rel: f64,
    /// Phonon temperature assumed by the lineshape fit.
    #[serde(default = "default_temp")]
    pub t_eff_k: f64,
    #[serde(default)]
    pub sweep_temps_k: Vec<f64>,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScatteringConfig {
    pub pump_center_hz: f64,
    pub pump_count: usize,
    pub spacing_start_hz: f64,
    pub spacing_stop_hz: f64,
    pub spacing_steps: usize,
    #[serde(default)]
    pub flux_phi0: f64,
    pub epsilon_hz: Option<f64>,
    /// Mode `index` values of the reference element (output, input).
    pub reference: Option<Spanned<[i64; 2]>>,
}

/// A parsed scenario with the text it came from, for span diagnostics.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub config: ScenarioConfig,
    pub path: PathBuf,
    pub text: String,
}

fn location(text: &str, offset: usize) -> String {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let col = before.rsplit('\n').next().map_or(0, |l| l.chars().count()) + 1;
    format!("{line}:{col}")
}

impl LoadedConfig {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Config {
            path: path.to_path_buf(),
            location: "0:0".into(),
            message: format!("cannot read scenario: {e}"),
        })?;
        Self::parse(path, text)
    }

    pub fn parse(path: &Path, text: String) -> CliResult<Self> {
        let config: ScenarioConfig = toml::from_str(&text).map_err(|e| CliError::Config {
            path: path.to_path_buf(),
            location: e.span().map_or("0:0".into(), |s| location(&text, s.start)),
            message: e.message().to_string(),
        })?;
        let loaded = Self { config, path: path.to_path_buf(), text };
        loaded.validate()?;
        Ok(loaded)
    }

    /// Error pointing at a byte span of the scenario text.
    pub fn error_at(&self, span: std::ops::Range<usize>, field: &str, message: impl Into<String>) -> CliError {
        CliError::Config {
            path: self.path.clone(),
            location: format!("{} ({field})", location(&self.text, span.start)),
            message: message.into(),
        }
    }

    /// Error for a field without a usable span (e.g. a missing section).
    pub fn error(&self, field: &str, message: impl Into<String>) -> CliError {
        CliError::Config { path: self.path.clone(), location: format!("0:0 ({field})"), message: message.into() }
    }

    pub fn base_dir(&self) -> PathBuf {
        self.path.parent().map(Path::to_path_buf).unwrap_or_default()
    }

    pub fn resolve(&self, rel: &str) -> PathBuf {
        let p = Path::new(rel);
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir().join(p)
        }
    }

    /// Output directory; `override_root` (from the environment) replaces the
    /// scenario's own directory as the root.
    pub fn output_dir(&self, override_root: Option<&Path>) -> PathBuf {
        let out = Path::new(&self.config.output_dir);
        match override_root {
            Some(root) if out.is_absolute() => root.join(out.file_name().unwrap_or_default()),
            Some(root) => root.join(out),
            None => self.resolve(&self.config.output_dir),
        }
    }

    pub fn position_of(&self, index: i64) -> Option<usize> {
        self.config.system.modes.get_ref().iter().position(|m| m.index == index)
    }

    fn validate(&self) -> CliResult<()> {
        let c = &self.config;
        let modes = &c.system.modes;
        if modes.get_ref().is_empty() {
            return Err(self.error_at(modes.span(), "system.modes", "at least one mode is required"));
        }
        let mut seen = std::collections::BTreeSet::new();
        for m in modes.get_ref() {
            if !seen.insert(m.index) {
                return Err(self.error_at(modes.span(), "system.modes", format!("duplicate mode index {}", m.index)));
            }
        }
        if !(c.system.temp_k >= 0.0) {
            return Err(self.error("system.temp_k", "temperature must be nonnegative"));
        }
        if let Some(p) = &c.probes {
            for idx in p.modes.get_ref() {
                if self.position_of(*idx).is_none() {
                    return Err(self.error_at(p.modes.span(), "probes.modes", format!("mode index {idx} is not defined in system.modes")));
                }
            }
            if p.modes.get_ref().is_empty() {
                return Err(self.error_at(p.modes.span(), "probes.modes", "at least one probe mode is required"));
            }
        }
        let with_eps = c.pumps.iter().filter(|p| p.get_ref().epsilon_hz.is_some()).count();
        if with_eps != 0 && with_eps != c.pumps.len() {
            let p = c.pumps.iter().find(|p| p.get_ref().epsilon_hz.is_none()).unwrap();
            return Err(self.error_at(p.span(), "pumps.epsilon_hz", "either every pump or no pump sets epsilon_hz"));
        }
        if with_eps == 0 && !c.pumps.is_empty() && c.system.mirror.is_none() {
            return Err(self.error("system.mirror", "pumps without epsilon_hz need a mirror for the drive model"));
        }
        if c.pipeline.samples() {
            let s = c.sampling.as_ref().ok_or_else(|| self.error("sampling", "sampling section is required"))?;
            if s.seed.is_none() {
                return Err(self.error("sampling.seed", "a seed is required for reproducible sampling"));
            }
            if s.n_samples == 0 || s.interval_count == 0 {
                return Err(self.error("sampling", "n_samples and interval_count must be positive"));
            }
        }
        if c.pipeline != Pipeline::Scattering && c.amplifier.is_none() {
            return Err(self.error("amplifier", "amplifier section is required"));
        }
        if let Some(a) = &c.amplifier {
            if a.calibration_path.is_none() && (a.gain_db.is_none() || a.added.is_none()) {
                return Err(self.error("amplifier", "give gain_db and added, or calibration_path"));
            }
        }
        match c.pipeline {
            Pipeline::Twomode => {
                let t = c.twomode.as_ref().ok_or_else(|| self.error("twomode", "twomode section is required"))?;
                let p = c.probes.as_ref().ok_or_else(|| self.error("probes", "probes section is required"))?;
                if p.modes.get_ref().len() != 2 {
                    return Err(self.error_at(p.modes.span(), "probes.modes", "the twomode pipeline needs exactly two probes"));
                }
                if t.detuning_steps == 0 || t.histogram_bins == 0 {
                    return Err(self.error("twomode", "detuning_steps and histogram_bins must be positive"));
                }
            }
            Pipeline::Multimode => {
                let p = c.probes.as_ref().ok_or_else(|| self.error("probes", "probes section is required"))?;
                if p.modes.get_ref().len() < 2 {
                    return Err(self.error_at(p.modes.span(), "probes.modes", "the multimode pipeline needs two or more probes"));
                }
            }
            Pipeline::Calibration => {
                let cal = c.calibration.as_ref().ok_or_else(|| self.error("calibration", "calibration section is required"))?;
                if cal.planck_csv.is_none() && cal.planck_temps_k.len() < 3 {
                    return Err(self.error("calibration.planck_temps_k", "give planck_csv or at least three temperatures"));
                }
            }
            Pipeline::Scattering => {
                let s = c.scattering.as_ref().ok_or_else(|| self.error("scattering", "scattering section is required"))?;
                if s.spacing_steps == 0 || s.pump_count == 0 {
                    return Err(self.error("scattering", "spacing_steps and pump_count must be positive"));
                }
                if s.epsilon_hz.is_none() && c.system.mirror.is_none() {
                    return Err(self.error("scattering.epsilon_hz", "give epsilon_hz or a mirror"));
                }
                if let Some(r) = &s.reference {
                    for idx in r.get_ref() {
                        if self.position_of(*idx).is_none() {
                            return Err(self.error_at(r.span(), "scattering.reference", format!("mode index {idx} is not defined in system.modes")));
                        }
                    }
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = r#"
pipeline = "scattering"
output_dir = "out"

[system]
modes = [
  { index = 0, freq_hz = 3.85e9, loss_ext_hz = 20e3 },
  { index = 2, freq_hz = 3.8546e9, loss_ext_hz = 20e3 },
]

[scattering]
pump_center_hz = 3.8523e9
pump_count = 1
spacing_start_hz = 0.0
spacing_stop_hz = 0.0
spacing_steps = 1
epsilon_hz = 5e3
"#;

    fn parse(text: &str) -> CliResult<LoadedConfig> {
        LoadedConfig::parse(Path::new("scenario.toml"), text.to_string())
    }

    #[test]
    fn parses_minimal_scenario() {
        let c = parse(BASE).unwrap();
        assert_eq!(c.config.pipeline, Pipeline::Scattering);
        assert_eq!(c.config.system.temp_k, 0.03);
        assert_eq!(c.position_of(2), Some(1));
    }

    #[test]
    fn unknown_key_reports_line() {
        let text = BASE.replace("pump_count = 1", "pump_count = 1\nfreq = 3");
        let e = parse(&text).unwrap_err();
        assert_eq!(e.exit_code(), 2);
        let msg = e.to_string();
        assert!(msg.contains("scenario.toml:14:1"), "{msg}");
    }

    #[test]
    fn missing_probe_mode_points_at_field() {
        let text = format!("{BASE}\n[probes]\nmodes = [0, 5]\n");
        let msg = parse(&text).unwrap_err().to_string();
        assert!(msg.contains("probes.modes") && msg.contains("mode index 5"), "{msg}");
        assert!(msg.contains("scenario.toml:20:9"), "{msg}");
    }

    #[test]
    fn sampling_pipelines_need_a_seed() {
        let text = BASE.replace("pipeline = \"scattering\"", "pipeline = \"multimode\"")
            + "\n[probes]\nmodes = [0, 2]\n[amplifier]\ngain_db = 80\nadded = 0.1\n[sampling]\nn_samples = 10\n";
        let msg = parse(&text).unwrap_err().to_string();
        assert!(msg.contains("sampling.seed"), "{msg}");
    }

    #[test]
    fn output_override() {
        let c = parse(BASE).unwrap();
        assert_eq!(c.output_dir(None), PathBuf::from("out"));
        assert_eq!(c.output_dir(Some(Path::new("/tmp/x"))), PathBuf::from("/tmp/x/out"));
    }
}
