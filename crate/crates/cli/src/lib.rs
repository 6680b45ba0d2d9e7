//! Config-driven scenario runner for the phonocomb toolkit.

pub mod config;
pub mod demo;
pub mod error;
pub mod network;
pub mod pipelines;
pub mod report;

use std::path::Path;

pub use config::{LoadedConfig, Pipeline, ScenarioConfig};
pub use error::{CliError, CliResult};
pub use report::RunReport;

/// Environment variable replacing the scenario directory as the output root.
pub const OUTPUT_ROOT_ENV: &str = "PHONOCOMB_OUT";

/// Parse and check a scenario without running it.
pub fn validate(path: &Path) -> CliResult<LoadedConfig> {
    LoadedConfig::load(path)
}

/// Run a scenario, honoring the output root override from the environment.
pub fn run_scenario(path: &Path) -> CliResult<RunReport> {
    let root = std::env::var_os(OUTPUT_ROOT_ENV).map(std::path::PathBuf::from);
    run_scenario_in(path, root.as_deref())
}

pub fn run_scenario_in(path: &Path, output_root: Option<&Path>) -> CliResult<RunReport> {
    let cfg = LoadedConfig::load(path)?;
    run_loaded(&cfg, output_root)
}

pub fn run_loaded(cfg: &LoadedConfig, output_root: Option<&Path>) -> CliResult<RunReport> {
    let mut inputs = vec![cfg.text.as_bytes().to_vec()];
    for rel in pipelines::referenced_inputs(cfg) {
        let p = cfg.resolve(&rel);
        inputs.push(std::fs::read(&p).map_err(|e| CliError::io(format!("reading {}", p.display()), e))?);
    }
    let parts: Vec<&[u8]> = inputs.iter().map(Vec::as_slice).collect();
    let digest = report::digest(&parts);

    let mut out = report::OutputDir::create(&cfg.output_dir(output_root))?;
    let pipeline = cfg.config.pipeline;
    log::info!("running {} pipeline into {}", pipeline.name(), out.root().display());
    let metrics = match pipeline {
        Pipeline::Twomode => pipelines::twomode::run(cfg, &mut out)?,
        Pipeline::Multimode => pipelines::multimode::run(cfg, &mut out)?,
        Pipeline::Calibration => pipelines::calibration::run(cfg, &mut out)?,
        Pipeline::Scattering => pipelines::scattering::run(cfg, &mut out)?,
    };
    out.finish(pipeline.name(), digest, metrics)
}
