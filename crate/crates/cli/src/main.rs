use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use phonocomb_cli::{demo::demo_config, CliError, Pipeline};

#[derive(Parser)]
#[command(name = "phonocomb", version, about = "Run phonon-comb simulation and analysis scenarios")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario and write its report. PHONOCOMB_OUT overrides the output root.
    Run { config: PathBuf },
    /// Parse and check a scenario without running it.
    Validate { config: PathBuf },
    /// Print a ready-made scenario for a pipeline.
    Demo {
        pipeline: DemoPipeline,
        /// Write to this file instead of stdout.
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum DemoPipeline {
    Twomode,
    Multimode,
    Calibration,
    Scattering,
}

impl From<DemoPipeline> for Pipeline {
    fn from(p: DemoPipeline) -> Self {
        match p {
            DemoPipeline::Twomode => Pipeline::Twomode,
            DemoPipeline::Multimode => Pipeline::Multimode,
            DemoPipeline::Calibration => Pipeline::Calibration,
            DemoPipeline::Scattering => Pipeline::Scattering,
        }
    }
}

fn execute(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Run { config } => {
            let report = phonocomb_cli::run_scenario(&config)?;
            println!("{}", serde_json::to_string_pretty(&report).expect("report serializes"));
        }
        Command::Validate { config } => {
            let cfg = phonocomb_cli::validate(&config)?;
            println!("{}: valid {} scenario", config.display(), cfg.config.pipeline.name());
        }
        Command::Demo { pipeline, output } => {
            let text = demo_config(pipeline.into());
            match output {
                Some(path) => std::fs::write(&path, text).map_err(|e| CliError::io(format!("writing {}", path.display()), e))?,
                None => std::io::stdout().write_all(text.as_bytes()).map_err(|e| CliError::io("writing stdout", e))?,
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
