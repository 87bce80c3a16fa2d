use clap::{Parser, Subcommand, ValueEnum};
use gridfuse::config::PipelineConfig;
use gridfuse::harness::{inspect, run_pipeline, write_artifacts, HarnessError, OutputFormat, RunOptions};
use gridfuse::sim::{canned, ScenarioSpec, SimError, CANNED};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

const EXIT_CODES: &str = "\
Exit codes:
  0  success
  2  configuration error (bad flag, unknown override key, unreadable path)
  3  scenario error (malformed or invalid scenario)
  4  internal invariant violated

Errors are printed to stderr as one JSON object with `error` and `message`.
Set GRIDFUSE_LOG (error, warn, info, debug, trace) to control logging.";

#[derive(Parser)]
#[command(name = "gridfuse", version, about = "Grid object extraction and confidence-gated fusion on simulated scenarios", after_help = EXIT_CODES)]
struct Cli {
    /// Raise log verbosity (repeatable); GRIDFUSE_LOG takes precedence.
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum LogFormat {
    Jsonl,
    Csv,
}

#[derive(Clone, Copy, ValueEnum)]
enum DumpFormat {
    Text,
    Jsonl,
    Csv,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario through the pipeline and write logs, metrics and plot data.
    #[command(after_help = EXIT_CODES)]
    Run {
        /// Canned scenario name or path to a scenario JSON file.
        #[arg(long)]
        scenario: String,
        /// Output directory.
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Replaces the scenario seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Configuration file; defaults to the built-in defaults.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Configuration override `section.key=value` (repeatable).
        #[arg(long = "override", value_name = "KEY=VAL")]
        overrides: Vec<String>,
        /// Process at most this many grid frames.
        #[arg(long)]
        frames: Option<usize>,
        /// `csv` also writes frames.csv and confidence.csv.
        #[arg(long, value_enum, default_value = "jsonl")]
        format: LogFormat,
    },
    /// Print the meta objects and scored candidates of one logged frame.
    #[command(after_help = EXIT_CODES)]
    Inspect {
        /// Run output directory or frames.jsonl path.
        log: PathBuf,
        /// Frame index.
        #[arg(long)]
        frame: usize,
        #[arg(long, value_enum, default_value = "text")]
        format: DumpFormat,
    },
    /// Print a canned scenario as JSON, or list the canned scenarios.
    Scenario {
        name: Option<String>,
    },
}

fn load_scenario(arg: &str) -> Result<ScenarioSpec, HarnessError> {
    if let Some(spec) = canned(arg) {
        return Ok(spec);
    }
    match ScenarioSpec::load(Path::new(arg)) {
        Ok(spec) => Ok(spec),
        Err(SimError::Io { path, message }) => Err(HarnessError::Io { path, message }),
        Err(e) => Err(HarnessError::Scenario(e)),
    }
}

fn run(cli: Cli) -> Result<(), HarnessError> {
    match cli.command {
        Command::Run { scenario, out, seed, config, overrides, frames, format } => {
            let base = match &config {
                Some(path) => PipelineConfig::load(path)?,
                None => PipelineConfig::defaults(),
            };
            let config = base.with_overrides(&overrides)?;
            let mut spec = load_scenario(&scenario)?;
            if let Some(seed) = seed {
                spec.seed = seed;
            }
            log::info!("running {} for {} s", spec.name, spec.duration);
            let output = run_pipeline(&RunOptions { spec, config, frames })?;
            let format = match format {
                LogFormat::Jsonl => OutputFormat::Jsonl,
                LogFormat::Csv => OutputFormat::Csv,
            };
            write_artifacts(&out, &output, format)?;
            for (k, v) in output.report.metrics() {
                println!("{k}={v}");
            }
            println!("created_metas={}", output.created_metas);
            Ok(())
        }
        Command::Inspect { log, frame, format } => {
            let format = match format {
                DumpFormat::Text => OutputFormat::Text,
                DumpFormat::Jsonl => OutputFormat::Jsonl,
                DumpFormat::Csv => OutputFormat::Csv,
            };
            print!("{}", inspect(&log, frame, format)?);
            Ok(())
        }
        Command::Scenario { name } => {
            match name {
                None => CANNED.iter().for_each(|n| println!("{n}")),
                Some(n) => {
                    let spec = load_scenario(&n)?;
                    println!("{}", serde_json::to_string_pretty(&spec).expect("scenarios serialize"));
                }
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        2 => "debug",
        _ => "trace",
    };
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("GRIDFUSE_LOG", level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let msg = serde_json::json!({ "error": e.kind(), "message": e.to_string() });
            eprintln!("{msg}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
