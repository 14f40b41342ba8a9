// `!(x > 0.0)` style checks are deliberate: they reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use rgflow::RgError;
use thiserror::Error;

mod config;
mod scenario;

use config::RunConfig;
use scenario::Report;

/// Renormalization-group runs for nonlinear heat-type flows.
///
/// Exit status: 0 on success, 2 on invalid configuration or violated
/// hypotheses, 3 on numerical or I/O failure.
#[derive(Parser, Debug)]
#[command(version, about)]
struct Args {
    /// Flat JSON config file
    #[arg(long)]
    config: Option<PathBuf>,

    /// validate-kernel, run-linear, run-rg, run-direct, compare or constants
    #[arg(long)]
    scenario: Option<String>,

    /// Output directory; overrides `out` from the config
    #[arg(long)]
    out: Option<PathBuf>,

    /// key=value, applied after the config file (repeatable)
    #[arg(long = "override", value_name = "KEY=VALUE")]
    overrides: Vec<String>,

    /// Print the canonical config and exit
    #[arg(long)]
    print_config: bool,
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Engine(#[from] RgError),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Engine(e) if e.is_hypothesis_violation() => 2,
            CliError::Engine(RgError::Io(_)) | CliError::Io(_) => 3,
            CliError::Engine(_) => 3,
        }
    }
}

fn load(args: &Args) -> Result<RunConfig, CliError> {
    let base = match &args.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    let mut overrides = args.overrides.clone();
    if let Some(s) = &args.scenario {
        overrides.push(format!("scenario={s}"));
    }
    if let Some(o) = &args.out {
        overrides.push(format!("out={}", serde_json::to_string(&o.display().to_string()).expect("string")));
    }
    base.with_overrides(&overrides)
}

fn set_threads() -> Result<(), CliError> {
    let Ok(raw) = std::env::var("RGFLOW_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::Config(format!("RGFLOW_THREADS must be a positive integer, got '{raw}'")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Config(format!("thread pool: {e}")))
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let args = Args::parse();
    if let Err(e) = set_threads() {
        eprintln!("error: {e}");
        return ExitCode::from(e.exit_code() as u8);
    }
    let cfg = match load(&args) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(e.exit_code() as u8);
        }
    };
    if args.print_config {
        println!("{}", cfg.canonical());
        return ExitCode::SUCCESS;
    }
    let dir = PathBuf::from(&cfg.out);
    if let Err(e) = std::fs::create_dir_all(&dir) {
        eprintln!("error: cannot create {}: {e}", dir.display());
        return ExitCode::from(3);
    }
    let mut report = Report::new(&dir);
    let outcome = cfg.resolve().and_then(|res| scenario::run(&cfg, &res, &mut report));
    let manifest = report.into_manifest(&cfg, &outcome);
    if let Err(e) = rgflow::io::write_json(&manifest, &dir.join("manifest.json")) {
        eprintln!("error: writing manifest: {e}");
        return ExitCode::from(3);
    }
    match outcome {
        Ok(()) => {
            println!("{}: ok, manifest at {}", manifest.scenario, dir.join("manifest.json").display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
