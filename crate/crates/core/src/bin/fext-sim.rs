use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use fext_turbo::harness::{self, ExperimentConfig, ExperimentKind, WORKERS_ENV};
use fext_turbo::Error;

/// Upstream G.fast FEXT simulator: DE-aided turbo channel estimation and
/// multi-user detection.
#[derive(Parser)]
#[command(name = "fext-sim", version, after_help = format!(
    "Worker threads: set {WORKERS_ENV}. Exit codes: 0 success, 2 invalid configuration, \
     3 numerical failure (names tone and seed)."
))]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Per-tone NMSE of the estimators and uncoded SER/BER of the detectors.
    PerTone(Common),
    /// Best-member NMSE/SER per DE generation on selected tones.
    Convergence(Common),
    /// NMSE/BER/SER per outer iteration of the DE turbo receiver.
    Turbo(Common),
    /// Pilot-only NMSE and perfect-CSI coded BER per band prefix.
    Bandwidth(Common),
    /// Perfect-CSI coded BER per loop length.
    LoopLength(Common),
    /// Perfect-CSI coded BER under impulse noise.
    Impulse(Common),
    /// Coded BER with perfect versus pilot-estimated CSI.
    CeError(Common),
    /// DE detector cost evaluations relative to exhaustive search.
    Complexity(Common),
}

#[derive(Args)]
struct Common {
    /// `key = value` configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    loop_length_m: Option<f64>,
    /// Comma-separated list.
    #[arg(long)]
    snr_db: Option<String>,
    /// Comma-separated list.
    #[arg(long)]
    seed: Option<String>,
    /// Use the 4096-tone grid instead of the desk-scale one.
    #[arg(long)]
    full_grid: bool,
    #[arg(long)]
    frames: Option<u64>,
    /// CSV destination; stdout when absent.
    #[arg(long)]
    output: Option<PathBuf>,
    /// Any configuration key, e.g. `--set mud_g_max=50`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

impl Command {
    fn split(self) -> (ExperimentKind, Common) {
        match self {
            Command::PerTone(c) => (ExperimentKind::PerTone, c),
            Command::Convergence(c) => (ExperimentKind::Convergence, c),
            Command::Turbo(c) => (ExperimentKind::Turbo, c),
            Command::Bandwidth(c) => (ExperimentKind::Bandwidth, c),
            Command::LoopLength(c) => (ExperimentKind::LoopLength, c),
            Command::Impulse(c) => (ExperimentKind::Impulse, c),
            Command::CeError(c) => (ExperimentKind::CeError, c),
            Command::Complexity(c) => (ExperimentKind::Complexity, c),
        }
    }
}

fn build_config(kind: ExperimentKind, args: &Common) -> Result<ExperimentConfig, Error> {
    let mut cfg = match &args.config {
        Some(path) => ExperimentConfig::from_file(kind, path)?,
        None => ExperimentConfig::defaults(kind),
    };
    cfg.kind = kind;
    for kv in &args.set {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("--set expects KEY=VALUE, got `{kv}`")))?;
        cfg.set(k.trim(), v)?;
    }
    if let Some(v) = args.loop_length_m {
        cfg.set("loop_length_m", &v.to_string())?;
    }
    if let Some(v) = &args.snr_db {
        cfg.set("snr_db", v)?;
    }
    if let Some(v) = &args.seed {
        cfg.set("seeds", v)?;
    }
    if args.full_grid {
        cfg.set("full_grid", "true")?;
    }
    if let Some(v) = args.frames {
        cfg.frames = v;
    }
    if let Some(p) = &args.output {
        cfg.output = Some(p.clone());
    }
    Ok(cfg)
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Numerical { .. } | Error::Singular(_) => 3,
        Error::Io(_) => 1,
        _ => 2,
    }
}

fn run(kind: ExperimentKind, args: &Common) -> Result<(), Error> {
    let cfg = build_config(kind, args)?;
    let rows = harness::run_experiment(&cfg)?;
    match &cfg.output {
        Some(path) => harness::write_csv(path, &rows)?,
        None => std::io::stdout().write_all(harness::to_csv(&rows)?.as_bytes())?,
    }
    eprintln!("{}: {} rows", kind.as_str(), rows.len());
    Ok(())
}

fn main() -> ExitCode {
    let (kind, args) = Cli::parse().command.split();
    match run(kind, &args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("fext-sim: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
