use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use higgslab::output::write_artifacts;
use higgslab::{run, Command, ConfigError, ExperimentConfig, LabError};

/// Solve cyclic Toda metrics on a disk, verify boundary-layer decay and
/// integrate parallel transport along rays.
#[derive(Parser, Debug)]
#[command(name = "higgslab", version)]
struct Cli {
    #[command(subcommand)]
    command: Sub,
}

#[derive(clap::Args, Debug)]
struct Common {
    /// Configuration file of `key = value` lines.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory (default: `out` key, else `higgslab-out`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Override one configuration key; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Use the zero-error connection instead of a solved metric.
    #[arg(long)]
    exact_leading: bool,
    /// Allow path lengths above R/2.
    #[arg(long)]
    override_path_guard: bool,
}

#[derive(Subcommand, Debug)]
enum Sub {
    /// Solve the metric for every t and write the fields.
    Solve(Common),
    /// Fit boundary-layer decay rates of the eigenmodes.
    VerifyDecay(Common),
    /// Integrate parallel transport along the configured rays.
    Transport(Common),
    /// Decay and transport together, with plot data.
    Report(Common),
}

fn load(common: &Common) -> Result<ExperimentConfig, ConfigError> {
    let mut cfg = match &common.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| ConfigError::Invalid(format!("cannot read {}: {e}", path.display())))?;
            ExperimentConfig::parse(&text)?
        }
        None => ExperimentConfig::default(),
    };
    for kv in &common.set {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| ConfigError::Syntax { line: 0, text: kv.clone() })?;
        cfg.set(k.trim(), v.trim())?;
    }
    cfg.exact_leading |= common.exact_leading;
    cfg.override_path_guard |= common.override_path_guard;
    if let Some(out) = &common.out {
        cfg.out = Some(out.clone());
    }
    cfg.validate()?;
    Ok(cfg)
}

#[cfg(feature = "parallel")]
fn configure_threads() -> Result<(), String> {
    if let Ok(v) = std::env::var("HIGGSLAB_THREADS") {
        let n: usize = v.parse().map_err(|_| format!("HIGGSLAB_THREADS must be a positive integer, got `{v}`"))?;
        if n == 0 {
            return Err("HIGGSLAB_THREADS must be positive".into());
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(|e| e.to_string())?;
    }
    Ok(())
}

#[cfg(not(feature = "parallel"))]
fn configure_threads() -> Result<(), String> {
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (command, common) = match &cli.command {
        Sub::Solve(c) => (Command::Solve, c),
        Sub::VerifyDecay(c) => (Command::VerifyDecay, c),
        Sub::Transport(c) => (Command::Transport, c),
        Sub::Report(c) => (Command::Report, c),
    };
    if let Err(e) = configure_threads() {
        eprintln!("error: {e}");
        return ExitCode::from(2);
    }
    let cfg = match load(common) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    let lab = match run(&cfg, command) {
        Ok(r) => r,
        Err(LabError::Config(e)) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(3);
        }
    };
    let dir = cfg.out.clone().unwrap_or_else(|| PathBuf::from("higgslab-out"));
    match write_artifacts(&lab, command, &dir) {
        Ok(paths) => {
            for p in paths {
                println!("wrote {}", p.display());
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(3);
        }
    }
    let s = &lab.report.summary;
    println!("{}: {} pass, {} fail, {} inconclusive", command.name(), s.pass, s.fail, s.inconclusive);
    if lab.report.all_passed() {
        ExitCode::SUCCESS
    } else {
        for name in &s.failing {
            eprintln!("FAIL: {name}");
        }
        ExitCode::from(1)
    }
}
