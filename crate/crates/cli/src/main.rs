use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use stiffwork_cli::config::{load, Kind, ValidationError};
use stiffwork_cli::run::RunError;
use stiffwork_cli::{execute, resolve_workers, WORKERS_ENV};

/// Runs one experiment kind: dos, relax, drive, stiffness, jr, crooks, fgr or eth.
#[derive(Parser, Debug)]
#[command(name = "stiffwork", version)]
struct Args {
    /// Experiment kind.
    kind: String,
    /// TOML file layered over the preset.
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    preset: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; overrides STIFFWORK_WORKERS and the config.
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Accept exact-path windows with fewer than 10 eigenstates.
    #[arg(long)]
    force: bool,
}

fn run(args: Args) -> Result<(), RunError> {
    let kind = Kind::parse(&args.kind).ok_or_else(|| {
        let names: Vec<&str> = Kind::ALL.iter().map(|k| k.name()).collect();
        ValidationError::new(
            "kind",
            format!("unknown kind `{}`; expected one of {}", args.kind, names.join(", ")),
        )
    })?;
    let text = std::fs::read_to_string(&args.config)
        .map_err(|e| ValidationError::new("config", format!("cannot read {}: {e}", args.config.display())))?;
    let mut cfg = load(&text, args.preset.as_deref())?;
    if let Some(s) = args.seed {
        cfg.run.seed = s;
    }
    let env = std::env::var(WORKERS_ENV).ok();
    cfg.run.workers = resolve_workers(args.workers, env.as_deref(), cfg.run.workers)?;
    if let Some(o) = args.out {
        cfg.run.out = o.to_string_lossy().into_owned();
    }
    cfg.run.force |= args.force;
    let m = execute(kind, &cfg)?;
    println!(
        "{}: {} artifacts in {} ({:.1} s, config {})",
        m.kind,
        m.artifacts.len(),
        cfg.run.out,
        m.wall_time_s,
        &m.config_hash[..12]
    );
    Ok(())
}

fn main() -> ExitCode {
    let args = Args::parse();
    match run(args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("stiffwork: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
