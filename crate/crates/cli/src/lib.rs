//! Configuration-driven experiment runner behind the `stiffwork` binary.

pub mod config;
pub mod run;

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;

use config::{ExperimentConfig, Kind};
use run::{prepare_out, run_kind, Artifact, Ctx, RunError, RunResult};

pub const WORKERS_ENV: &str = "STIFFWORK_WORKERS";

#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub kind: &'static str,
    pub config_hash: String,
    pub master_seed: u64,
    pub workers: usize,
    pub versions: Vec<(String, String)>,
    pub artifacts: Vec<Artifact>,
    pub wall_time_s: f64,
    pub config: ExperimentConfig,
}

/// Worker count: explicit flag, then the environment, then the config.
pub fn resolve_workers(flag: Option<usize>, env: Option<&str>, cfg: usize) -> Result<usize, config::ValidationError> {
    if let Some(w) = flag {
        return Ok(w);
    }
    match env {
        Some(v) => v
            .trim()
            .parse::<usize>()
            .map_err(|_| config::ValidationError::new(WORKERS_ENV, format!("expected a positive integer, got `{v}`"))),
        None => Ok(cfg),
    }
}

/// Validates, runs `kind` on a pool of `cfg.run.workers` threads and writes
/// the manifest after every artifact.
pub fn execute(kind: Kind, cfg: &ExperimentConfig) -> RunResult<RunManifest> {
    cfg.validate(kind)?;
    let out = PathBuf::from(&cfg.run.out);
    let start = Instant::now();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.run.workers)
        .build()
        .map_err(|e| RunError::Other(format!("worker pool: {e}")))?;
    prepare_out(&out)?;
    let artifacts = pool.install(|| -> RunResult<Vec<Artifact>> {
        let mut ctx = Ctx::new(cfg, kind, &out)?;
        run_kind(&mut ctx)?;
        Ok(ctx.artifacts)
    })?;
    let manifest = RunManifest {
        kind: kind.name(),
        config_hash: cfg.hash(),
        master_seed: cfg.run.seed,
        workers: cfg.run.workers,
        versions: vec![("stiffwork".into(), env!("CARGO_PKG_VERSION").into())],
        artifacts,
        wall_time_s: start.elapsed().as_secs_f64(),
        config: cfg.clone(),
    };
    write_manifest(&out, &manifest)?;
    Ok(manifest)
}

fn write_manifest(out: &Path, m: &RunManifest) -> RunResult<()> {
    let text = serde_json::to_string_pretty(m).map_err(|e| RunError::Other(e.to_string()))?;
    stiffwork::io::write_atomic(&out.join("manifest.json"), text.as_bytes())?;
    Ok(())
}
