use std::path::{Path, PathBuf};

use rayon::prelude::*;
use robust_da::experiments::grid_configs;
use robust_da::{run_experiment, ExperimentConfig, Protocol, RmseSeries};

use crate::config::load_config;
use crate::error::CliError;
use crate::output::{series_csv, summary_table, timestamp, write_atomic, write_manifest, RunManifest};
use crate::verify;

pub const THREADS_ENV: &str = "ROBUST_DA_THREADS";

/// Caps the global worker pool at `ROBUST_DA_THREADS` when it is set.
pub fn init_threads() -> Result<(), CliError> {
    let Ok(raw) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::Config(format!("{THREADS_ENV} must be a positive integer, got '{raw}'")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Config(format!("cannot configure {n} worker threads: {e}")))
}

fn experiment(cfg: &ExperimentConfig) -> Result<Vec<RmseSeries>, CliError> {
    run_experiment(cfg).map_err(|e| CliError::Numerical(format!("seed {}: {e}", cfg.seed)))
}

pub fn default_run_dir(config: &Path) -> PathBuf {
    let stem = config.file_stem().map_or("run".into(), |s| s.to_string_lossy().into_owned());
    Path::new("results").join(stem)
}

/// Runs one config, writes `<label>.csv` per series plus `series.csv` with
/// all of them, and a manifest.
pub fn cmd_run(config: &Path, out: Option<&Path>) -> Result<RunManifest, CliError> {
    let cfg = load_config(config)?;
    let series = experiment(&cfg)?;
    let output_dir = out.map_or_else(|| default_run_dir(config), Path::to_path_buf);
    let mut files = Vec::new();
    for s in &series {
        let name = PathBuf::from(format!("{}.csv", s.label));
        write_atomic(&output_dir.join(&name), &series_csv([s])?)?;
        files.push(name);
    }
    let combined = PathBuf::from("series.csv");
    write_atomic(&output_dir.join(&combined), &series_csv(&series)?)?;
    files.push(combined);
    let manifest = RunManifest {
        config: Some(config.to_path_buf()),
        output_dir,
        files,
        seeds: vec![cfg.seed],
        timestamp: timestamp(),
    };
    write_manifest(&manifest)?;
    print!("{}", summary_table(&series));
    println!("wrote {} files to {}", manifest.files.len(), manifest.output_dir.display());
    Ok(manifest)
}

pub fn cmd_verify(corrupt_adjoint: bool) -> Result<(), CliError> {
    let checks = verify::run_all(corrupt_adjoint);
    for c in &checks {
        println!("{c}");
    }
    let failed: Vec<&str> = checks.iter().filter(|c| !c.passed).map(|c| c.name).collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::Verify(failed.join(", ")))
    }
}

fn grid_subdir(cfg: &ExperimentConfig) -> String {
    format!("freq{}_tau{}", cfg.obs_frequency, cfg.tau)
}

/// Runs every experiment of `protocol` for seeds `0..seeds` and writes one
/// CSV per series under `<out>/<protocol>/freq<f>_tau<tau>/`.
pub fn cmd_grid(protocol: &str, out: &Path, seeds: u64) -> Result<RunManifest, CliError> {
    let protocol: Protocol = protocol.parse().map_err(|e| CliError::Config(format!("{e}")))?;
    if seeds == 0 {
        return Err(CliError::Config("--seeds must be at least 1".into()));
    }
    let jobs: Vec<ExperimentConfig> = (0..seeds).flat_map(|s| grid_configs(protocol, s)).collect();
    for cfg in &jobs {
        cfg.validate().map_err(|e| CliError::Config(e.to_string()))?;
    }
    let results = jobs.par_iter().map(experiment).collect::<Result<Vec<_>, _>>()?;

    let output_dir = out.join(protocol.label());
    let mut files = Vec::new();
    for (cfg, series) in jobs.iter().zip(&results) {
        for s in series {
            let name = Path::new(&grid_subdir(cfg)).join(format!("{}_seed{}.csv", s.label, s.seed));
            write_atomic(&output_dir.join(&name), &series_csv([s])?)?;
            files.push(name);
        }
    }
    let combined = PathBuf::from("series.csv");
    write_atomic(&output_dir.join(&combined), &series_csv(results.iter().flatten())?)?;
    files.push(combined);
    let manifest = RunManifest { config: None, output_dir, files, seeds: (0..seeds).collect(), timestamp: timestamp() };
    write_manifest(&manifest)?;
    for (cfg, series) in jobs.iter().zip(&results) {
        println!("# {} seed {}", grid_subdir(cfg), cfg.seed);
        print!("{}", summary_table(series));
    }
    println!("wrote {} files to {}", manifest.files.len(), manifest.output_dir.display());
    Ok(manifest)
}
