use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use robust_da::RmseSeries;
use serde::Serialize;

use crate::error::CliError;

pub const CSV_HEADER: [&str; 8] = ["time", "rmse", "label", "method", "norm", "tau", "seed", "data_quality"];

/// Files written by one `run` or `grid` invocation.
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub config: Option<PathBuf>,
    pub output_dir: PathBuf,
    pub files: Vec<PathBuf>,
    pub seeds: Vec<u64>,
    /// Seconds since the Unix epoch.
    pub timestamp: u64,
}

/// CSV bytes for `series`, one row per time.
pub fn series_csv<'a>(series: impl IntoIterator<Item = &'a RmseSeries>) -> Result<Vec<u8>, CliError> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
    let io = |e: csv::Error| CliError::Io(e.to_string());
    w.write_record(CSV_HEADER).map_err(io)?;
    for s in series {
        for (t, e) in s.times.iter().zip(&s.rmse) {
            w.write_record([
                t.to_string(),
                e.to_string(),
                s.label.clone(),
                s.method.label().to_string(),
                s.norm_label().to_string(),
                s.tau.to_string(),
                s.seed.to_string(),
                s.quality_label().to_string(),
            ])
            .map_err(io)?;
        }
    }
    w.into_inner().map_err(|e| CliError::Io(e.to_string()))
}

/// Writes through a temporary file in the target directory and renames it
/// into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    fs::create_dir_all(dir)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| CliError::Io(e.to_string()))?;
    Ok(())
}

pub fn timestamp() -> u64 {
    std::time::SystemTime::now().duration_since(std::time::UNIX_EPOCH).map_or(0, |d| d.as_secs())
}

pub fn write_manifest(m: &RunManifest) -> Result<PathBuf, CliError> {
    let path = m.output_dir.join("manifest.json");
    let mut bytes = serde_json::to_vec_pretty(m).map_err(|e| CliError::Io(e.to_string()))?;
    bytes.push(b'\n');
    write_atomic(&path, &bytes)?;
    Ok(path)
}

/// Summary table: method, norm, tau, data quality and final RMSE.
pub fn summary_table(series: &[RmseSeries]) -> String {
    let mut out =
        format!("{:<8} {:<12} {:>6} {:<6} {:>6} {:>12}\n", "method", "norm", "tau", "data", "seed", "final_rmse");
    for s in series {
        let fin = s.final_rmse().map_or("-".to_string(), |v| format!("{v:.6}"));
        out.push_str(&format!(
            "{:<8} {:<12} {:>6} {:<6} {:>6} {:>12}\n",
            s.method.label(),
            s.norm_label(),
            s.tau,
            s.quality_label(),
            s.seed,
            fin
        ));
    }
    out
}
