//! File emission: snapshot tables, JSON documents and the provenance block.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;
use survival_core::EvolutionSnapshot;

use crate::config::{Format, RunConfig, SCHEMA_VERSION};
use crate::error::{CliError, Result};

pub const SNAPSHOT_COLUMNS: [&str; 5] = ["p", "re_psi", "im_psi", "abs2_psi", "abs2_chi"];

/// Shortest round-trip scientific notation, independent of locale.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:e}")
}

/// Host- and time-dependent metadata, kept out of the deterministic scope.
#[derive(Debug, Clone, Serialize)]
pub struct Provenance {
    pub generated_unix_s: u64,
    pub threads: usize,
    pub version: &'static str,
}

impl Provenance {
    pub fn now() -> Self {
        Self {
            generated_unix_s: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map_or(0, |d| d.as_secs()),
            threads: rayon::current_num_threads(),
            version: env!("CARGO_PKG_VERSION"),
        }
    }
}

/// Envelope shared by every JSON report.
#[derive(Debug, Serialize)]
pub struct Document<'a, T: Serialize> {
    pub schema_version: u32,
    pub command: &'static str,
    pub config: &'a RunConfig,
    #[serde(flatten)]
    pub body: &'a T,
    pub provenance: Provenance,
}

impl<'a, T: Serialize> Document<'a, T> {
    pub fn new(command: &'static str, config: &'a RunConfig, body: &'a T) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            command,
            config,
            body,
            provenance: Provenance::now(),
        }
    }
}

pub fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| CliError::Output(format!("{}: {e}", path.display())))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}

/// Writes a header row and rows of floats.
pub fn write_csv<R>(path: &Path, header: &[&str], rows: R) -> Result<()>
where
    R: IntoIterator<Item = Vec<f64>>,
{
    let csv_err = |e: csv::Error| CliError::Output(format!("{}: {e}", path.display()));
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record(header).map_err(csv_err)?;
    for row in rows {
        w.write_record(row.iter().map(|&x| fmt_f64(x)))
            .map_err(csv_err)?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

#[derive(Serialize)]
struct SnapshotJson<'a> {
    schema_version: u32,
    t: f64,
    columns: [&'a str; 5],
    p: Vec<f64>,
    re_psi: Vec<f64>,
    im_psi: Vec<f64>,
    abs2_psi: Vec<f64>,
    abs2_chi: &'a [f64],
}

/// Exports one snapshot as `{stem}.csv` or `{stem}.json` and returns the path.
///
/// `abs2_chi` is the detector-branch density |ψ₀|²(1 − e^{−Γt}), which is
/// signed when the rate is evaluated formally past its zero.
pub fn write_snapshot(
    dir: &Path,
    stem: &str,
    snap: &EvolutionSnapshot,
    format: Format,
) -> Result<PathBuf> {
    let grid = snap.psi.grid();
    let psi = snap.psi.values();
    match format {
        Format::Csv => {
            let path = dir.join(format!("{stem}.csv"));
            let rows = (0..grid.len()).map(|i| {
                vec![
                    grid.point(i),
                    psi[i].re,
                    psi[i].im,
                    psi[i].norm_sqr(),
                    snap.detector_density[i],
                ]
            });
            write_csv(&path, &SNAPSHOT_COLUMNS, rows)?;
            Ok(path)
        }
        Format::Json => {
            let path = dir.join(format!("{stem}.json"));
            let doc = SnapshotJson {
                schema_version: SCHEMA_VERSION,
                t: snap.t,
                columns: SNAPSHOT_COLUMNS,
                p: grid.points(),
                re_psi: psi.iter().map(|z| z.re).collect(),
                im_psi: psi.iter().map(|z| z.im).collect(),
                abs2_psi: snap.psi.abs2(),
                abs2_chi: &snap.detector_density,
            };
            write_json(&path, &doc)?;
            Ok(path)
        }
    }
}

/// Path relative to the output directory, for cross-references in reports.
pub fn file_name(path: &Path) -> String {
    path.file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default()
}
