//! Result-file plumbing shared by every experiment.
//!
//! Each run owns one directory named `{experiment}_{seed}_{scale}` under the
//! chosen output root and writes three kinds of files into it:
//!
//! * plot-ready CSV series, each with a `.meta.json` sidecar describing the
//!   columns and units;
//! * optional JSON-lines records for per-trial payloads too structured for
//!   CSV;
//! * a single `summary.json` carrying the run parameters, trial counts, and
//!   headline numbers.
//!
//! All writers are deterministic: field order is fixed by the serialized
//! struct definitions, floats are printed in shortest round-trip form, and no
//! wall-clock data is recorded, so rerunning with the same seed and scale
//! reproduces every file byte for byte.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{ensure, Context, Result};
use serde::Serialize;

/// Version tag stamped into every summary and sidecar for downstream tooling.
pub const SCHEMA_VERSION: u32 = 1;

/// One column of a plot-data series.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct Column {
    pub name: &'static str,
    /// Physical unit, or "1" for dimensionless and "flag" for 0/1 columns.
    pub unit: &'static str,
}

/// A named table of plot-ready numbers; `None` cells serialize as empty
/// fields (RFC 4180 leaves them distinguishable from 0).
pub struct Series {
    pub name: String,
    /// Human-readable description stored in the sidecar.
    pub title: String,
    pub columns: Vec<Column>,
    pub rows: Vec<Vec<Option<f64>>>,
}

#[derive(Serialize)]
struct Sidecar<'a> {
    schema_version: u32,
    title: &'a str,
    columns: &'a [Column],
    rows: usize,
}

/// Outcome of one `--check` comparison, echoed to stdout and to the summary.
#[derive(Debug, Clone, Serialize)]
pub struct CheckRecord {
    pub name: &'static str,
    pub pass: bool,
    pub detail: String,
}

impl CheckRecord {
    pub fn new(name: &'static str, pass: bool, detail: String) -> Self {
        CheckRecord { name, pass, detail }
    }
}

/// The per-run output directory.
pub struct ExperimentDir {
    path: PathBuf,
}

impl ExperimentDir {
    /// Creates (or reuses) `{root}/{experiment}_{seed}_{scale}`.
    pub fn create(root: &Path, experiment: &str, seed: u64, scale: &str) -> Result<Self> {
        let path = root.join(format!("{experiment}_{seed}_{scale}"));
        fs::create_dir_all(&path)
            .with_context(|| format!("creating output directory {}", path.display()))?;
        Ok(ExperimentDir { path })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    /// Writes `{name}.csv` plus the `{name}.meta.json` sidecar.
    ///
    /// Refuses empty series and rows whose width disagrees with the declared
    /// columns; both would produce files a plotting tool reads as valid but
    /// meaningless.
    pub fn emit_plot_data(&self, series: &Series) -> Result<PathBuf> {
        ensure!(
            !series.rows.is_empty(),
            "series {} has no rows; refusing to write an empty data file",
            series.name
        );
        ensure!(
            !series.columns.is_empty(),
            "series {} declares no columns",
            series.name
        );
        let csv_path = self.path.join(format!("{}.csv", series.name));
        let mut writer = csv::Writer::from_writer(BufWriter::new(
            File::create(&csv_path)
                .with_context(|| format!("creating {}", csv_path.display()))?,
        ));
        writer.write_record(series.columns.iter().map(|c| c.name))?;
        let mut field = String::new();
        for (i, row) in series.rows.iter().enumerate() {
            ensure!(
                row.len() == series.columns.len(),
                "series {} row {i} has {} fields, expected {}",
                series.name,
                row.len(),
                series.columns.len()
            );
            writer.write_record(row.iter().map(|cell| {
                field.clear();
                if let Some(v) = cell {
                    // Shortest round-trip form; deterministic across runs.
                    field.push_str(&format!("{v}"));
                }
                field.clone()
            }))?;
        }
        writer.flush()?;

        let sidecar = Sidecar {
            schema_version: SCHEMA_VERSION,
            title: &series.title,
            columns: &series.columns,
            rows: series.rows.len(),
        };
        self.write_json(&format!("{}.meta.json", series.name), &sidecar)?;
        Ok(csv_path)
    }

    /// Writes one serialized record per line into `{name}.jsonl`.
    pub fn emit_jsonl<T: Serialize>(&self, name: &str, records: &[T]) -> Result<PathBuf> {
        ensure!(
            !records.is_empty(),
            "record set {name} is empty; refusing to write an empty data file"
        );
        let path = self.path.join(format!("{name}.jsonl"));
        let mut out = BufWriter::new(
            File::create(&path).with_context(|| format!("creating {}", path.display()))?,
        );
        for record in records {
            serde_json::to_writer(&mut out, record)?;
            out.write_all(b"\n")?;
        }
        out.flush()?;
        Ok(path)
    }

    /// Writes the run summary as pretty-printed `summary.json`.
    pub fn write_summary<T: Serialize>(&self, summary: &T) -> Result<PathBuf> {
        self.write_json("summary.json", summary)
    }

    fn write_json<T: Serialize>(&self, file_name: &str, value: &T) -> Result<PathBuf> {
        let path = self.path.join(file_name);
        let mut out = BufWriter::new(
            File::create(&path).with_context(|| format!("creating {}", path.display()))?,
        );
        serde_json::to_writer_pretty(&mut out, value)?;
        out.write_all(b"\n")?;
        out.flush()?;
        Ok(path)
    }
}
