//! Run manifests and CSV serialization.
//!
//! Every experiment writes a `report.json` manifest plus one or more CSV
//! tables. Output is produced deterministically: rows are emitted in a
//! canonical order fixed by the experiment (never by worker scheduling),
//! floats use the shortest round-trip decimal form, and files are written
//! in a single pass.

use serde::Serialize;
use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

/// One named scalar check inside a report.
#[derive(Debug, Clone, Serialize)]
pub struct Probe {
    pub name: String,
    pub value: f64,
    pub stderr: f64,
    pub threshold: f64,
    /// `"<="`, `">="`, or `"report"` for purely informational values.
    pub op: String,
    pub pass: bool,
}

impl Probe {
    /// Check that `value` stays at or below `threshold` plus statistical
    /// slack of three standard errors.
    pub fn le(name: &str, value: f64, stderr: f64, threshold: f64) -> Probe {
        Probe {
            name: name.to_string(),
            value,
            stderr,
            threshold,
            op: "<=".to_string(),
            pass: value <= threshold + 3.0 * stderr,
        }
    }

    /// Check that `value` stays at or above `threshold` minus three
    /// standard errors.
    pub fn ge(name: &str, value: f64, stderr: f64, threshold: f64) -> Probe {
        Probe {
            name: name.to_string(),
            value,
            stderr,
            threshold,
            op: ">=".to_string(),
            pass: value >= threshold - 3.0 * stderr,
        }
    }

    /// Informational value that never affects the pass verdict.
    pub fn info(name: &str, value: f64) -> Probe {
        Probe {
            name: name.to_string(),
            value,
            stderr: 0.0,
            threshold: 0.0,
            op: "report".to_string(),
            pass: true,
        }
    }
}

/// The `report.json` manifest for one experiment run.
#[derive(Debug, Serialize)]
pub struct Report {
    pub command: String,
    pub version: String,
    pub seed: u64,
    pub config: BTreeMap<String, String>,
    pub n_samples: usize,
    pub n_failed: usize,
    pub degenerate: bool,
    pub pass: Option<bool>,
    pub probes: Vec<Probe>,
}

impl Report {
    pub fn new(command: &str, seed: u64, config: BTreeMap<String, String>) -> Report {
        Report {
            command: command.to_string(),
            version: format!("bandlab {}", env!("CARGO_PKG_VERSION")),
            seed,
            config,
            n_samples: 0,
            n_failed: 0,
            degenerate: false,
            pass: None,
            probes: Vec::new(),
        }
    }

    pub fn push(&mut self, probe: Probe) {
        self.probes.push(probe);
    }

    /// Sets the overall verdict from the recorded probes. A degenerate run
    /// (no usable samples) never passes and never fails; it is flagged.
    pub fn finalize(&mut self) {
        if self.degenerate {
            self.pass = None;
        } else {
            self.pass = Some(self.probes.iter().all(|p| p.pass));
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serialization");
        s.push('\n');
        s
    }
}

/// Shortest-round-trip decimal rendering used in all CSV cells.
pub fn fmt_f64(v: f64) -> String {
    if v == 0.0 {
        "0".to_string()
    } else if v.abs() >= 1e-4 && v.abs() < 1e15 {
        format!("{v}")
    } else {
        format!("{v:e}")
    }
}

/// An in-memory CSV table written to disk in one pass.
pub struct Csv {
    buf: String,
    columns: usize,
}

impl Csv {
    pub fn new(header: &[&str]) -> Csv {
        Csv {
            buf: format!("{}\n", header.join(",")),
            columns: header.len(),
        }
    }

    pub fn row(&mut self, cells: &[String]) {
        assert_eq!(cells.len(), self.columns, "csv row width mismatch");
        self.buf.push_str(&cells.join(","));
        self.buf.push('\n');
    }

    pub fn into_string(self) -> String {
        self.buf
    }
}

#[derive(Debug, thiserror::Error)]
#[error("cannot write {path}: {source}")]
pub struct WriteError {
    pub path: String,
    pub source: std::io::Error,
}

/// Writes report + CSV files under `dir`, creating it if needed.
pub struct OutputDir {
    dir: PathBuf,
}

impl OutputDir {
    pub fn create(dir: &Path) -> Result<OutputDir, WriteError> {
        std::fs::create_dir_all(dir).map_err(|source| WriteError {
            path: dir.display().to_string(),
            source,
        })?;
        Ok(OutputDir {
            dir: dir.to_path_buf(),
        })
    }

    pub fn write(&self, name: &str, contents: &str) -> Result<(), WriteError> {
        let path = self.dir.join(name);
        let write = |p: &Path| -> std::io::Result<()> {
            let mut f = std::fs::File::create(p)?;
            f.write_all(contents.as_bytes())?;
            f.flush()
        };
        write(&path).map_err(|source| WriteError {
            path: path.display().to_string(),
            source,
        })
    }

    pub fn path(&self) -> &Path {
        &self.dir
    }
}
