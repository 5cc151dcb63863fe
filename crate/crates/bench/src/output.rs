//! Run artifacts, acceptance checks and the manifest written next to them.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::{ExperimentConfig, ExperimentId};
use crate::error::{BenchError, Result};

/// A file produced by a run, kept in memory until written.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Artifact {
    pub name: String,
    pub content: String,
}

impl Artifact {
    pub fn new(name: impl Into<String>, content: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            content: content.into(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub bound: String,
    pub passed: bool,
}

impl Check {
    pub fn at_most(name: impl Into<String>, value: f64, max: f64) -> Self {
        Self {
            name: name.into(),
            value,
            bound: format!("<= {max:e}"),
            passed: value <= max,
        }
    }

    pub fn at_least(name: impl Into<String>, value: f64, min: f64) -> Self {
        Self {
            name: name.into(),
            value,
            bound: format!(">= {min}"),
            passed: value >= min,
        }
    }

    /// `lo <= value <= hi`; `None` leaves a side open.
    pub fn within(name: impl Into<String>, value: f64, lo: Option<f64>, hi: Option<f64>) -> Self {
        let bound = match (lo, hi) {
            (Some(a), Some(b)) => format!("in [{a}, {b}]"),
            (Some(a), None) => format!(">= {a}"),
            (None, Some(b)) => format!("<= {b}"),
            (None, None) => "any".into(),
        };
        Self {
            name: name.into(),
            value,
            bound,
            passed: lo.is_none_or(|a| value >= a) && hi.is_none_or(|b| value <= b),
        }
    }
}

#[derive(Clone, Debug, Default)]
pub struct Report {
    pub artifacts: Vec<Artifact>,
    pub checks: Vec<Check>,
    /// Sub-runs that failed or stopped early.
    pub notes: Vec<String>,
    /// Human-readable summary for the console.
    pub summary: String,
}

impl Report {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn artifact(&self, name: &str) -> Option<&Artifact> {
        self.artifacts.iter().find(|a| a.name == name)
    }

    pub fn checks_table(&self) -> String {
        let mut s = String::new();
        for c in &self.checks {
            let _ = writeln!(
                s,
                "{} {:<48} {:>14.6e} {}",
                if c.passed { "PASS" } else { "FAIL" },
                c.name,
                c.value,
                c.bound
            );
        }
        s
    }
}

/// Hash git gives a blob with this content under its SHA-256 object format.
pub fn blob_hash(content: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(format!("blob {}\0", content.len()).as_bytes());
    h.update(content);
    hex(&h.finalize())
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().fold(String::with_capacity(2 * bytes.len()), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

#[derive(Serialize)]
struct OutputEntry<'a> {
    file: &'a str,
    bytes: usize,
    blob: String,
}

#[derive(Serialize)]
struct Manifest<'a> {
    experiment: ExperimentId,
    version: &'static str,
    config: &'a ExperimentConfig,
    outputs: Vec<OutputEntry<'a>>,
    /// Hash over the sorted `blob file` lines of all outputs.
    outputs_hash: String,
    passed: bool,
    checks: &'a [Check],
    notes: &'a [String],
}

pub fn manifest_json(cfg: &ExperimentConfig, report: &Report) -> String {
    let mut outputs: Vec<OutputEntry> = report
        .artifacts
        .iter()
        .map(|a| OutputEntry {
            file: &a.name,
            bytes: a.content.len(),
            blob: blob_hash(a.content.as_bytes()),
        })
        .collect();
    outputs.sort_by(|a, b| a.file.cmp(b.file));
    let listing: String = outputs.iter().map(|o| format!("{} {}\n", o.blob, o.file)).collect();
    let manifest = Manifest {
        experiment: cfg.experiment,
        version: env!("CARGO_PKG_VERSION"),
        config: cfg,
        outputs_hash: blob_hash(listing.as_bytes()),
        outputs,
        passed: report.passed(),
        checks: &report.checks,
        notes: &report.notes,
    };
    let mut s = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    s.push('\n');
    s
}

/// Writes through a temporary file in the same directory, so readers never
/// see a partial file.
pub fn write_atomic(path: &Path, content: &str) -> Result<()> {
    let io = |e| BenchError::Io(path.to_path_buf(), e);
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("out");
    let tmp = path.with_file_name(format!(".{name}.tmp"));
    fs::write(&tmp, content).map_err(io)?;
    fs::rename(&tmp, path).map_err(io)
}

/// Writes every artifact and `manifest.json` into `dir`; returns the paths.
pub fn write_report(dir: &Path, cfg: &ExperimentConfig, report: &Report) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| BenchError::Io(dir.to_path_buf(), e))?;
    let mut written = Vec::with_capacity(report.artifacts.len() + 1);
    for a in &report.artifacts {
        let p = dir.join(&a.name);
        write_atomic(&p, &a.content)?;
        written.push(p);
    }
    let p = dir.join("manifest.json");
    write_atomic(&p, &manifest_json(cfg, report))?;
    written.push(p);
    Ok(written)
}
