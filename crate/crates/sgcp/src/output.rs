//! Deterministic CSV output and the run manifest.
//!
//! Every float is written as `{:.16e}` (17 significant digits), every line
//! ends in a bare LF, and rows are emitted in the order given, so a rerun
//! of the same config produces byte-identical files. The manifest is the
//! one file that is allowed to differ between reruns (it records wall
//! time).

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::config::CaseConfig;
use crate::{Error, Result};

/// One CSV cell; integers keep their plain representation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Value {
    Int(i64),
    Num(f64),
}

impl From<usize> for Value {
    fn from(v: usize) -> Self {
        Value::Int(v as i64)
    }
}

impl From<f64> for Value {
    fn from(v: f64) -> Self {
        Value::Num(v)
    }
}

#[derive(Debug, Clone)]
pub struct Series {
    /// File stem; the writer appends `.csv`.
    pub name: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Value>>,
}

impl Series {
    pub fn new(name: impl Into<String>, columns: &[&str]) -> Self {
        Series {
            name: name.into(),
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Value>) {
        self.rows.push(row);
    }

    fn validate(&self) -> Result<()> {
        if self.columns.is_empty() {
            return Err(Error::InvalidParameter(format!("series {} has no columns", self.name)));
        }
        for row in &self.rows {
            if row.len() != self.columns.len() {
                return Err(Error::InvalidParameter(format!(
                    "series {}: row width {} does not match {} columns",
                    self.name,
                    row.len(),
                    self.columns.len()
                )));
            }
        }
        if let Some(tc) = self.columns.iter().position(|c| c == "time") {
            let mut prev = f64::NEG_INFINITY;
            for row in &self.rows {
                let t = match row[tc] {
                    Value::Num(v) => v,
                    Value::Int(v) => v as f64,
                };
                if t < prev {
                    return Err(Error::InvalidParameter(format!(
                        "series {}: time column decreases at t = {t}",
                        self.name
                    )));
                }
                prev = t;
            }
        }
        Ok(())
    }

    pub fn render(&self) -> Result<String> {
        self.validate()?;
        let mut out = String::new();
        out.push_str(&self.columns.join(","));
        out.push('\n');
        for row in &self.rows {
            for (i, v) in row.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                match v {
                    Value::Int(x) => write!(out, "{x}").unwrap(),
                    Value::Num(x) => write!(out, "{x:.16e}").unwrap(),
                }
            }
            out.push('\n');
        }
        Ok(out)
    }
}

/// Writes one series as `{dir}/{name}.csv` and returns the path.
pub fn write_series(dir: &Path, series: &Series) -> Result<PathBuf> {
    let text = series.render()?;
    std::fs::create_dir_all(dir)?;
    let path = dir.join(format!("{}.csv", series.name));
    std::fs::write(&path, text.as_bytes())?;
    Ok(path)
}

#[derive(Debug, Serialize)]
struct ManifestRun<'a> {
    version: &'a str,
    wall_seconds: f64,
    files: &'a [String],
}

#[derive(Debug, Serialize)]
struct Manifest<'a> {
    run: ManifestRun<'a>,
    config: &'a CaseConfig,
}

/// Writes `manifest.toml`: the resolved config echo, the code version and
/// the wall time of the run.
pub fn write_manifest(
    dir: &Path,
    config: &CaseConfig,
    wall_seconds: f64,
    files: &[String],
) -> Result<PathBuf> {
    let manifest = Manifest {
        run: ManifestRun { version: env!("CARGO_PKG_VERSION"), wall_seconds, files },
        config,
    };
    let text =
        toml::to_string_pretty(&manifest).map_err(|e| Error::Config(e.to_string()))?;
    std::fs::create_dir_all(dir)?;
    let path = dir.join("manifest.toml");
    std::fs::write(&path, text.as_bytes())?;
    Ok(path)
}
