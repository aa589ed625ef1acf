//! Output directory layout: `results.csv`, `summary.json`, `plot.script`.

use std::fs;
use std::path::{Path, PathBuf};

use super::HarnessError;

const SOURCES: &[&str] = &[
    include_str!("../lib.rs"),
    include_str!("../rng.rs"),
    include_str!("../quad.rs"),
    include_str!("../levy/mod.rs"),
    include_str!("../levy/closed.rs"),
    include_str!("../levy/quadrature.rs"),
    include_str!("../levy/sampler.rs"),
    include_str!("../drivers/mod.rs"),
    include_str!("../drivers/path.rs"),
    include_str!("../schemes/mod.rs"),
    include_str!("../models/mod.rs"),
    include_str!("../models/catalog.rs"),
    include_str!("../models/generator.rs"),
    include_str!("mod.rs"),
    include_str!("checks.rs"),
    include_str!("fit.rs"),
    include_str!("decompose.rs"),
    include_str!("steps.rs"),
    include_str!("report.rs"),
];

/// Crate version with a 64-bit FNV-1a digest of the library sources.
pub fn version_string() -> String {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for src in SOURCES {
        for b in src.bytes() {
            h ^= b as u64;
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
    }
    format!("levy-euler {} ({h:016x})", env!("CARGO_PKG_VERSION"))
}

/// Contents of one run directory.
#[derive(Debug, Clone)]
pub struct ReportFiles {
    /// Header row followed by data rows.
    pub header: Vec<String>,
    pub rows: Vec<Vec<Option<CsvValue>>>,
    pub summary: serde_json::Value,
    pub plot: String,
}

/// A CSV cell.
#[derive(Debug, Clone, PartialEq)]
pub enum CsvValue {
    Float(f64),
    Int(i64),
    Text(String),
}

impl CsvValue {
    fn render(&self) -> String {
        match self {
            CsvValue::Float(x) => format!("{x:.16e}"),
            CsvValue::Int(i) => i.to_string(),
            CsvValue::Text(s) if s.contains([',', '"', '\n']) => {
                format!("\"{}\"", s.replace('"', "\"\""))
            }
            CsvValue::Text(s) => s.clone(),
        }
    }
}

impl From<f64> for CsvValue {
    fn from(x: f64) -> Self {
        CsvValue::Float(x)
    }
}

impl From<usize> for CsvValue {
    fn from(x: usize) -> Self {
        CsvValue::Int(x as i64)
    }
}

impl From<bool> for CsvValue {
    fn from(x: bool) -> Self {
        CsvValue::Text(x.to_string())
    }
}

impl From<&str> for CsvValue {
    fn from(x: &str) -> Self {
        CsvValue::Text(x.to_string())
    }
}

/// Renders the CSV body with LF line endings; `None` becomes an empty field.
pub fn render_csv(header: &[String], rows: &[Vec<Option<CsvValue>>]) -> String {
    let mut out = header.join(",");
    out.push('\n');
    for row in rows {
        let cells: Vec<String> = row
            .iter()
            .map(|c| c.as_ref().map(CsvValue::render).unwrap_or_default())
            .collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}

/// Writes `<outdir>/<tag>/{results.csv, summary.json, plot.script}` and
/// returns the run directory.
pub fn write_report(
    outdir: &Path,
    tag: &str,
    files: &ReportFiles,
) -> Result<PathBuf, HarnessError> {
    if tag.is_empty() || tag.contains(['/', '\\']) || tag == "." || tag == ".." {
        return Err(HarnessError::Precondition(format!(
            "invalid run tag '{tag}'"
        )));
    }
    let dir = outdir.join(tag);
    let io = |path: &Path| {
        let path = path.display().to_string();
        move |source| HarnessError::Io { path, source }
    };
    fs::create_dir_all(&dir).map_err(io(&dir))?;
    let csv = dir.join("results.csv");
    fs::write(&csv, render_csv(&files.header, &files.rows)).map_err(io(&csv))?;
    let json = dir.join("summary.json");
    let mut text = serde_json::to_string_pretty(&files.summary).expect("JSON values serialize");
    text.push('\n');
    fs::write(&json, text).map_err(io(&json))?;
    let plot = dir.join("plot.script");
    fs::write(&plot, &files.plot).map_err(io(&plot))?;
    Ok(dir)
}
