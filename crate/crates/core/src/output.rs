//! Deterministic CSV and JSON output.
//!
//! Every CSV starts with `#`-prefixed metadata lines (tool version, command,
//! resolved-config hash), followed by a column header and the rows. Numbers
//! are written with 12 significant digits in exponent form so files are
//! byte-identical across runs. A `manifest.json` next to the CSV files
//! records the resolved configuration and the SHA-256 of every file.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::RunConfig;
use crate::Result;

pub const MANIFEST_NAME: &str = "manifest.json";

/// One output table.
#[derive(Debug, Clone, PartialEq)]
pub struct CsvTable {
    /// File name, without directory.
    pub name: String,
    pub columns: Vec<&'static str>,
    pub rows: Vec<Vec<String>>,
    /// Extra `# key = value` metadata lines.
    pub notes: Vec<(String, String)>,
}

impl CsvTable {
    pub fn new(name: impl Into<String>, columns: &[&'static str]) -> Self {
        Self {
            name: name.into(),
            columns: columns.to_vec(),
            rows: Vec::new(),
            notes: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn note(&mut self, key: impl Into<String>, value: impl Into<String>) {
        self.notes.push((key.into(), value.into()));
    }

    pub fn render(&self, command: &str, config_hash: &str) -> String {
        let mut s = String::new();
        s.push_str(&format!("# stark-hhg {}\n", env!("CARGO_PKG_VERSION")));
        s.push_str(&format!("# command = {command}\n"));
        s.push_str(&format!("# config_sha256 = {config_hash}\n"));
        for (k, v) in &self.notes {
            s.push_str(&format!("# {k} = {v}\n"));
        }
        s.push_str(&self.columns.join(","));
        s.push('\n');
        for row in &self.rows {
            s.push_str(&row.join(","));
            s.push('\n');
        }
        s
    }
}

/// Fixed-format number: 12 significant digits, `nan`/`inf` spelled out.
pub fn num(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.11e}")
    } else if x.is_nan() {
        "nan".to_string()
    } else if x > 0.0 {
        "inf".to_string()
    } else {
        "-inf".to_string()
    }
}

pub fn flag(b: bool) -> String {
    if b { "1" } else { "0" }.to_string()
}

#[derive(Debug, Serialize)]
struct FileEntry<'a> {
    name: &'a str,
    rows: usize,
    sha256: String,
}

#[derive(Debug, Serialize)]
struct Manifest<'a> {
    tool: &'static str,
    version: &'static str,
    command: &'a str,
    config_sha256: String,
    config: &'a RunConfig,
    files: Vec<FileEntry<'a>>,
}

/// Writes `tables` and the manifest into `dir`, returning the written paths.
pub fn write_outputs(dir: &Path, command: &str, config: &RunConfig, tables: &[CsvTable]) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let hash = config.hash();
    let mut paths = Vec::with_capacity(tables.len() + 1);
    let mut files = Vec::with_capacity(tables.len());
    for t in tables {
        let text = t.render(command, &hash);
        let path = dir.join(&t.name);
        fs::write(&path, &text)?;
        files.push(FileEntry {
            name: &t.name,
            rows: t.rows.len(),
            sha256: format!("{:x}", Sha256::digest(text.as_bytes())),
        });
        paths.push(path);
    }
    let manifest = Manifest {
        tool: "stark-hhg",
        version: env!("CARGO_PKG_VERSION"),
        command,
        config_sha256: hash,
        config,
        files,
    };
    let path = dir.join(MANIFEST_NAME);
    let mut text = serde_json::to_string_pretty(&manifest)?;
    text.push('\n');
    fs::write(&path, text)?;
    paths.push(path);
    Ok(paths)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn number_format_is_fixed() {
        assert_eq!(num(1.0), "1.00000000000e0");
        assert_eq!(num(-0.000123), "-1.23000000000e-4");
        assert_eq!(num(f64::NAN), "nan");
        assert_eq!(num(f64::NEG_INFINITY), "-inf");
        assert_eq!(flag(true), "1");
    }

    #[test]
    fn csv_has_header_and_hash() {
        let mut t = CsvTable::new("a.csv", &["x", "y"]);
        t.note("units", "au");
        t.push(vec![num(1.0), num(2.0)]);
        let s = t.render("demo", "abc");
        let lines: Vec<&str> = s.lines().collect();
        assert!(lines[0].starts_with("# stark-hhg "));
        assert_eq!(lines[1], "# command = demo");
        assert_eq!(lines[2], "# config_sha256 = abc");
        assert_eq!(lines[3], "# units = au");
        assert_eq!(lines[4], "x,y");
        assert_eq!(lines[5], "1.00000000000e0,2.00000000000e0");
    }

    #[test]
    fn manifest_lists_files() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = RunConfig::default();
        let mut t = CsvTable::new("a.csv", &["x"]);
        t.push(vec![num(3.0)]);
        let paths = write_outputs(dir.path(), "demo", &cfg, &[t]).unwrap();
        assert_eq!(paths.len(), 2);
        let csv = fs::read_to_string(&paths[0]).unwrap();
        assert!(csv.contains(&cfg.hash()));
        let manifest: serde_json::Value = serde_json::from_str(&fs::read_to_string(&paths[1]).unwrap()).unwrap();
        assert_eq!(manifest["config_sha256"], cfg.hash());
        assert_eq!(manifest["files"][0]["name"], "a.csv");
        assert_eq!(
            manifest["files"][0]["sha256"],
            format!("{:x}", Sha256::digest(csv.as_bytes()))
        );
    }
}
