//! Output files. CSV files start with `#` metadata lines (command, config
//! hash, creation time, units); everything after them is a deterministic
//! function of the config.

use std::fmt::Display;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;

use crate::AppError;

/// Shortest round-trip representation of a float.
pub fn num(v: f64) -> String {
    format!("{v:?}")
}

pub struct OutputDir {
    root: PathBuf,
    command: String,
    hash: String,
    written: Vec<PathBuf>,
}

impl OutputDir {
    pub fn create(root: &Path, command: &str, hash: &str) -> Result<Self, AppError> {
        fs::create_dir_all(root).map_err(|e| AppError::io(root, e))?;
        Ok(Self {
            root: root.to_path_buf(),
            command: command.to_string(),
            hash: hash.to_string(),
            written: Vec::new(),
        })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    pub fn written(&self) -> &[PathBuf] {
        &self.written
    }

    fn write(&mut self, name: &str, text: &str) -> Result<PathBuf, AppError> {
        let path = self.path(name);
        fs::write(&path, text).map_err(|e| AppError::io(&path, e))?;
        self.written.push(path.clone());
        Ok(path)
    }

    /// Writes a CSV. `units` describes the columns and where each comes from.
    pub fn csv(&mut self, name: &str, units: &str, table: &Table) -> Result<PathBuf, AppError> {
        let created = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        let mut text = format!(
            "# command: {}\n# config_sha256: {}\n# created_unix: {created}\n# units: {units}\n",
            self.command, self.hash
        );
        text.push_str(&table.body());
        self.write(name, &text)
    }

    /// Writes pretty JSON wrapped with the command and config hash.
    pub fn json<T: Serialize>(&mut self, name: &str, payload: &T) -> Result<PathBuf, AppError> {
        let doc = serde_json::json!({
            "command": self.command,
            "config_sha256": self.hash,
            "result": payload,
        });
        let mut text = serde_json::to_string_pretty(&doc).expect("output serializes");
        text.push('\n');
        self.write(name, &text)
    }

    /// Writes text verbatim (used for the replayable config).
    pub fn raw(&mut self, name: &str, text: &str) -> Result<PathBuf, AppError> {
        self.write(name, text)
    }
}

/// Header plus rows of preformatted cells.
pub struct Table {
    header: Vec<&'static str>,
    rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(header: &[&'static str]) -> Self {
        Self {
            header: header.to_vec(),
            rows: Vec::new(),
        }
    }

    pub fn row(&mut self, cells: Vec<String>) {
        debug_assert_eq!(cells.len(), self.header.len());
        self.rows.push(cells);
    }

    pub fn push<D: Display>(&mut self, cells: &[D]) {
        self.row(cells.iter().map(|c| c.to_string()).collect());
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn body(&self) -> String {
        let mut text = self.header.join(",");
        text.push('\n');
        for r in &self.rows {
            text.push_str(&r.join(","));
            text.push('\n');
        }
        text
    }
}

/// The CSV text with its `#` lines removed.
pub fn csv_body(text: &str) -> String {
    text.lines()
        .filter(|l| !l.starts_with('#'))
        .map(|l| format!("{l}\n"))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn numbers_round_trip() {
        for v in [0.1, 1.0, 1e-300, 7.38905609893065, -2.5e17] {
            assert_eq!(num(v).parse::<f64>().unwrap(), v);
        }
    }

    #[test]
    fn csv_has_metadata_then_body() {
        let dir = tempfile::tempdir().unwrap();
        let mut out = OutputDir::create(dir.path(), "demo", "abc").unwrap();
        let mut t = Table::new(&["a", "b"]);
        t.row(vec![num(1.0), num(0.5)]);
        let p = out.csv("x.csv", "a: none", &t).unwrap();
        let text = fs::read_to_string(p).unwrap();
        assert!(text.starts_with("# command: demo\n# config_sha256: abc\n"));
        assert_eq!(csv_body(&text), "a,b\n1.0,0.5\n");
        assert_eq!(out.written().len(), 1);
    }
}
