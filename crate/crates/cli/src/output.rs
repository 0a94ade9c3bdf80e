//! Collected output files, report formatting and the run manifest.

use crate::error::CliError;
use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};
use std::path::Path;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, clap::ValueEnum)]
pub enum ReportFormat {
    #[default]
    Json,
    Csv,
}

impl ReportFormat {
    pub fn extension(self) -> &'static str {
        match self {
            ReportFormat::Json => "json",
            ReportFormat::Csv => "csv",
        }
    }
}

/// Files produced by a command, kept in memory until the run finishes.
#[derive(Debug, Default)]
pub struct Artifacts {
    pub files: Vec<(String, Vec<u8>)>,
}

impl Artifacts {
    pub fn add(&mut self, name: impl Into<String>, bytes: Vec<u8>) {
        self.files.push((name.into(), bytes));
    }

    /// Add a structured report as `<stem>.json` or `<stem>.csv`.
    pub fn report<T: Serialize>(&mut self, stem: &str, value: &T, format: ReportFormat) -> Result<(), CliError> {
        let bytes = render_report(value, format)?;
        self.add(format!("{stem}.{}", format.extension()), bytes);
        Ok(())
    }

    pub fn csv<F>(&mut self, name: &str, write: F) -> Result<(), CliError>
    where
        F: FnOnce(&mut Vec<u8>) -> Result<(), csv::Error>,
    {
        let mut buf = Vec::new();
        write(&mut buf)?;
        self.add(name, buf);
        Ok(())
    }
}

pub fn render_report<T: Serialize>(value: &T, format: ReportFormat) -> Result<Vec<u8>, CliError> {
    match format {
        ReportFormat::Json => {
            let mut v = serde_json::to_vec_pretty(value)?;
            v.push(b'\n');
            Ok(v)
        }
        ReportFormat::Csv => {
            let tree = serde_json::to_value(value)?;
            let mut rows = Vec::new();
            flatten("", &tree, &mut rows);
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record(["key", "value"])?;
            for (k, v) in rows {
                w.write_record([k, v])?;
            }
            w.into_inner().map_err(|e| CliError::Io(e.to_string()))
        }
    }
}

/// Dotted-path rows for a JSON tree; array elements are indexed.
fn flatten(prefix: &str, v: &Value, out: &mut Vec<(String, String)>) {
    let join = |k: &str| if prefix.is_empty() { k.to_string() } else { format!("{prefix}.{k}") };
    match v {
        Value::Object(m) => {
            for (k, x) in m {
                flatten(&join(k), x, out);
            }
        }
        Value::Array(a) => {
            for (i, x) in a.iter().enumerate() {
                flatten(&join(&i.to_string()), x, out);
            }
        }
        Value::Null => out.push((prefix.to_string(), String::new())),
        Value::String(s) => out.push((prefix.to_string(), s.clone())),
        other => out.push((prefix.to_string(), other.to_string())),
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Debug, Clone, PartialEq, Serialize, serde::Deserialize)]
pub struct FileEntry {
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, serde::Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub toolkit_version: String,
    pub config_sha256: String,
    pub seed: u64,
    pub wall_clock_s: f64,
    /// `ok`, or the error that ended the run after the listed files were written.
    pub status: String,
    pub files: Vec<FileEntry>,
}

pub const MANIFEST_NAME: &str = "manifest.json";

/// Write every artifact into `dir` and return the manifest entries.
pub fn write_all(dir: &Path, artifacts: &Artifacts) -> Result<Vec<FileEntry>, CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("cannot create {}: {e}", dir.display())))?;
    let mut entries = Vec::with_capacity(artifacts.files.len());
    for (name, bytes) in &artifacts.files {
        let path = dir.join(name);
        std::fs::write(&path, bytes).map_err(|e| CliError::Io(format!("cannot write {}: {e}", path.display())))?;
        entries.push(FileEntry { path: name.clone(), sha256: sha256_hex(bytes), bytes: bytes.len() as u64 });
    }
    Ok(entries)
}

pub fn write_manifest(dir: &Path, manifest: &RunManifest) -> Result<(), CliError> {
    let mut bytes = serde_json::to_vec_pretty(manifest)?;
    bytes.push(b'\n');
    std::fs::write(dir.join(MANIFEST_NAME), bytes)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_report_flattens_nested_values() {
        #[derive(Serialize)]
        struct Inner {
            b: f64,
            c: Option<f64>,
        }
        #[derive(Serialize)]
        struct Outer {
            a: u32,
            inner: Inner,
            list: Vec<&'static str>,
        }
        let v = Outer { a: 3, inner: Inner { b: 0.5, c: None }, list: vec!["x", "y"] };
        let text = String::from_utf8(render_report(&v, ReportFormat::Csv).unwrap()).unwrap();
        assert_eq!(text, "key,value\na,3\ninner.b,0.5\ninner.c,\nlist.0,x\nlist.1,y\n");
    }

    #[test]
    fn sha256_of_empty_input() {
        assert_eq!(sha256_hex(b""), "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
    }

    #[test]
    fn written_files_match_their_entries() {
        let dir = tempfile::tempdir().unwrap();
        let mut a = Artifacts::default();
        a.add("one.txt", b"abc".to_vec());
        let e = write_all(dir.path(), &a).unwrap();
        assert_eq!(e[0].bytes, 3);
        assert_eq!(e[0].sha256, sha256_hex(&std::fs::read(dir.path().join("one.txt")).unwrap()));
    }
}
