//! CSV tables and run manifests.
//!
//! Floats are written with `{:.16e}` (17 significant digits), which
//! round-trips every `f64` exactly. A manifest records the config echo, the
//! master seed, the tool version, the wall time and a SHA-256 digest per
//! output file; [`verify_manifest`] re-hashes the files.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub const MANIFEST_NAME: &str = "manifest.json";

#[derive(Debug, Error)]
pub enum OutputError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("manifest already exists at {0}; pass --force to overwrite")]
    ManifestExists(PathBuf),
    #[error("malformed manifest: {0}")]
    Malformed(#[from] serde_json::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> OutputError + '_ {
    move |source| OutputError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Cell {
    Int(i64),
    Float(f64),
    Text(String),
}

impl Cell {
    fn render(&self) -> String {
        match self {
            Cell::Int(i) => i.to_string(),
            Cell::Float(f) => format!("{f:.16e}"),
            Cell::Text(s) => s.clone(),
        }
    }

    pub fn as_f64(&self) -> Option<f64> {
        match *self {
            Cell::Int(i) => Some(i as f64),
            Cell::Float(f) => Some(f),
            Cell::Text(_) => None,
        }
    }
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Float(v)
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v as i64)
    }
}

impl From<u64> for Cell {
    fn from(v: u64) -> Self {
        Cell::Int(v as i64)
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::Text(v.to_string())
    }
}

impl From<String> for Cell {
    fn from(v: String) -> Self {
        Cell::Text(v)
    }
}

/// A named table with a header row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table {
    pub name: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(name: &str, header: &[&str]) -> Self {
        Self {
            name: name.to_string(),
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        assert_eq!(row.len(), self.header.len(), "row width in table {}", self.name);
        self.rows.push(row);
    }

    pub fn column(&self, name: &str) -> Option<Vec<&Cell>> {
        let i = self.header.iter().position(|h| h == name)?;
        Some(self.rows.iter().map(|r| &r[i]).collect())
    }

    /// RFC 4180 CSV with `\n` line endings.
    pub fn to_csv(&self) -> Result<String, OutputError> {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
        w.write_record(&self.header)?;
        for row in &self.rows {
            w.write_record(row.iter().map(Cell::render))?;
        }
        let bytes = w.into_inner().map_err(|e| OutputError::Io {
            path: PathBuf::from(&self.name),
            source: e.into_error(),
        })?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileEntry {
    pub name: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub job: String,
    pub seed: u64,
    pub config: serde_json::Value,
    pub files: Vec<FileEntry>,
    pub wall_time_s: f64,
    pub summary: serde_json::Value,
}

impl Manifest {
    pub fn new(job: &str, seed: u64, config: serde_json::Value) -> Self {
        Self {
            tool: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            job: job.to_string(),
            seed,
            config,
            files: Vec::new(),
            wall_time_s: 0.0,
            summary: serde_json::Value::Null,
        }
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Destination directory for one job.
#[derive(Debug)]
pub struct OutputDir {
    root: PathBuf,
    files: Vec<FileEntry>,
}

impl OutputDir {
    /// Create `root` if needed. Refuses to proceed over an existing manifest
    /// unless `force`.
    pub fn create(root: &Path, force: bool) -> Result<Self, OutputError> {
        fs::create_dir_all(root).map_err(io_err(root))?;
        let manifest = root.join(MANIFEST_NAME);
        if manifest.exists() && !force {
            return Err(OutputError::ManifestExists(manifest));
        }
        Ok(Self {
            root: root.to_path_buf(),
            files: Vec::new(),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn write(&mut self, name: &str, contents: &[u8]) -> Result<(), OutputError> {
        let path = self.root.join(name);
        fs::write(&path, contents).map_err(io_err(&path))?;
        self.files.retain(|f| f.name != name);
        self.files.push(FileEntry {
            name: name.to_string(),
            sha256: sha256_hex(contents),
            bytes: contents.len() as u64,
        });
        Ok(())
    }

    pub fn write_table(&mut self, table: &Table) -> Result<(), OutputError> {
        let csv = table.to_csv()?;
        self.write(&format!("{}.csv", table.name), csv.as_bytes())
    }

    /// Write the manifest last, listing every file written so far.
    pub fn finish(self, mut manifest: Manifest) -> Result<PathBuf, OutputError> {
        manifest.files = self.files;
        write_manifest(&self.root, &manifest)
    }
}

pub fn write_manifest(root: &Path, manifest: &Manifest) -> Result<PathBuf, OutputError> {
    let path = root.join(MANIFEST_NAME);
    let mut text = serde_json::to_string_pretty(manifest)?;
    text.push('\n');
    fs::write(&path, text).map_err(io_err(&path))?;
    Ok(path)
}

pub fn read_manifest(root: &Path) -> Result<Manifest, OutputError> {
    let path = root.join(MANIFEST_NAME);
    let text = fs::read_to_string(&path).map_err(io_err(&path))?;
    Ok(serde_json::from_str(&text)?)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum VerifyIssue {
    Missing(String),
    HashMismatch { name: String, expected: String, actual: String },
}

/// Re-hash every listed file; an empty result means the outputs are intact.
pub fn verify_manifest(root: &Path) -> Result<Vec<VerifyIssue>, OutputError> {
    let manifest = read_manifest(root)?;
    let mut issues = Vec::new();
    for f in &manifest.files {
        match fs::read(root.join(&f.name)) {
            Ok(bytes) => {
                let actual = sha256_hex(&bytes);
                if actual != f.sha256 {
                    issues.push(VerifyIssue::HashMismatch {
                        name: f.name.clone(),
                        expected: f.sha256.clone(),
                        actual,
                    });
                }
            }
            Err(_) => issues.push(VerifyIssue::Missing(f.name.clone())),
        }
    }
    Ok(issues)
}
