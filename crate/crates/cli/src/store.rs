//! Content-addressed artifact directory with one manifest per stage.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use pgrom::linalg::matfile::{decode_matrix, encode_matrix, write_atomic};

use crate::error::CliError;

pub fn sha256_hex(bytes: &[u8]) -> String {
    format!("{:x}", Sha256::digest(bytes))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileRecord {
    /// Relative to the output directory, `/`-separated.
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub stage: String,
    /// Hash of the stage name, its configuration slice and its input hashes.
    pub key: String,
    pub config_hash: String,
    pub inputs: Vec<FileRecord>,
    pub outputs: Vec<FileRecord>,
    pub created_unix_s: u64,
    pub wall_time_s: f64,
    pub seed: Option<u64>,
}

/// Outcome of checking a manifest's outputs against the disk.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum OutputState {
    Intact,
    Missing(PathBuf),
}

#[derive(Debug, Clone)]
pub struct Store {
    root: PathBuf,
}

impl Store {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn path(&self, rel: &str) -> PathBuf {
        self.root.join(rel)
    }

    fn manifest_path(&self, stage: &str) -> PathBuf {
        self.root.join("manifests").join(format!("{stage}.json"))
    }

    pub fn load_manifest(&self, stage: &str) -> Result<Option<Manifest>, CliError> {
        let path = self.manifest_path(stage);
        match fs::read(&path) {
            Ok(bytes) => serde_json::from_slice(&bytes)
                .map(Some)
                .map_err(|e| CliError::io(&path, std::io::Error::new(std::io::ErrorKind::InvalidData, e))),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(CliError::io(&path, e)),
        }
    }

    /// Writes the stage manifest and appends it to `manifests/history.jsonl`.
    pub fn commit(&self, manifest: &Manifest) -> Result<(), CliError> {
        let path = self.manifest_path(&manifest.stage);
        let text = serde_json::to_string_pretty(manifest).expect("manifest serializes");
        write_atomic(&path, text.as_bytes()).map_err(|e| self.core_io(&path, e))?;
        let history = self.root.join("manifests").join("history.jsonl");
        let mut f = fs::OpenOptions::new()
            .create(true)
            .append(true)
            .open(&history)
            .map_err(|e| CliError::io(&history, e))?;
        let line = serde_json::to_string(manifest).expect("manifest serializes");
        writeln!(f, "{line}").map_err(|e| CliError::io(&history, e))
    }

    fn core_io(&self, path: &Path, e: pgrom::Error) -> CliError {
        match e {
            pgrom::Error::Io(io) => CliError::io(path, io),
            other => CliError::io(path, std::io::Error::other(other.to_string())),
        }
    }

    pub fn write_bytes(&self, rel: &str, bytes: &[u8]) -> Result<FileRecord, CliError> {
        let path = self.path(rel);
        write_atomic(&path, bytes).map_err(|e| self.core_io(&path, e))?;
        Ok(FileRecord { path: rel.to_owned(), sha256: sha256_hex(bytes), bytes: bytes.len() as u64 })
    }

    pub fn write_matrix(&self, rel: &str, m: &DMatrix<f64>) -> Result<FileRecord, CliError> {
        self.write_bytes(rel, &encode_matrix(m))
    }

    pub fn write_json<T: Serialize>(&self, rel: &str, value: &T) -> Result<FileRecord, CliError> {
        let mut text = serde_json::to_string_pretty(value).expect("artifact serializes");
        text.push('\n');
        self.write_bytes(rel, text.as_bytes())
    }

    /// Reads a recorded file, checking its hash.
    pub fn read_verified(&self, record: &FileRecord, stage: &'static str) -> Result<Vec<u8>, CliError> {
        let path = self.path(&record.path);
        let bytes = match fs::read(&path) {
            Ok(b) => b,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
                return Err(CliError::MissingArtifact { stage, path })
            }
            Err(e) => return Err(CliError::io(&path, e)),
        };
        let actual = sha256_hex(&bytes);
        if actual != record.sha256 {
            return Err(CliError::HashMismatch { path, expected: record.sha256.clone(), actual });
        }
        Ok(bytes)
    }

    pub fn read_matrix(&self, record: &FileRecord, stage: &'static str) -> Result<DMatrix<f64>, CliError> {
        let bytes = self.read_verified(record, stage)?;
        decode_matrix(&bytes, &self.path(&record.path)).map_err(CliError::stage(stage))
    }

    pub fn read_json<T: for<'de> Deserialize<'de>>(&self, record: &FileRecord, stage: &'static str) -> Result<T, CliError> {
        let bytes = self.read_verified(record, stage)?;
        serde_json::from_slice(&bytes).map_err(|e| CliError::stage(stage)(e.into()))
    }

    /// Missing outputs are reported; altered ones are an error.
    pub fn check_outputs(&self, manifest: &Manifest) -> Result<OutputState, CliError> {
        for record in &manifest.outputs {
            let path = self.path(&record.path);
            match fs::read(&path) {
                Ok(bytes) => {
                    let actual = sha256_hex(&bytes);
                    if actual != record.sha256 {
                        return Err(CliError::HashMismatch { path, expected: record.sha256.clone(), actual });
                    }
                }
                Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(OutputState::Missing(path)),
                Err(e) => return Err(CliError::io(&path, e)),
            }
        }
        Ok(OutputState::Intact)
    }
}

pub fn now_unix_s() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}
