//! Run manifests and the file writer that feeds them.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::pipeline::ResampleSummary;
use super::LabError;

pub const CODE_VERSION: &str = env!("CARGO_PKG_VERSION");

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileEntry {
    /// Relative to the output directory, `/`-separated.
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelFailure {
    pub model: String,
    pub message: String,
}

/// Everything needed to audit one command run. No timestamps, so identical
/// inputs give an identical manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub code_version: String,
    pub config_hash: String,
    pub profile_hash: String,
    pub master_seed: u64,
    pub stage_seeds: BTreeMap<String, u64>,
    pub files: Vec<FileEntry>,
    #[serde(default)]
    pub failures: Vec<ModelFailure>,
    #[serde(default)]
    pub resampling: Option<ResampleSummary>,
}

impl RunManifest {
    pub fn file_name(command: &str) -> String {
        format!("manifest_{command}.json")
    }

    pub fn load(path: &Path) -> Result<Self, LabError> {
        let text = fs::read_to_string(path).map_err(|e| LabError::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| LabError::Format {
            path: path.display().to_string(),
            message: e.to_string(),
        })
    }

    /// Recomputes every checksum under `root`; returns the entries that differ.
    pub fn verify(&self, root: &Path) -> Result<Vec<String>, LabError> {
        let mut bad = Vec::new();
        for f in &self.files {
            let p = root.join(&f.path);
            let bytes = fs::read(&p).map_err(|e| LabError::io(&p, e))?;
            if sha256_hex(&bytes) != f.sha256 {
                bad.push(f.path.clone());
            }
        }
        Ok(bad)
    }
}

/// Writes files below an output root and remembers them. Unless committed,
/// everything written is removed again when the writer is dropped.
pub struct OutputWriter {
    root: PathBuf,
    written: Vec<(PathBuf, FileEntry)>,
    committed: bool,
}

impl OutputWriter {
    pub fn new(root: &Path) -> Result<Self, LabError> {
        fs::create_dir_all(root).map_err(|e| LabError::io(root, e))?;
        Ok(Self {
            root: root.to_path_buf(),
            written: Vec::new(),
            committed: false,
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn write(&mut self, relative: &str, bytes: &[u8]) -> Result<(), LabError> {
        let path = self.root.join(relative);
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir).map_err(|e| LabError::io(dir, e))?;
        }
        fs::write(&path, bytes).map_err(|e| LabError::io(&path, e))?;
        self.written.retain(|(p, _)| *p != path);
        self.written.push((
            path,
            FileEntry {
                path: relative.to_string(),
                sha256: sha256_hex(bytes),
                bytes: bytes.len() as u64,
            },
        ));
        Ok(())
    }

    pub fn write_json<T: Serialize>(&mut self, relative: &str, value: &T) -> Result<(), LabError> {
        let mut text = serde_json::to_string_pretty(value).expect("report types serialize");
        text.push('\n');
        self.write(relative, text.as_bytes())
    }

    pub fn entries(&self) -> Vec<FileEntry> {
        self.written.iter().map(|(_, e)| e.clone()).collect()
    }

    /// Writes the manifest, listing every file written so far, and keeps all
    /// outputs.
    pub fn commit(mut self, mut manifest: RunManifest) -> Result<RunManifest, LabError> {
        manifest.files = self.entries();
        let name = RunManifest::file_name(&manifest.command);
        self.write_json(&name, &manifest)?;
        self.committed = true;
        Ok(manifest)
    }
}

impl Drop for OutputWriter {
    fn drop(&mut self) {
        if self.committed {
            return;
        }
        for (path, _) in &self.written {
            if let Err(e) = fs::remove_file(path) {
                log::warn!("could not remove partial output {}: {e}", path.display());
            }
        }
    }
}
