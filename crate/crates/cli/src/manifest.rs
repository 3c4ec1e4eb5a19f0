use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FileEntry {
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub tool_version: String,
    pub config_sha256: String,
    pub created_unix: u64,
    pub files: Vec<FileEntry>,
}

/// Files written by one command. On drop without `commit`, they are removed
/// again, together with any directories the command created.
pub struct Outputs {
    root: PathBuf,
    files: Vec<PathBuf>,
    created_dirs: Vec<PathBuf>,
    committed: bool,
}

impl Outputs {
    pub fn new(root: impl Into<PathBuf>) -> Result<Self> {
        let mut out = Self { root: root.into(), files: Vec::new(), created_dirs: Vec::new(), committed: false };
        let root = out.root.clone();
        out.ensure_dir(&root)?;
        Ok(out)
    }

    /// Creates `dir`, remembering which levels did not exist before.
    pub fn ensure_dir(&mut self, dir: &Path) -> Result<()> {
        let mut missing = Vec::new();
        let mut cur = Some(dir);
        while let Some(d) = cur {
            if d.as_os_str().is_empty() || d.exists() {
                break;
            }
            missing.push(d.to_path_buf());
            cur = d.parent();
        }
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        self.created_dirs.extend(missing.into_iter().rev());
        Ok(())
    }

    /// Writes `bytes` to `rel` under the root.
    pub fn write(&mut self, rel: impl AsRef<Path>, bytes: &[u8]) -> Result<PathBuf> {
        let path = self.root.join(rel);
        if let Some(parent) = path.parent() {
            let parent = parent.to_path_buf();
            self.ensure_dir(&parent)?;
        }
        fs::write(&path, bytes).with_context(|| format!("writing {}", path.display()))?;
        self.files.push(path.clone());
        Ok(path)
    }

    /// Registers a file some other writer produced under the root.
    pub fn track(&mut self, path: PathBuf) {
        self.files.push(path);
    }

    /// Writes the manifest as `manifest_name` under the root and keeps everything.
    pub fn commit(mut self, manifest_name: &str, command: &str, config_sha256: &str) -> Result<RunManifest> {
        let mut files = Vec::with_capacity(self.files.len());
        let mut paths = self.files.clone();
        paths.sort();
        paths.dedup();
        for p in &paths {
            let bytes = fs::read(p).with_context(|| format!("re-reading {}", p.display()))?;
            let rel = p.strip_prefix(&self.root).unwrap_or(p);
            files.push(FileEntry {
                path: rel.to_string_lossy().replace('\\', "/"),
                sha256: hex::encode(Sha256::digest(&bytes)),
                bytes: bytes.len() as u64,
            });
        }
        let manifest = RunManifest {
            command: command.to_string(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            config_sha256: config_sha256.to_string(),
            created_unix: SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0),
            files,
        };
        let text = serde_json::to_string_pretty(&manifest)?;
        fs::write(self.root.join(manifest_name), text)?;
        self.committed = true;
        Ok(manifest)
    }
}

impl Drop for Outputs {
    fn drop(&mut self) {
        if self.committed {
            return;
        }
        for f in &self.files {
            let _ = fs::remove_file(f);
        }
        for d in self.created_dirs.iter().rev() {
            let _ = fs::remove_dir_all(d);
        }
    }
}
