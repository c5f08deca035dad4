use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const MANIFEST_FILE: &str = "run_manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub config: serde_json::Value,
    pub seed: Option<u64>,
    /// sha256 of every input file, keyed by path.
    pub inputs: BTreeMap<String, String>,
    /// Written files relative to the output directory.
    pub artifacts: Vec<String>,
    pub duration_secs: f64,
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// Collects input hashes and artifacts for one command invocation.
pub struct Recorder {
    command: String,
    out: PathBuf,
    started: Instant,
    inputs: BTreeMap<String, String>,
    artifacts: Vec<String>,
}

impl Recorder {
    pub fn new(command: &str, out: &Path) -> Result<Self> {
        std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
        Ok(Self {
            command: command.to_string(),
            out: out.to_path_buf(),
            started: Instant::now(),
            inputs: BTreeMap::new(),
            artifacts: Vec::new(),
        })
    }

    /// Hashes a file, or every regular file of a directory in name order
    /// (skipping any manifest found there).
    pub fn input(&mut self, path: &Path) -> Result<()> {
        if path.is_dir() {
            let mut entries: Vec<PathBuf> = std::fs::read_dir(path)?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.is_file() && p.file_name().is_some_and(|n| n != MANIFEST_FILE))
                .collect();
            entries.sort();
            for p in entries {
                self.inputs.insert(p.display().to_string(), sha256_file(&p)?);
            }
        } else {
            self.inputs.insert(path.display().to_string(), sha256_file(path)?);
        }
        Ok(())
    }

    /// Writes `contents` to `rel` under the output directory.
    pub fn write(&mut self, rel: impl AsRef<Path>, contents: &str) -> Result<PathBuf> {
        let path = self.out.join(rel.as_ref());
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent)?;
        }
        std::fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))?;
        self.artifacts.push(rel.as_ref().display().to_string());
        Ok(path)
    }

    /// Records a file some other writer placed under the output directory.
    pub fn artifact(&mut self, rel: &str) {
        self.artifacts.push(rel.to_string());
    }

    pub fn write_json<T: Serialize>(&mut self, rel: impl AsRef<Path>, value: &T) -> Result<PathBuf> {
        let mut s = serde_json::to_string_pretty(value)?;
        s.push('\n');
        self.write(rel, &s)
    }

    pub fn finish(self, config: serde_json::Value, seed: Option<u64>) -> Result<RunManifest> {
        let manifest = RunManifest {
            command: self.command,
            config,
            seed,
            inputs: self.inputs,
            artifacts: self.artifacts,
            duration_secs: self.started.elapsed().as_secs_f64(),
        };
        let mut s = serde_json::to_string_pretty(&manifest)?;
        s.push('\n');
        std::fs::write(self.out.join(MANIFEST_FILE), s)?;
        Ok(manifest)
    }
}
