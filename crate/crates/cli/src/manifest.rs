//! Run manifests: what was run, with which fully resolved settings, and
//! which files it produced.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};

use crate::Command;

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    /// The command with every default materialized; replaying it reproduces
    /// the numeric artifacts.
    pub command: Command,
    pub seed: u64,
    pub version: String,
    pub started: String,
    pub finished: String,
    pub artifacts: Vec<String>,
    /// Extra facts worth keeping next to the results.
    #[serde(default)]
    pub notes: Vec<String>,
}

pub fn now() -> String {
    chrono::Utc::now().to_rfc3339()
}

impl RunManifest {
    pub fn new(command: Command, seed: u64, started: String) -> Self {
        Self {
            command,
            seed,
            version: env!("CARGO_PKG_VERSION").to_string(),
            started,
            finished: String::new(),
            artifacts: Vec::new(),
            notes: Vec::new(),
        }
    }

    pub fn write(mut self, dir: &Path) -> Result<PathBuf> {
        self.finished = now();
        let path = dir.join(MANIFEST_FILE);
        std::fs::write(&path, serde_json::to_string_pretty(&self)? + "\n")
            .with_context(|| format!("writing {}", path.display()))?;
        Ok(path)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading manifest {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing manifest {}", path.display()))
    }
}

/// Collects artifact paths relative to the output directory.
#[derive(Debug)]
pub struct Artifacts {
    dir: PathBuf,
    names: Vec<String>,
}

impl Artifacts {
    pub fn new(dir: &Path) -> Result<Self> {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        Ok(Self { dir: dir.to_path_buf(), names: Vec::new() })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn write(&mut self, name: &str, contents: &str) -> Result<PathBuf> {
        let p = self.dir.join(name);
        std::fs::write(&p, contents).with_context(|| format!("writing {}", p.display()))?;
        self.names.push(name.to_string());
        Ok(p)
    }

    /// Serializes `value` as pretty JSON with a trailing newline.
    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<PathBuf> {
        self.write(name, &(serde_json::to_string_pretty(value)? + "\n"))
    }

    /// Registers a file produced by other means.
    pub fn record(&mut self, name: &str) {
        self.names.push(name.to_string());
    }

    pub fn finish(self, mut manifest: RunManifest) -> Result<PathBuf> {
        manifest.artifacts = self.names;
        manifest.write(&self.dir)
    }
}
