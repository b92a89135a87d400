//! Run directories: artifact bookkeeping and the atomically written
//! `manifest.json`.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

pub const MANIFEST: &str = "manifest.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TerminalStatus {
    Completed,
    SupercriticalDetected,
    Unstable,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub config: serde_json::Value,
    /// Paths relative to the run directory.
    pub artifacts: Vec<String>,
    pub versions: BTreeMap<String, String>,
    pub wall_clock_seconds: f64,
    pub status: TerminalStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
}

impl RunManifest {
    pub fn read(dir: &Path) -> Result<Self> {
        let path = dir.join(MANIFEST);
        let text = fs::read_to_string(&path).map_err(|e| CliError::io(&path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

/// Collects the files of one run directory and finishes with the manifest.
#[derive(Debug)]
pub struct RunDir {
    dir: PathBuf,
    artifacts: Vec<String>,
    started: Instant,
}

fn write_atomic(path: &Path, contents: &str) -> Result<()> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, contents).map_err(|e| CliError::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| CliError::io(path, e))
}

impl RunDir {
    /// Create `dir` and remove any manifest left by an earlier run, so an
    /// interrupted run never appears complete.
    pub fn open(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        let stale = dir.join(MANIFEST);
        match fs::remove_file(&stale) {
            Ok(()) => {}
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => {}
            Err(e) => return Err(CliError::io(stale, e)),
        }
        Ok(Self {
            dir: dir.to_path_buf(),
            artifacts: Vec::new(),
            started: Instant::now(),
        })
    }

    pub fn path(&self) -> &Path {
        &self.dir
    }

    /// Write `rel` (a path relative to the run directory) and record it.
    pub fn write(&mut self, rel: &str, contents: &str) -> Result<()> {
        let path = self.dir.join(rel);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(|e| CliError::io(parent, e))?;
        }
        write_atomic(&path, contents)?;
        if !self.artifacts.iter().any(|a| a == rel) {
            self.artifacts.push(rel.to_string());
        }
        Ok(())
    }

    /// Record a file written by someone else (e.g. a nested run).
    pub fn adopt(&mut self, rel: &str) {
        self.artifacts.push(rel.to_string());
    }

    pub fn finish(
        self,
        command: &str,
        config: serde_json::Value,
        status: TerminalStatus,
        detail: Option<String>,
    ) -> Result<RunManifest> {
        for a in &self.artifacts {
            let p = self.dir.join(a);
            if !p.is_file() {
                return Err(CliError::io(p, std::io::Error::from(std::io::ErrorKind::NotFound)));
            }
        }
        let versions = BTreeMap::from([
            ("pkslab".to_string(), env!("CARGO_PKG_VERSION").to_string()),
            ("pkslab-core".to_string(), pkslab_core::VERSION.to_string()),
        ]);
        let manifest = RunManifest {
            command: command.to_string(),
            config,
            artifacts: self.artifacts,
            versions,
            wall_clock_seconds: self.started.elapsed().as_secs_f64(),
            status,
            detail,
        };
        let mut text = serde_json::to_string_pretty(&manifest)?;
        text.push('\n');
        write_atomic(&self.dir.join(MANIFEST), &text)?;
        Ok(manifest)
    }
}
