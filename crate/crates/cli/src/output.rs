//! Single-writer output collector: all files of a command are written here,
//! after every parallel run has finished.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub struct Collector {
    dir: PathBuf,
    written: Vec<PathBuf>,
}

impl Collector {
    pub fn create(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir).with_context(|| format!("creating output directory {}", dir.display()))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            written: Vec::new(),
        })
    }

    pub fn write(&mut self, name: &str, body: &str) -> Result<PathBuf> {
        let path = self.dir.join(name);
        fs::write(&path, body).with_context(|| format!("writing {}", path.display()))?;
        self.written.push(path.clone());
        Ok(path)
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<PathBuf> {
        let mut body = serde_json::to_string_pretty(value)?;
        body.push('\n');
        self.write(name, &body)
    }

    pub fn files(&self) -> &[PathBuf] {
        &self.written
    }

    pub fn into_files(self) -> Vec<PathBuf> {
        self.written
    }
}

/// Top-level layout of every `summary.json`.
#[derive(Debug, Serialize)]
pub struct Summary<C: Serialize, R: Serialize, E: Serialize> {
    pub command: String,
    pub version: &'static str,
    pub config: C,
    pub wallclock_seconds: f64,
    pub runs: Vec<R>,
    pub extra: E,
}
