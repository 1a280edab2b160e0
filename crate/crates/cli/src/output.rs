//! Output bookkeeping: run manifests and removal of partial outputs.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;
use serde_json::Value;

/// Everything needed to reproduce an output, written next to it.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub format_version: &'static str,
    pub tool: &'static str,
    pub tool_version: &'static str,
    pub command: &'static str,
    pub argv: Vec<String>,
    /// Input files by role.
    pub inputs: BTreeMap<&'static str, String>,
    /// Resolved configuration of the command.
    pub config: Value,
    pub outputs: Vec<String>,
}

impl RunManifest {
    pub fn new(command: &'static str, config: &impl Serialize) -> Result<Self> {
        Ok(Self {
            format_version: dexretarget::io::FORMAT_VERSION,
            tool: "dexretarget",
            tool_version: env!("CARGO_PKG_VERSION"),
            command,
            argv: std::env::args().collect(),
            inputs: BTreeMap::new(),
            config: serde_json::to_value(config)?,
            outputs: Vec::new(),
        })
    }

    pub fn input(mut self, role: &'static str, path: impl AsRef<Path>) -> Self {
        self.inputs.insert(role, path.as_ref().display().to_string());
        self
    }
}

/// Manifest path for a single-file output: `states.jsonl` gives
/// `states.manifest.json`.
pub fn manifest_path(output: &Path) -> PathBuf {
    let stem = output.file_name().and_then(|s| s.to_str()).unwrap_or("output");
    let stem = stem.split('.').next().unwrap_or(stem);
    output.with_file_name(format!("{stem}.manifest.json"))
}

/// Tracks files written by a command and deletes them unless committed.
#[derive(Default)]
pub struct Outputs {
    files: Vec<PathBuf>,
    dirs: Vec<PathBuf>,
    committed: bool,
}

impl Outputs {
    /// Register `path` before writing it.
    pub fn file(&mut self, path: impl Into<PathBuf>) -> PathBuf {
        let path = path.into();
        self.files.push(path.clone());
        path
    }

    /// Create `dir` if needed; a directory created here is removed on
    /// failure when left empty.
    pub fn dir(&mut self, dir: &Path) -> Result<()> {
        if !dir.exists() {
            fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
            self.dirs.push(dir.to_path_buf());
        }
        Ok(())
    }

    pub fn write_json(&mut self, path: impl Into<PathBuf>, value: &impl Serialize) -> Result<()> {
        let path = self.file(path);
        let mut f = fs::File::create(&path).with_context(|| format!("creating {}", path.display()))?;
        serde_json::to_writer_pretty(&mut f, value)?;
        writeln!(f)?;
        Ok(())
    }

    /// Write the manifest listing every registered output and keep all files.
    pub fn commit(mut self, manifest_at: PathBuf, mut manifest: RunManifest) -> Result<()> {
        manifest.outputs = self.files.iter().map(|p| p.display().to_string()).collect();
        self.write_json(manifest_at, &manifest)?;
        self.committed = true;
        Ok(())
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
        for d in self.dirs.iter().rev() {
            let _ = fs::remove_dir(d);
        }
    }
}
