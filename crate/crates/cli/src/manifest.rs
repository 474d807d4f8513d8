//! Run directories and their manifest.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

#[derive(Debug, Serialize)]
struct Manifest<'a> {
    tool: &'static str,
    version: &'static str,
    command: &'a str,
    arguments: &'a BTreeMap<String, String>,
    /// sha256 of every input file, keyed by the path as given.
    inputs: BTreeMap<String, String>,
    outputs: &'a [String],
}

/// Collects what a command read and wrote; written as `manifest.json`.
pub struct RunDir {
    dir: PathBuf,
    command: &'static str,
    arguments: BTreeMap<String, String>,
    inputs: Vec<PathBuf>,
    outputs: Vec<String>,
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).with_context(|| format!("hashing {}", path.display()))?;
    Ok(Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect())
}

impl RunDir {
    pub fn create(dir: &Path, command: &'static str) -> Result<Self> {
        std::fs::create_dir_all(dir).map_err(|e| strategy_auction::Error::Io { path: dir.into(), source: e })?;
        Ok(RunDir {
            dir: dir.to_path_buf(),
            command,
            arguments: BTreeMap::new(),
            inputs: Vec::new(),
            outputs: Vec::new(),
        })
    }

    pub fn arg(&mut self, key: &str, value: impl ToString) -> &mut Self {
        self.arguments.insert(key.to_string(), value.to_string());
        self
    }

    pub fn input(&mut self, path: &Path) -> &mut Self {
        self.inputs.push(path.to_path_buf());
        self
    }

    /// Path of an output file, recorded in the manifest.
    pub fn output(&mut self, name: &str) -> PathBuf {
        self.outputs.push(name.to_string());
        self.dir.join(name)
    }

    pub fn finish(self) -> Result<()> {
        let mut inputs = BTreeMap::new();
        for p in &self.inputs {
            inputs.insert(p.display().to_string(), sha256_file(p)?);
        }
        let m = Manifest {
            tool: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            command: self.command,
            arguments: &self.arguments,
            inputs,
            outputs: &self.outputs,
        };
        strategy_auction::io::write_json(&self.dir.join("manifest.json"), &m)?;
        Ok(())
    }
}
