//! Run manifest written next to every set of outputs.

use anyhow::{Context, Result};
use serde_json::{json, Map, Value};
use sha2::{Digest, Sha256};
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).with_context(|| format!("cannot read {}", path.display()))?;
    let digest = Sha256::digest(&bytes);
    Ok(digest.iter().map(|b| format!("{:02x}", b)).collect())
}

pub struct Manifest {
    command: String,
    seed: Option<u64>,
    config: Map<String, Value>,
    inputs: Vec<PathBuf>,
    outputs: Vec<PathBuf>,
    out_dir: PathBuf,
    started: Instant,
}

impl Manifest {
    pub fn new(command: &str, out_dir: &Path) -> Result<Self> {
        fs::create_dir_all(out_dir).with_context(|| format!("cannot create {}", out_dir.display()))?;
        Ok(Self {
            command: command.to_string(),
            seed: None,
            config: Map::new(),
            inputs: Vec::new(),
            outputs: Vec::new(),
            out_dir: out_dir.to_path_buf(),
            started: Instant::now(),
        })
    }

    pub fn seed(&mut self, seed: u64) {
        self.seed = Some(seed);
    }

    pub fn set(&mut self, key: &str, value: impl Into<Value>) {
        self.config.insert(key.to_string(), value.into());
    }

    pub fn input(&mut self, path: &Path) {
        self.inputs.push(path.to_path_buf());
    }

    /// Writes `contents` to `name` inside the output directory.
    pub fn write(&mut self, name: &str, contents: &str) -> Result<()> {
        let path = self.out_dir.join(name);
        fs::write(&path, contents).with_context(|| format!("cannot write {}", path.display()))?;
        self.outputs.push(path);
        Ok(())
    }

    pub fn finish(self) -> Result<()> {
        let digest_map = |paths: &[PathBuf]| -> Result<Map<String, Value>> {
            paths
                .iter()
                .map(|p| Ok((p.display().to_string(), Value::String(sha256_file(p)?))))
                .collect()
        };
        let doc = json!({
            "command": self.command,
            "version": env!("CARGO_PKG_VERSION"),
            "seed": self.seed,
            "config": self.config,
            "inputs": digest_map(&self.inputs)?,
            "outputs": digest_map(&self.outputs)?,
            "wall_clock_seconds": self.started.elapsed().as_secs_f64(),
        });
        let path = self.out_dir.join("manifest.json");
        fs::write(&path, serde_json::to_string_pretty(&doc)? + "\n")
            .with_context(|| format!("cannot write {}", path.display()))?;
        Ok(())
    }
}

/// Flat `{"key": value}` record, one pair per line.
pub fn flat_json(pairs: &[(&str, Value)]) -> String {
    let map: Map<String, Value> = pairs.iter().map(|(k, v)| (k.to_string(), v.clone())).collect();
    serde_json::to_string_pretty(&Value::Object(map)).expect("plain values serialize") + "\n"
}
