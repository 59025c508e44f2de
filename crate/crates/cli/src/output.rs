//! Run metadata stamped into every artifact.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

pub const TOOL: &str = concat!("dcm ", env!("CARGO_PKG_VERSION"));

/// Resolved settings of one invocation. Paths are left out so that moving
/// files around does not change the hash.
#[derive(Debug, Clone)]
pub struct RunMeta {
    pub seed: u64,
    pub config: serde_json::Value,
    pub config_hash: String,
}

impl RunMeta {
    pub fn new(seed: u64, config: &impl Serialize) -> Result<Self> {
        let config = serde_json::to_value(config)?;
        let hash = Sha256::digest(serde_json::to_string(&config)?.as_bytes());
        Ok(Self {
            seed,
            config,
            config_hash: hex::encode(hash),
        })
    }

    pub fn csv_header(&self) -> String {
        format!(
            "# tool: {TOOL}\n# seed: {}\n# config_hash: {}\n# config: {}\n",
            self.seed, self.config_hash, self.config
        )
    }

    pub fn json(&self) -> serde_json::Value {
        serde_json::json!({
            "tool": TOOL,
            "seed": self.seed,
            "config_hash": self.config_hash,
            "config": self.config,
        })
    }

    pub fn write_csv(&self, path: &Path, body: &str) -> Result<()> {
        fs::write(path, format!("{}{body}", self.csv_header())).with_context(|| format!("writing {}", path.display()))
    }

    /// Adds a `run` object to a JSON document on disk.
    pub fn stamp_json(&self, path: &Path) -> Result<()> {
        let text = fs::read_to_string(path)?;
        let mut doc: serde_json::Value = serde_json::from_str(&text)?;
        if let Some(obj) = doc.as_object_mut() {
            obj.insert("run".into(), self.json());
        }
        fs::write(path, serde_json::to_string_pretty(&doc)?)?;
        Ok(())
    }

    pub fn write_json(&self, path: &Path, mut doc: serde_json::Value) -> Result<()> {
        if let Some(obj) = doc.as_object_mut() {
            obj.insert("run".into(), self.json());
        }
        fs::write(path, serde_json::to_string_pretty(&doc)?).with_context(|| format!("writing {}", path.display()))
    }
}

/// `dir/stem<suffix>` for a sibling of `path`.
pub fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("out");
    path.with_file_name(format!("{stem}{suffix}"))
}
