use std::fs;
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{Context, Result};
use connectome_grl::dataset::{Manifest, MANIFEST};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const RUN_MANIFEST: &str = "run_manifest.json";

/// Provenance of one invocation, written before any heavy work starts.
#[derive(Debug, Serialize, Deserialize)]
pub struct RunManifest {
    pub command_line: Vec<String>,
    pub config: serde_json::Value,
    pub base_seed: u64,
    pub version: String,
    pub dataset_digest: Option<String>,
    pub started_unix: u64,
}

impl RunManifest {
    pub fn new(config: serde_json::Value, base_seed: u64, data: Option<&Path>) -> Result<Self> {
        Ok(RunManifest {
            command_line: std::env::args().collect(),
            config,
            base_seed,
            version: env!("CARGO_PKG_VERSION").to_string(),
            dataset_digest: data.map(dataset_digest).transpose()?,
            started_unix: SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs()),
        })
    }

    pub fn write(&self, out: &Path) -> Result<()> {
        fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
        let path = out.join(RUN_MANIFEST);
        fs::write(&path, serde_json::to_string_pretty(self)?).with_context(|| format!("writing {}", path.display()))
    }
}

/// SHA-256 over the dataset manifest and every matrix file it names, in
/// manifest order, each prefixed by its relative path.
pub fn dataset_digest(dir: &Path) -> Result<String> {
    let mpath = dir.join(MANIFEST);
    let text = fs::read(&mpath).with_context(|| format!("reading {}", mpath.display()))?;
    let manifest: Manifest =
        serde_json::from_slice(&text).with_context(|| format!("parsing {}", mpath.display()))?;
    let mut h = Sha256::new();
    let mut feed = |name: &str, bytes: &[u8]| {
        h.update((name.len() as u64).to_le_bytes());
        h.update(name.as_bytes());
        h.update((bytes.len() as u64).to_le_bytes());
        h.update(bytes);
    };
    feed(MANIFEST, &text);
    for s in &manifest.subjects {
        for rel in [&s.sc, &s.fc] {
            let p = dir.join(rel);
            let bytes = fs::read(&p).with_context(|| format!("reading {}", p.display()))?;
            feed(rel, &bytes);
        }
    }
    Ok(hex::encode(h.finalize()))
}
