use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{io, CliError};

pub const MANIFEST_NAME: &str = "manifest.json";

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    /// Latest run of each subcommand.
    pub runs: BTreeMap<String, Run>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Run {
    pub config: toml::Value,
    pub artifacts: Vec<Artifact>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Artifact {
    /// Relative to the output directory.
    pub path: String,
    pub bytes: u64,
    pub sha256: String,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Records `artifacts` (paths relative to `out`) under `command`, keeping
/// entries of other subcommands.
pub fn record(out: &Path, command: &str, config: &crate::config::PipelineConfig, artifacts: &[String]) -> Result<(), CliError> {
    let path = out.join(MANIFEST_NAME);
    let mut manifest = match std::fs::read(&path) {
        Ok(bytes) => serde_json::from_slice(&bytes).unwrap_or_default(),
        Err(_) => Manifest::default(),
    };
    manifest.tool = "wavesplat".into();
    manifest.version = env!("CARGO_PKG_VERSION").into();
    let mut entries = Vec::with_capacity(artifacts.len());
    for rel in artifacts {
        let bytes = std::fs::read(out.join(rel)).map_err(io(rel))?;
        entries.push(Artifact {
            path: rel.clone(),
            bytes: bytes.len() as u64,
            sha256: sha256_hex(&bytes),
        });
    }
    let config = toml::Value::try_from(config).expect("config converts to TOML");
    manifest.runs.insert(command.into(), Run { config, artifacts: entries });
    let json = serde_json::to_vec_pretty(&manifest).expect("manifest serializes");
    std::fs::write(&path, json).map_err(io(&path.display().to_string()))
}
