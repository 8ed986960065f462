//! Run manifests. Every command finishes by writing `manifest.json` into its
//! output directory: the resolved configuration, the seed, and a SHA-256
//! digest of each file the run produced. The manifest is accepted back as a
//! `--config` source, making any run replayable from its own record.

use crate::config::ConfigFile;
use crate::error::CliError;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::path::Path;

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    /// Subcommand that produced this directory.
    pub command: String,
    /// The seed every stage of the run used.
    pub seed: u64,
    /// Fully-resolved configuration snapshot.
    pub config: ConfigFile,
    /// Output-relative file name -> SHA-256 hex digest, sorted by name.
    pub artifacts: BTreeMap<String, String>,
}

pub fn sha256_file(path: &Path) -> Result<String, CliError> {
    let bytes = std::fs::read(path)
        .map_err(|e| CliError::schema(format!("hashing {}: {e}", path.display())))?;
    let mut hasher = Sha256::new();
    hasher.update(&bytes);
    Ok(hex::encode(hasher.finalize()))
}

/// Serializes `value` as pretty JSON with a trailing newline, the framing
/// every artifact in this project uses.
pub fn write_json_pretty<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| CliError::schema(format!("serializing {}: {e}", path.display())))?;
    text.push('\n');
    std::fs::write(path, text)
        .map_err(|e| CliError::schema(format!("writing {}: {e}", path.display())))?;
    Ok(())
}

/// Hashes the named files (paths relative to `out_dir`) and writes the
/// manifest last, so the digests cover the finished outputs.
pub fn write_manifest(
    out_dir: &Path,
    command: &str,
    seed: u64,
    config: ConfigFile,
    files: &[String],
) -> Result<(), CliError> {
    let mut artifacts = BTreeMap::new();
    for name in files {
        artifacts.insert(name.clone(), sha256_file(&out_dir.join(name))?);
    }
    let manifest = Manifest {
        command: command.to_string(),
        seed,
        config,
        artifacts,
    };
    write_json_pretty(&out_dir.join(MANIFEST_FILE), &manifest)
}
