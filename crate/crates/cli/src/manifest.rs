//! Run manifests: every artifact-producing command writes one JSON file
//! recording the tool version, a hash of its resolved configuration, and
//! the outputs it produced, so a result can be traced back to the exact
//! invocation that made it.

use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;

use docbin_core::{CoreError, Result};

/// FNV-1a over raw bytes. Not cryptographic; collisions are harmless
/// here because the hash only flags accidental config drift.
pub fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x100_0000_01b3);
    }
    h
}

pub fn fnv_hex(bytes: &[u8]) -> String {
    format!("{:016x}", fnv1a(bytes))
}

#[derive(Serialize)]
pub struct RunManifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: &'static str,
    /// Hash of the resolved invocation (flags after defaulting, plus any
    /// config file contents). Reruns with identical inputs match.
    pub config_fnv: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dataset_manifest: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dataset_manifest_fnv: Option<String>,
    pub started_unix_ms: u128,
    pub finished_unix_ms: u128,
    pub outputs: Vec<String>,
    /// Per-output source records; only `augment` fills this in.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub provenance: Option<serde_json::Value>,
}

impl RunManifest {
    pub fn begin(command: &'static str, config: &serde_json::Value) -> RunManifest {
        let now = unix_ms();
        RunManifest {
            tool: "docbin",
            version: env!("CARGO_PKG_VERSION"),
            command,
            config_fnv: fnv_hex(config.to_string().as_bytes()),
            seed: None,
            dataset_manifest: None,
            dataset_manifest_fnv: None,
            started_unix_ms: now,
            finished_unix_ms: now,
            outputs: Vec::new(),
            provenance: None,
        }
    }

    /// Record the patch-store manifest this run consumed or produced.
    pub fn with_dataset(mut self, manifest_path: &Path) -> Result<RunManifest> {
        let bytes = std::fs::read(manifest_path).map_err(|e| CoreError::Io {
            path: manifest_path.into(),
            source: e,
        })?;
        self.dataset_manifest = Some(manifest_path.display().to_string());
        self.dataset_manifest_fnv = Some(fnv_hex(&bytes));
        Ok(self)
    }

    pub fn push_output(&mut self, path: &Path) {
        self.outputs.push(path.display().to_string());
    }

    pub fn write(mut self, path: &Path) -> Result<()> {
        self.finished_unix_ms = unix_ms();
        let json = serde_json::to_string_pretty(&self).expect("manifest serializes");
        std::fs::write(path, json).map_err(|e| CoreError::Io {
            path: path.into(),
            source: e,
        })
    }
}

fn unix_ms() -> u128 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis())
        .unwrap_or(0)
}
