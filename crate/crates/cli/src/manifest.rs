//! Run manifests written next to every output.

use std::path::PathBuf;

use resilient_p2p::SimConfig;
use serde::{Deserialize, Serialize};
use serde_json::Value;

pub const METRICS_FILE: &str = "metrics.csv";
pub const SUMMARY_FILE: &str = "summary.csv";
pub const MANIFEST_FILE: &str = "manifest.json";

/// Everything needed to repeat a run: feeding the manifest back to `run`
/// reproduces the metrics byte for byte.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub version: String,
    pub seed: u64,
    pub config: SimConfig,
    pub overrides: Vec<String>,
    pub started_at: String,
    pub finished_at: String,
    pub outputs: Outputs,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Outputs {
    pub metrics: PathBuf,
    pub summary: PathBuf,
    pub manifest: PathBuf,
}

pub fn version() -> String {
    format!("resilient-p2p {}", env!("CARGO_PKG_VERSION"))
}

/// The config inside `doc` if it is a manifest, else `doc` itself.
pub fn config_document(doc: Value) -> Value {
    match doc {
        Value::Object(mut map) if map.contains_key("version") && map.contains_key("config") => {
            map.remove("config").expect("checked above")
        }
        other => other,
    }
}
