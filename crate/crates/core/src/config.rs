//! Run configuration shared by every pipeline stage.
//!
//! A JSON config file may set any subset of fields; missing fields take the
//! defaults below. Command-line flags are applied on top.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evalharness::SourceMode;
use crate::quantize::{DEFAULT_K, DEFAULT_MAX_ITERS, DEFAULT_WINDOW};
use crate::verify::Thresholds;

pub const DEFAULT_TIMEOUT_MS: u64 = 30_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QuantizerConfig {
    pub window: usize,
    #[serde(rename = "K")]
    pub k: usize,
    pub max_iters: usize,
}

impl Default for QuantizerConfig {
    fn default() -> Self {
        Self { window: DEFAULT_WINDOW, k: DEFAULT_K, max_iters: DEFAULT_MAX_ITERS }
    }
}

/// Endpoint spec strings, e.g. `stub:maps/mt.json` or `http://127.0.0.1:9000`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Endpoints {
    pub mt: Option<String>,
    pub t2s: Option<String>,
    pub s2t: Option<String>,
    pub s2s: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub poses: Option<PathBuf>,
    pub tokens: Option<PathBuf>,
    pub gold: Option<PathBuf>,
    pub codebook: Option<PathBuf>,
    pub pool: Option<PathBuf>,
    pub decisions: Option<PathBuf>,
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub timeout_ms: u64,
    pub parallelism: usize,
    pub thresholds: Thresholds,
    pub quantizer: QuantizerConfig,
    pub allow_scale: bool,
    pub source_mode: SourceMode,
    /// When false, latencies are left out of evaluation reports so that
    /// repeated runs produce identical bytes.
    pub record_latency: bool,
    pub endpoints: Endpoints,
    pub paths: Paths,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            timeout_ms: DEFAULT_TIMEOUT_MS,
            parallelism: 1,
            thresholds: Thresholds::default(),
            quantizer: QuantizerConfig::default(),
            allow_scale: false,
            source_mode: SourceMode::Real,
            record_latency: true,
            endpoints: Endpoints::default(),
            paths: Paths::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Usage(format!("config {}: {e}", path.display())))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partial_file_keeps_defaults() {
        let cfg: RunConfig = serde_json::from_str(r#"{"seed": 7, "thresholds": {"rating_min_exclusive": 3, "cosine_min_exclusive": 0.5}}"#).unwrap();
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.thresholds.rating_min_exclusive, 3);
        assert_eq!(cfg.quantizer.window, 4);
        assert_eq!(cfg.timeout_ms, DEFAULT_TIMEOUT_MS);
    }

    #[test]
    fn defaults() {
        let cfg = RunConfig::default();
        assert_eq!(cfg.thresholds.rating_min_exclusive, 4);
        assert_eq!(cfg.thresholds.cosine_min_exclusive, 0.5);
        assert_eq!((cfg.quantizer.window, cfg.quantizer.k, cfg.seed), (4, 512, 0));
    }

    #[test]
    fn unknown_field_is_rejected() {
        assert!(serde_json::from_str::<RunConfig>(r#"{"sead": 1}"#).is_err());
    }
}
