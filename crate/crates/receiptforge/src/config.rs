//! Unified pipeline configuration, loadable from TOML or JSON. Every field
//! has a default so a partial file only overrides what it names.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::crop::CropConfig;
use crate::detect::DetectionConfig;
use crate::layout::LayoutParams;
use crate::semantics::{default_stop_words, DEFAULT_MATCH_THRESHOLD};
use crate::sign::SignConfig;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub detection: DetectionConfig,
    pub crop: CropConfig,
    pub sign: SignConfig,
    pub layout: LayoutParams,
    /// Concept matching acceptance threshold.
    pub match_threshold: f64,
    /// Override for the per-sample OCR corruption rate; `None` keeps each
    /// sample's own rate.
    pub ocr_noise_rate: Option<f64>,
    pub stop_words: Vec<String>,
    /// Receipt segmentation window edge length, pixels.
    pub receipt_input_size: usize,
    /// Receipt segmentation window step, pixels.
    pub receipt_stride: usize,
    pub seed: u64,
    pub jobs: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            detection: DetectionConfig::default(),
            crop: CropConfig::default(),
            sign: SignConfig::default(),
            layout: LayoutParams::default(),
            match_threshold: DEFAULT_MATCH_THRESHOLD,
            ocr_noise_rate: None,
            stop_words: default_stop_words(),
            receipt_input_size: 227,
            receipt_stride: 113,
            seed: 42,
            jobs: 1,
        }
    }
}

impl PipelineConfig {
    /// Load from a `.toml` or `.json` file, judged by extension (JSON when
    /// in doubt).
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| anyhow::anyhow!("{}: {e}", path.display()))?;
        let cfg = if path.extension().and_then(|e| e.to_str()) == Some("toml") {
            toml::from_str(&text)?
        } else {
            serde_json::from_str(&text)?
        };
        Ok(cfg)
    }
}
