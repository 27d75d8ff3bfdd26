//! Pipeline configuration: one declarative TOML file, every field optional,
//! with CLI flags overriding file values.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub const INTRA_THRESHOLD_FACTOR: f64 = 0.4;
pub const INTER_THRESHOLD_FACTOR: f64 = 0.6;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Context logs taken on each side of the center log.
    pub context_radius: usize,
    pub d_rich: usize,
    pub d_abs: usize,
    pub min_cluster_size: usize,
    pub min_samples: usize,
    pub hidden_dim: usize,
    pub out_dim: usize,
    pub lambda: f64,
    pub alpha: f64,
    pub leak: f64,
    /// Decision threshold factor k in D = k*R. When unset, 0.4 is used if
    /// train and test share a version tag and 0.6 otherwise.
    pub threshold_factor: Option<f64>,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
    pub oov_seed: u64,
    pub split_train: f64,
    pub split_dev: f64,
    pub split_test: f64,
    /// Refuse training sequences with anomalous labels unless disabled.
    pub train_normal_only: bool,
    /// Optional word-vector file; tokens not covered fall back to the
    /// deterministic hash provider.
    pub vectors_path: Option<PathBuf>,
    /// Version tag of the training corpus, compared against the scoring
    /// corpus tag to pick the default threshold factor.
    pub version_tag: Option<String>,
    /// Reference-graph lookahead for the baseline.
    pub lookahead: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            context_radius: 5,
            d_rich: 50,
            d_abs: 16,
            min_cluster_size: 5,
            min_samples: 5,
            hidden_dim: 64,
            out_dim: 32,
            lambda: 0.5,
            alpha: 1e-4,
            leak: 0.01,
            threshold_factor: None,
            epochs: 30,
            batch_size: 128,
            learning_rate: 1e-3,
            seed: 0,
            oov_seed: 17,
            split_train: 0.8,
            split_dev: 0.1,
            split_test: 0.1,
            train_normal_only: true,
            vectors_path: None,
            version_tag: None,
            lookahead: 3,
        }
    }
}

impl PipelineConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg: PipelineConfig =
            toml::from_str(&text).map_err(|e| Error::Usage(format!("{}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.context_radius == 0 {
            return Err(Error::Usage("context_radius must be >= 1".into()));
        }
        if let Some(k) = self.threshold_factor {
            if k <= 0.0 {
                return Err(Error::Usage(format!("threshold_factor must be > 0, got {k}")));
            }
        }
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(Error::Usage(format!("lambda must be in [0,1], got {}", self.lambda)));
        }
        if self.d_abs > self.d_rich {
            return Err(Error::Usage(format!(
                "d_abs={} must not exceed d_rich={}",
                self.d_abs, self.d_rich
            )));
        }
        Ok(())
    }

    pub fn split_ratios(&self) -> (f64, f64, f64) {
        (self.split_train, self.split_dev, self.split_test)
    }

    /// Threshold factor for scoring a corpus with `test_tag`.
    pub fn effective_threshold_factor(&self, test_tag: Option<&str>) -> f64 {
        if let Some(k) = self.threshold_factor {
            return k;
        }
        match (&self.version_tag, test_tag) {
            (Some(a), Some(b)) if a != b => INTER_THRESHOLD_FACTOR,
            _ => INTRA_THRESHOLD_FACTOR,
        }
    }
}
