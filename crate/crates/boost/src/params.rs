use serde::{Deserialize, Serialize};

use crate::error::{BoostError, Result};

/// Training hyperparameters.
///
/// Missing fields take their [`Default`] values when deserialized, so a
/// config file only needs to name what it overrides.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainParams {
    /// Maximum leaves per tree.
    pub num_leaves: usize,
    pub learning_rate: f64,
    /// Fraction of features drawn for each tree.
    pub colsample_bytree: f64,
    /// Fraction of rows kept by plain row subsampling.
    pub subsample: f64,
    /// Iterations between row resampling; 0 disables subsampling.
    pub subsample_freq: usize,
    pub min_child_samples: usize,
    pub num_iterations: usize,
    pub max_bins: usize,
    /// Gradient-based one-side sampling. Replaces plain subsampling when on.
    pub goss_enabled: bool,
    /// Fraction of largest-gradient rows always kept.
    pub goss_top_rate: f64,
    /// Fraction of all rows sampled from the remainder.
    pub goss_other_rate: f64,
    pub efb_enabled: bool,
    /// Fraction of rows on which two bundled features may both be nonzero.
    pub efb_max_conflict: f64,
    pub seed: u64,
    /// Fixed floating-point reduction order independent of thread count.
    pub deterministic: bool,
}

impl Default for TrainParams {
    fn default() -> Self {
        Self {
            num_leaves: 31,
            learning_rate: 0.1,
            colsample_bytree: 1.0,
            subsample: 1.0,
            subsample_freq: 0,
            min_child_samples: 20,
            num_iterations: 100,
            max_bins: 255,
            goss_enabled: false,
            goss_top_rate: 0.2,
            goss_other_rate: 0.1,
            efb_enabled: true,
            efb_max_conflict: 0.0,
            seed: 0,
            deterministic: true,
        }
    }
}

impl TrainParams {
    /// Hyperparameters tuned for gait re-identification
    /// (87 leaves, rate 0.0883, column/row sampling 0.8652/0.8389 every
    /// 10 iterations, at least 18 rows per leaf).
    pub fn gait_tuned() -> Self {
        Self {
            num_leaves: 87,
            learning_rate: 0.0883,
            colsample_bytree: 0.8652,
            subsample: 0.8389,
            subsample_freq: 10,
            min_child_samples: 18,
            ..Self::default()
        }
    }

    /// Copy with every form of row and column sampling switched off.
    pub fn without_sampling(&self) -> Self {
        Self {
            colsample_bytree: 1.0,
            subsample: 1.0,
            subsample_freq: 0,
            goss_enabled: false,
            ..self.clone()
        }
    }

    pub(crate) fn bagging_active(&self) -> bool {
        !self.goss_enabled && self.subsample < 1.0 && self.subsample_freq > 0
    }

    pub fn validate(&self) -> Result<()> {
        fn bad(name: &'static str, reason: impl Into<String>) -> Result<()> {
            Err(BoostError::InvalidParam {
                name,
                reason: reason.into(),
            })
        }
        let unit = |v: f64| v > 0.0 && v <= 1.0;
        if self.num_leaves < 2 {
            return bad("num_leaves", "must be at least 2");
        }
        if !unit(self.learning_rate) {
            return bad("learning_rate", "must lie in (0, 1]");
        }
        if !unit(self.colsample_bytree) {
            return bad("colsample_bytree", "must lie in (0, 1]");
        }
        if !unit(self.subsample) {
            return bad("subsample", "must lie in (0, 1]");
        }
        if self.min_child_samples < 1 {
            return bad("min_child_samples", "must be at least 1");
        }
        if !(2..=255).contains(&self.max_bins) {
            return bad("max_bins", "must lie in [2, 255]");
        }
        if self.goss_enabled {
            let (p, q) = (self.goss_top_rate, self.goss_other_rate);
            if !unit(p) {
                return bad("goss_top_rate", "must lie in (0, 1]");
            }
            if !(0.0..=1.0).contains(&q) || p + q > 1.0 + 1e-12 {
                return bad("goss_other_rate", "must be >= 0 with top + other <= 1");
            }
        }
        if !(0.0..=1.0).contains(&self.efb_max_conflict) {
            return bad("efb_max_conflict", "must lie in [0, 1]");
        }
        Ok(())
    }
}
