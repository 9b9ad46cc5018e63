//! Multiclass boosting: one tree per class per iteration on softmax
//! cross-entropy gradients.

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bins::{bin_columns, build_bins, BinMapper};
use crate::data::{Dataset, FeatureMatrix};
use crate::efb::{efb_bundle, BundlePlan};
use crate::error::{BoostError, Result};
use crate::histogram::RowStats;
use crate::objective::{log_loss, softmax, softmax_into};
use crate::params::TrainParams;
use crate::sampling::{bagging_sample, column_sample, goss_sample, RowSample};
use crate::tree::{grow_tree_leafwise, BinnedData, GrowLimits, Tree};

pub const MODEL_FORMAT_VERSION: u32 = 1;

/// A trained multiclass ensemble.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoostedEnsemble {
    pub format_version: u32,
    /// Sorted class labels; class index `k` refers to `class_labels[k]`.
    pub class_labels: Vec<i64>,
    pub feature_names: Vec<String>,
    pub learning_rate: f64,
    pub params: TrainParams,
    pub bin_mappers: Vec<BinMapper>,
    /// `trees[iteration][class]`.
    pub trees: Vec<Vec<Tree>>,
}

/// Mean cross-entropy after each iteration.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub train_loss: Vec<f64>,
    pub valid_loss: Vec<f64>,
}

pub fn train(data: &Dataset, params: &TrainParams) -> Result<BoostedEnsemble> {
    train_with_validation(data, None, params).map(|(m, _)| m)
}

/// Trains on `data`, tracking the loss on `valid` when given.
pub fn train_with_validation(
    data: &Dataset,
    valid: Option<&Dataset>,
    params: &TrainParams,
) -> Result<(BoostedEnsemble, TrainLog)> {
    params.validate()?;
    let n = data.n_rows();
    if n == 0 {
        return Err(BoostError::EmptyInput("training set has no rows"));
    }
    let mut class_labels = data.labels.clone();
    class_labels.sort_unstable();
    class_labels.dedup();
    if class_labels.len() < 2 {
        return Err(BoostError::DegenerateLabels(class_labels[0]));
    }
    check_finite(&data.features, "training")?;
    let n_classes = class_labels.len();
    let labels: Vec<usize> = data
        .labels
        .iter()
        .map(|l| class_labels.binary_search(l).unwrap())
        .collect();

    let valid = match valid {
        Some(v) if v.n_rows() > 0 => {
            check_finite(&v.features, "validation")?;
            if v.features.n_cols() != data.features.n_cols() {
                return Err(BoostError::Contract("validation set has a different feature count".into()));
            }
            let idx = v
                .labels
                .iter()
                .map(|l| {
                    class_labels
                        .binary_search(l)
                        .map_err(|_| BoostError::Contract(format!("validation label {l} not seen in training")))
                })
                .collect::<Result<Vec<usize>>>()?;
            Some((v, idx))
        }
        _ => None,
    };

    let binned = bin_dataset(&data.features, params);
    let n_features = data.features.n_cols();
    let limits = GrowLimits {
        num_leaves: params.num_leaves,
        min_child_samples: params.min_child_samples,
        deterministic: params.deterministic,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);

    let mut logits = vec![0.0; n * n_classes];
    let mut valid_logits = valid.as_ref().map(|(v, _)| vec![0.0; v.n_rows() * n_classes]);
    let mut grad = vec![vec![0.0; n]; n_classes];
    let mut hess = vec![vec![0.0; n]; n_classes];
    let mut bag: Option<RowSample> = None;
    let mut trees = Vec::with_capacity(params.num_iterations);
    let mut log = TrainLog::default();

    for iteration in 0..params.num_iterations {
        compute_gradients(&logits, &labels, n_classes, &mut grad, &mut hess);

        let sample = if params.goss_enabled {
            let magnitude: Vec<f64> = (0..n).map(|i| grad.iter().map(|g| g[i].abs()).sum()).collect();
            goss_sample(&magnitude, params.goss_top_rate, params.goss_other_rate, &mut rng)?
        } else if params.bagging_active() {
            if iteration % params.subsample_freq == 0 || bag.is_none() {
                bag = Some(bagging_sample(n, params.subsample, &mut rng));
            }
            bag.clone().unwrap()
        } else {
            RowSample::all(n)
        };
        let mut weight = vec![0.0; n];
        for (&r, &w) in sample.rows.iter().zip(&sample.weights) {
            weight[r as usize] = w;
        }

        let mut round = Vec::with_capacity(n_classes);
        for k in 0..n_classes {
            let features = column_sample(n_features, params.colsample_bytree, &mut rng);
            let wg: Vec<f64> = grad[k].iter().zip(&weight).map(|(g, w)| g * w).collect();
            let wh: Vec<f64> = hess[k].iter().zip(&weight).map(|(h, w)| h * w).collect();
            let stats = RowStats {
                grad: &wg,
                hess: &wh,
                weight: &weight,
            };
            let tree = grow_tree_leafwise(&binned, sample.rows.clone(), stats, &features, limits)?;

            logits
                .par_chunks_mut(n_classes)
                .enumerate()
                .for_each(|(i, z)| z[k] += params.learning_rate * tree.predict_binned(&binned.feature_bins, i));
            if let (Some((v, _)), Some(vl)) = (&valid, valid_logits.as_mut()) {
                vl.par_chunks_mut(n_classes)
                    .enumerate()
                    .for_each(|(i, z)| z[k] += params.learning_rate * tree.predict(v.features.row(i)));
            }
            round.push(tree);
        }
        trees.push(round);

        log.train_loss.push(mean_loss(&logits, &labels, n_classes));
        if let (Some((_, idx)), Some(vl)) = (&valid, &valid_logits) {
            log.valid_loss.push(mean_loss(vl, idx, n_classes));
        }
    }

    let model = BoostedEnsemble {
        format_version: MODEL_FORMAT_VERSION,
        class_labels,
        feature_names: data.feature_names.clone(),
        learning_rate: params.learning_rate,
        params: params.clone(),
        bin_mappers: binned.mappers,
        trees,
    };
    Ok((model, log))
}

/// Bins, bundles and encodes a feature matrix as training would.
pub fn bin_dataset(features: &FeatureMatrix, params: &TrainParams) -> BinnedData {
    let mappers = build_bins(features, params.max_bins);
    let feature_bins = bin_columns(features, &mappers);
    let plan = if params.efb_enabled {
        efb_bundle(&feature_bins, &mappers, params.efb_max_conflict)
    } else {
        BundlePlan::singletons(&mappers)
    };
    let bundle_columns = plan.encode_columns(&feature_bins);
    BinnedData {
        mappers,
        feature_bins,
        plan,
        bundle_columns,
    }
}

fn check_finite(m: &FeatureMatrix, what: &str) -> Result<()> {
    for (i, row) in m.rows().enumerate() {
        if let Some(c) = row.iter().position(|v| !v.is_finite()) {
            return Err(BoostError::Contract(format!("{what} row {i} column {c} is not finite")));
        }
    }
    Ok(())
}

fn compute_gradients(logits: &[f64], labels: &[usize], n_classes: usize, grad: &mut [Vec<f64>], hess: &mut [Vec<f64>]) {
    let mut p = vec![0.0; n_classes];
    for (i, z) in logits.chunks(n_classes).enumerate() {
        softmax_into(z, &mut p);
        for k in 0..n_classes {
            let target = if k == labels[i] { 1.0 } else { 0.0 };
            grad[k][i] = p[k] - target;
            hess[k][i] = p[k] * (1.0 - p[k]);
        }
    }
}

fn mean_loss(logits: &[f64], labels: &[usize], n_classes: usize) -> f64 {
    let total: f64 = logits
        .chunks(n_classes)
        .zip(labels)
        .map(|(z, &y)| log_loss(z, y))
        .sum();
    total / labels.len() as f64
}

impl BoostedEnsemble {
    pub fn n_classes(&self) -> usize {
        self.class_labels.len()
    }

    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    pub fn n_iterations(&self) -> usize {
        self.trees.len()
    }

    fn check_row(&self, row: &[f64]) -> Result<()> {
        if row.len() != self.n_features() {
            return Err(BoostError::Contract(format!(
                "row has {} features, model expects {}",
                row.len(),
                self.n_features()
            )));
        }
        Ok(())
    }

    /// Summed, learning-rate scaled tree outputs per class.
    pub fn predict_raw(&self, row: &[f64]) -> Result<Vec<f64>> {
        self.check_row(row)?;
        let mut z = vec![0.0; self.n_classes()];
        for round in &self.trees {
            for (k, tree) in round.iter().enumerate() {
                z[k] += self.learning_rate * tree.predict(row);
            }
        }
        Ok(z)
    }

    pub fn predict_proba(&self, row: &[f64]) -> Result<Vec<f64>> {
        self.predict_raw(row).map(|z| softmax(&z))
    }

    /// Label of the most probable class (lowest label on ties).
    pub fn predict_label(&self, row: &[f64]) -> Result<i64> {
        let p = self.predict_proba(row)?;
        Ok(self.class_labels[argmax(&p)])
    }

    pub fn predict_proba_batch(&self, rows: &FeatureMatrix) -> Result<Vec<Vec<f64>>> {
        (0..rows.n_rows())
            .into_par_iter()
            .map(|i| self.predict_proba(rows.row(i)))
            .collect()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let model: Self = serde_json::from_str(text).map_err(|e| BoostError::Format(e.to_string()))?;
        if model.format_version != MODEL_FORMAT_VERSION {
            return Err(BoostError::Format(format!(
                "unsupported model format version {} (expected {MODEL_FORMAT_VERSION})",
                model.format_version
            )));
        }
        Ok(model)
    }

    pub fn save(&self, path: &Path) -> std::io::Result<()> {
        let text = self.to_json().map_err(std::io::Error::other)?;
        std::fs::write(path, text)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| BoostError::Format(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }
}

/// Index of the largest value; the first one on ties.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}
