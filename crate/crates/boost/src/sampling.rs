//! Row and column sampling.

use rand::seq::index;
use rand::Rng;

use crate::error::{BoostError, Result};

/// Rows chosen for one boosting iteration, ascending, with their weights.
#[derive(Debug, Clone, PartialEq)]
pub struct RowSample {
    pub rows: Vec<u32>,
    pub weights: Vec<f64>,
}

impl RowSample {
    pub fn all(n: usize) -> Self {
        Self {
            rows: (0..n as u32).collect(),
            weights: vec![1.0; n],
        }
    }
}

/// `ceil(frac * n)` with a little slack so that e.g. `0.2 * 10` stays 2.
fn ceil_count(frac: f64, n: usize) -> usize {
    ((frac * n as f64 - 1e-9).ceil().max(0.0) as usize).min(n)
}

/// Gradient-based one-side sampling.
///
/// Keeps the `ceil(top_rate * n)` rows of largest magnitude (ties by lower
/// row index) with weight 1 and draws `ceil(other_rate * n)` of the rest
/// uniformly without replacement, weighting them by
/// `(1 - top_rate) / other_rate`.
pub fn goss_sample<R: Rng + ?Sized>(magnitudes: &[f64], top_rate: f64, other_rate: f64, rng: &mut R) -> Result<RowSample> {
    let n = magnitudes.len();
    if n == 0 {
        return Err(BoostError::EmptyInput("goss_sample needs at least one row"));
    }
    if !(top_rate > 0.0 && top_rate <= 1.0) || other_rate < 0.0 || top_rate + other_rate > 1.0 + 1e-12 {
        return Err(BoostError::InvalidParam {
            name: "goss_top_rate",
            reason: format!("need 0 < top <= 1, other >= 0, top + other <= 1 (got {top_rate}, {other_rate})"),
        });
    }
    if magnitudes.iter().any(|g| !g.is_finite()) {
        return Err(BoostError::Contract("non-finite gradient in goss_sample".into()));
    }

    let top = ceil_count(top_rate, n);
    let mut order: Vec<u32> = (0..n as u32).collect();
    order.sort_by(|&a, &b| {
        magnitudes[b as usize]
            .abs()
            .total_cmp(&magnitudes[a as usize].abs())
            .then(a.cmp(&b))
    });
    let (kept, rest) = order.split_at(top);

    let mut chosen: Vec<(u32, f64)> = kept.iter().map(|&r| (r, 1.0)).collect();
    let other = ceil_count(other_rate, n).min(rest.len());
    if other > 0 {
        let weight = (1.0 - top_rate) / other_rate;
        chosen.extend(index::sample(rng, rest.len(), other).into_iter().map(|i| (rest[i], weight)));
    }
    chosen.sort_unstable_by_key(|&(r, _)| r);
    Ok(RowSample {
        rows: chosen.iter().map(|c| c.0).collect(),
        weights: chosen.iter().map(|c| c.1).collect(),
    })
}

/// Uniform row subsample of `round(fraction * n)` rows (at least one).
pub fn bagging_sample<R: Rng + ?Sized>(n: usize, fraction: f64, rng: &mut R) -> RowSample {
    let k = ((fraction * n as f64).round() as usize).clamp(1, n);
    if k == n {
        return RowSample::all(n);
    }
    let mut rows: Vec<u32> = index::sample(rng, n, k).into_iter().map(|i| i as u32).collect();
    rows.sort_unstable();
    RowSample {
        weights: vec![1.0; rows.len()],
        rows,
    }
}

/// Feature subset for one tree, ascending. Draws nothing when every
/// feature is kept.
pub fn column_sample<R: Rng + ?Sized>(n_features: usize, fraction: f64, rng: &mut R) -> Vec<usize> {
    let k = ((fraction * n_features as f64).round() as usize).clamp(1, n_features.max(1));
    if k >= n_features {
        return (0..n_features).collect();
    }
    let mut cols = index::sample(rng, n_features, k).into_vec();
    cols.sort_unstable();
    cols
}
