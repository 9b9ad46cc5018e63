//! Split search with the sampled variance-gain estimator.
//!
//! For a cut of a node into left and right children the gain is
//!
//! ```text
//! (1 / n) * ( G_l^2 / n_l + G_r^2 / n_r - G^2 / n_parent )
//! ```
//!
//! where `G` are sampling-weighted gradient sums, `n_*` the weighted row
//! counts of each side and `n` the weighted size of the tree's working set.
//! With unit weights this is the exact variance gain.

use crate::histogram::{BinStats, FeatureHistogram};

/// Relative margin below which two gains are treated as equal, and below
/// which a gain counts as zero relative to the children's score. Keeps tie
/// breaking immune to summation-order rounding.
pub const GAIN_REL_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct SplitCandidate {
    pub feature: usize,
    /// Rows with bin `<= bin` go left.
    pub bin: u16,
    pub gain: f64,
    pub left: BinStats,
    pub right: BinStats,
}

/// `true` when `candidate` beats `incumbent` by more than the tie margin.
#[inline]
pub fn strictly_better(candidate: f64, incumbent: f64) -> bool {
    candidate > incumbent + GAIN_REL_TOLERANCE * incumbent.abs()
}

/// Unscaled gain of a partition, or `None` when it is not positive.
#[inline]
pub fn split_gain(left: &BinStats, right: &BinStats, parent: &BinStats) -> Option<f64> {
    let children = left.grad * left.grad / left.weight + right.grad * right.grad / right.weight;
    let raw = children - parent.grad * parent.grad / parent.weight;
    (raw > GAIN_REL_TOLERANCE * children).then_some(raw)
}

/// Best cut over `(feature, histogram)` pairs, scanned in the given order.
///
/// Candidates leaving fewer than `min_child_samples` rows on a side are
/// skipped. Ties keep the earlier feature, then the lower bin.
pub fn find_best_split(
    histograms: &[(usize, &FeatureHistogram)],
    parent: &BinStats,
    min_child_samples: usize,
    working_set_weight: f64,
) -> Option<SplitCandidate> {
    let min_child = min_child_samples as u32;
    if parent.count < 2 * min_child {
        return None;
    }
    let mut best: Option<SplitCandidate> = None;
    for &(feature, hist) in histograms {
        let mut left = BinStats::default();
        for t in 0..hist.n_bins().saturating_sub(1) {
            left.add(&hist.bins[t]);
            if left.count < min_child {
                continue;
            }
            let right = parent.minus(&left);
            if right.count < min_child {
                break;
            }
            let Some(raw) = split_gain(&left, &right, parent) else {
                continue;
            };
            let gain = raw / working_set_weight;
            if best.as_ref().is_none_or(|b| strictly_better(gain, b.gain)) {
                best = Some(SplitCandidate {
                    feature,
                    bin: t as u16,
                    gain,
                    left,
                    right,
                });
            }
        }
    }
    best
}
