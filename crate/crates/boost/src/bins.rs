//! Quantile binning of continuous features.
//!
//! A feature with `k` bins carries `k - 1` ascending upper bounds taken from
//! observed values. A value maps to the first bin whose upper bound is `>=`
//! the value, or to the last bin when it exceeds every bound.

use serde::{Deserialize, Serialize};

use crate::data::FeatureMatrix;

/// Bin layout of a single feature.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinMapper {
    /// Inclusive upper bound of every bin except the last.
    upper_bounds: Vec<f64>,
    /// Smallest training value that landed in each bin.
    bin_min: Vec<f64>,
}

impl BinMapper {
    /// Bins for one column of values. `values` must be finite and non-empty.
    pub fn fit(values: &[f64], max_bins: usize) -> Self {
        assert!(!values.is_empty(), "cannot bin an empty column");
        assert!(max_bins >= 2);
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);

        let mut distinct: Vec<f64> = Vec::new();
        for &v in &sorted {
            if distinct.last() != Some(&v) {
                distinct.push(v);
            }
        }
        let max_value = *distinct.last().unwrap();

        let upper_bounds: Vec<f64> = if distinct.len() <= max_bins {
            distinct[..distinct.len() - 1].to_vec()
        } else {
            let n = sorted.len();
            let mut bounds: Vec<f64> = Vec::with_capacity(max_bins - 1);
            for k in 1..max_bins {
                // 1-based rank of the k-th quantile
                let rank = (k * n).div_ceil(max_bins);
                let v = sorted[rank - 1];
                if v < max_value && bounds.last().is_none_or(|&b| v > b) {
                    bounds.push(v);
                }
            }
            bounds
        };

        let mut bin_min = Vec::with_capacity(upper_bounds.len() + 1);
        bin_min.push(distinct[0]);
        for &b in &upper_bounds {
            let i = distinct.partition_point(|&v| v <= b);
            bin_min.push(distinct[i]);
        }
        Self {
            upper_bounds,
            bin_min,
        }
    }

    pub fn n_bins(&self) -> usize {
        self.upper_bounds.len() + 1
    }

    pub fn upper_bounds(&self) -> &[f64] {
        &self.upper_bounds
    }

    pub fn bin_of(&self, value: f64) -> u16 {
        self.upper_bounds.partition_point(|&b| b < value) as u16
    }

    /// Real-valued cut separating bins `..=bin` from `bin + 1..`: the midpoint
    /// between the largest value of `bin` and the smallest value of the next.
    pub fn threshold(&self, bin: u16) -> f64 {
        let b = bin as usize;
        let lo = self.upper_bounds[b];
        let hi = self.bin_min[b + 1];
        lo + (hi - lo) / 2.0
    }
}

/// Fits one mapper per column.
pub fn build_bins(features: &FeatureMatrix, max_bins: usize) -> Vec<BinMapper> {
    (0..features.n_cols())
        .map(|c| {
            let col: Vec<f64> = features.column(c).collect();
            BinMapper::fit(&col, max_bins)
        })
        .collect()
}

/// Column-major bin indices for every feature.
pub fn bin_columns(features: &FeatureMatrix, mappers: &[BinMapper]) -> Vec<Vec<u16>> {
    mappers
        .iter()
        .enumerate()
        .map(|(c, m)| features.column(c).map(|v| m.bin_of(v)).collect())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_feature_has_one_bin() {
        let m = BinMapper::fit(&[3.0; 10], 255);
        assert_eq!(m.n_bins(), 1);
        assert_eq!(m.bin_of(3.0), 0);
        assert_eq!(m.bin_of(100.0), 0);
    }

    #[test]
    fn few_distinct_values_get_one_bin_each() {
        let m = BinMapper::fit(&[0.4, 0.1, 0.3, 0.2, 0.1, 0.4], 255);
        assert_eq!(m.n_bins(), 4);
        assert_eq!(m.bin_of(0.1), 0);
        assert_eq!(m.bin_of(0.2), 1);
        assert_eq!(m.bin_of(0.3), 2);
        assert_eq!(m.bin_of(0.4), 3);
        assert_eq!(m.bin_of(-5.0), 0);
        assert_eq!(m.bin_of(9.0), 3);
    }

    #[test]
    fn threshold_separates_adjacent_values() {
        let m = BinMapper::fit(&[1.0, 2.0, 4.0], 255);
        assert_eq!(m.threshold(0), 1.5);
        assert_eq!(m.threshold(1), 3.0);
    }

    #[test]
    fn uniform_values_fill_bins_evenly() {
        // evenly spaced stand-in for uniform draws; the oracle is the
        // direct count per bin after sorting
        let n = 10_000;
        let values: Vec<f64> = (0..n).map(|i| ((i * 7919) % n) as f64 / n as f64).collect();
        let m = BinMapper::fit(&values, 255);
        assert_eq!(m.n_bins(), 255);
        let mut counts = vec![0usize; m.n_bins()];
        for &v in &values {
            counts[m.bin_of(v) as usize] += 1;
        }
        let target = n as f64 / 255.0;
        for c in counts {
            assert!((c as f64 - target).abs() <= 0.2 * target, "count {c}");
        }
    }

    #[test]
    fn never_exceeds_max_bins() {
        let values: Vec<f64> = (0..1000).map(|i| (i % 37) as f64 * 0.5).collect();
        let m = BinMapper::fit(&values, 8);
        assert!(m.n_bins() <= 8);
        let b = m.upper_bounds();
        assert!(b.windows(2).all(|w| w[0] < w[1]));
    }
}
