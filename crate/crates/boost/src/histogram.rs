//! Per-node gradient histograms.
//!
//! Every bin accumulates rows in ascending row order, so a histogram is a
//! pure function of its node's row set. Columns are processed in parallel,
//! one thread per column, which keeps results independent of the thread
//! count. With `deterministic == false` large nodes are additionally split
//! into row chunks whose partial histograms are merged; that is faster on
//! wide machines but the float sums then depend on the chunking.

use rayon::prelude::*;

/// Aggregates for one histogram bin. `grad` and `hess` already carry the
/// row sampling weights; `weight` is the summed weight and `count` the
/// number of rows.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct BinStats {
    pub grad: f64,
    pub hess: f64,
    pub weight: f64,
    pub count: u32,
}

impl BinStats {
    #[inline]
    pub fn add(&mut self, other: &BinStats) {
        self.grad += other.grad;
        self.hess += other.hess;
        self.weight += other.weight;
        self.count += other.count;
    }

    #[inline]
    pub fn minus(&self, other: &BinStats) -> BinStats {
        BinStats {
            grad: self.grad - other.grad,
            hess: self.hess - other.hess,
            weight: self.weight - other.weight,
            count: self.count - other.count,
        }
    }
}

/// Weighted per-row gradient statistics, indexed by row id.
#[derive(Debug, Clone, Copy)]
pub struct RowStats<'a> {
    pub grad: &'a [f64],
    pub hess: &'a [f64],
    pub weight: &'a [f64],
}

impl RowStats<'_> {
    #[inline]
    fn accumulate(&self, bin: &mut BinStats, row: usize) {
        bin.grad += self.grad[row];
        bin.hess += self.hess[row];
        bin.weight += self.weight[row];
        bin.count += 1;
    }

    /// Totals over `rows`, summed in the order given.
    pub fn totals(&self, rows: &[u32]) -> BinStats {
        let mut s = BinStats::default();
        for &r in rows {
            self.accumulate(&mut s, r as usize);
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureHistogram {
    pub bins: Vec<BinStats>,
}

impl FeatureHistogram {
    pub fn zeros(n_bins: usize) -> Self {
        Self {
            bins: vec![BinStats::default(); n_bins],
        }
    }

    pub fn n_bins(&self) -> usize {
        self.bins.len()
    }

    /// Sum of all bins in bin order.
    pub fn totals(&self) -> BinStats {
        let mut s = BinStats::default();
        for b in &self.bins {
            s.add(b);
        }
        s
    }

    /// Sibling histogram `self - child`. Counts are exact; float sums carry
    /// the usual cancellation error, so training builds both children directly.
    pub fn subtract(&self, child: &FeatureHistogram) -> FeatureHistogram {
        assert_eq!(self.n_bins(), child.n_bins());
        FeatureHistogram {
            bins: self
                .bins
                .iter()
                .zip(&child.bins)
                .map(|(p, c)| p.minus(c))
                .collect(),
        }
    }

    fn merge(&mut self, other: &FeatureHistogram) {
        for (a, b) in self.bins.iter_mut().zip(&other.bins) {
            a.add(b);
        }
    }
}

/// Histogram of one binned column over `rows`.
pub fn build_histogram(rows: &[u32], bins: &[u16], n_bins: usize, stats: RowStats<'_>) -> FeatureHistogram {
    let mut hist = FeatureHistogram::zeros(n_bins);
    for &r in rows {
        let r = r as usize;
        stats.accumulate(&mut hist.bins[bins[r] as usize], r);
    }
    hist
}

const MIN_ROWS_PER_CHUNK: usize = 4096;

/// Histograms for each `(column, n_bins)` pair over the node's `rows`.
pub fn build_histograms(
    rows: &[u32],
    columns: &[(&[u16], usize)],
    stats: RowStats<'_>,
    deterministic: bool,
) -> Vec<FeatureHistogram> {
    let threads = rayon::current_num_threads();
    if !deterministic && threads > 1 && rows.len() >= 2 * MIN_ROWS_PER_CHUNK {
        let chunk = rows.len().div_ceil(threads).max(MIN_ROWS_PER_CHUNK);
        let partials: Vec<Vec<FeatureHistogram>> = rows
            .par_chunks(chunk)
            .map(|part| {
                columns
                    .iter()
                    .map(|&(bins, n)| build_histogram(part, bins, n, stats))
                    .collect()
            })
            .collect();
        let mut iter = partials.into_iter();
        let mut out = iter.next().unwrap_or_default();
        for part in iter {
            for (h, p) in out.iter_mut().zip(&part) {
                h.merge(p);
            }
        }
        return out;
    }
    columns
        .par_iter()
        .map(|&(bins, n)| build_histogram(rows, bins, n, stats))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lcg(seed: &mut u64) -> f64 {
        *seed = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        (*seed >> 11) as f64 / (1u64 << 53) as f64
    }

    #[test]
    fn singleton_node_has_one_nonzero_bin() {
        let bins = vec![0u16, 3, 1];
        let g = [0.5, -1.0, 2.0];
        let h = [0.25, 0.5, 1.0];
        let w = [1.0; 3];
        let stats = RowStats { grad: &g, hess: &h, weight: &w };
        let hist = build_histogram(&[1], &bins, 4, stats);
        let nonzero: Vec<usize> = (0..4).filter(|&b| hist.bins[b].count > 0).collect();
        assert_eq!(nonzero, vec![3]);
        assert_eq!(hist.bins[3].grad, -1.0);
    }

    #[test]
    fn matches_naive_accumulation() {
        let mut seed = 7u64;
        let n = 100;
        let bins: Vec<u16> = (0..n).map(|_| (lcg(&mut seed) * 10.0) as u16).collect();
        let g: Vec<f64> = (0..n).map(|_| lcg(&mut seed) - 0.5).collect();
        let h: Vec<f64> = (0..n).map(|_| lcg(&mut seed)).collect();
        let w = vec![1.0; n];
        let rows: Vec<u32> = (0..n as u32).collect();
        let stats = RowStats { grad: &g, hess: &h, weight: &w };
        let hist = build_histogram(&rows, &bins, 10, stats);
        for b in 0..10u16 {
            let mut grad = 0.0;
            let mut hess = 0.0;
            let mut count = 0;
            for i in 0..n {
                if bins[i] == b {
                    grad += g[i];
                    hess += h[i];
                    count += 1;
                }
            }
            let bin = hist.bins[b as usize];
            assert_eq!(bin.count, count);
            assert!((bin.grad - grad).abs() <= 1e-12);
            assert!((bin.hess - hess).abs() <= 1e-12);
        }
        let total = hist.totals();
        assert_eq!(total.count as usize, n);
        let direct: f64 = g.iter().sum();
        assert!((total.grad - direct).abs() <= 1e-9 * direct.abs().max(1.0));
    }

    #[test]
    fn subtraction_recovers_sibling() {
        // dyadic values keep every float sum exact
        let bins: Vec<u16> = vec![0, 1, 2, 1, 0, 2, 2, 1];
        let g = [0.5, -0.25, 0.75, -1.0, 0.125, 0.5, -0.5, 0.25];
        let h = [0.25; 8];
        let w = [1.0; 8];
        let stats = RowStats { grad: &g, hess: &h, weight: &w };
        let parent = build_histogram(&[0, 1, 2, 3, 4, 5, 6, 7], &bins, 3, stats);
        let left = build_histogram(&[0, 2, 5], &bins, 3, stats);
        let right = build_histogram(&[1, 3, 4, 6, 7], &bins, 3, stats);
        assert_eq!(parent.subtract(&left), right);
    }

    #[test]
    fn parallel_modes_agree_on_counts() {
        let n = 20_000;
        let mut seed = 3u64;
        let bins: Vec<u16> = (0..n).map(|_| (lcg(&mut seed) * 16.0) as u16).collect();
        let g: Vec<f64> = (0..n).map(|_| lcg(&mut seed)).collect();
        let w = vec![1.0; n];
        let rows: Vec<u32> = (0..n as u32).collect();
        let stats = RowStats { grad: &g, hess: &g, weight: &w };
        let a = build_histograms(&rows, &[(&bins, 16)], stats, true);
        let b = build_histograms(&rows, &[(&bins, 16)], stats, false);
        for (x, y) in a[0].bins.iter().zip(&b[0].bins) {
            assert_eq!(x.count, y.count);
            assert!((x.grad - y.grad).abs() < 1e-9);
        }
    }
}
