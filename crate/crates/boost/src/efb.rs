//! Exclusive feature bundling.
//!
//! Features that are rarely nonzero on the same row share one histogram
//! column. "Nonzero" means the row's bin differs from the bin holding 0.0.
//! Inside a multi-feature bundle, bin 0 stands for "every member at its
//! default bin" and each member owns a contiguous range of the remaining
//! bins, one per non-default feature bin. Singleton bundles store the
//! feature's own bins unchanged.

use crate::bins::BinMapper;
use crate::histogram::{BinStats, FeatureHistogram};

#[derive(Debug, Clone, PartialEq)]
pub struct Bundle {
    /// Member features in ascending order.
    pub features: Vec<usize>,
    /// First bundle bin owned by each member.
    pub offsets: Vec<u32>,
    /// Bin of 0.0 for each member.
    pub default_bins: Vec<u16>,
    pub n_bins: usize,
}

impl Bundle {
    pub fn is_singleton(&self) -> bool {
        self.features.len() == 1
    }
}

/// Assignment of features to bundle columns.
#[derive(Debug, Clone, PartialEq)]
pub struct BundlePlan {
    pub bundles: Vec<Bundle>,
    /// For each feature, `(bundle index, position inside the bundle)`.
    location: Vec<(usize, usize)>,
    feature_n_bins: Vec<usize>,
}

impl BundlePlan {
    /// One bundle per feature.
    pub fn singletons(mappers: &[BinMapper]) -> Self {
        let groups = (0..mappers.len()).map(|f| vec![f]).collect();
        Self::from_groups(groups, mappers)
    }

    fn from_groups(mut groups: Vec<Vec<usize>>, mappers: &[BinMapper]) -> Self {
        for g in &mut groups {
            g.sort_unstable();
        }
        groups.sort_by_key(|g| g[0]);
        let mut location = vec![(0, 0); mappers.len()];
        let bundles = groups
            .into_iter()
            .enumerate()
            .map(|(bi, features)| {
                let default_bins: Vec<u16> = features.iter().map(|&f| mappers[f].bin_of(0.0)).collect();
                let mut offsets = Vec::with_capacity(features.len());
                let n_bins = if features.len() == 1 {
                    offsets.push(0);
                    mappers[features[0]].n_bins()
                } else {
                    let mut next = 1u32;
                    for &f in &features {
                        offsets.push(next);
                        next += mappers[f].n_bins() as u32 - 1;
                    }
                    next as usize
                };
                for (pos, &f) in features.iter().enumerate() {
                    location[f] = (bi, pos);
                }
                Bundle {
                    features,
                    offsets,
                    default_bins,
                    n_bins,
                }
            })
            .collect();
        Self {
            bundles,
            location,
            feature_n_bins: mappers.iter().map(BinMapper::n_bins).collect(),
        }
    }

    pub fn n_features(&self) -> usize {
        self.location.len()
    }

    /// `(bundle, offset)` of a feature.
    pub fn locate(&self, feature: usize) -> (usize, u32) {
        let (b, pos) = self.location[feature];
        (b, self.bundles[b].offsets[pos])
    }

    pub fn bundle_of(&self, feature: usize) -> usize {
        self.location[feature].0
    }

    /// Bundle bin for a feature bin. `None` for the default bin of a member
    /// of a multi-feature bundle, which is encoded implicitly.
    pub fn encode(&self, feature: usize, bin: u16) -> Option<u16> {
        let (b, pos) = self.location[feature];
        let bundle = &self.bundles[b];
        if bundle.is_singleton() {
            return Some(bin);
        }
        let default = bundle.default_bins[pos];
        if bin == default {
            return None;
        }
        let rank = if bin < default { bin } else { bin - 1 };
        Some(bundle.offsets[pos] as u16 + rank)
    }

    /// Original `(feature, bin)` of a bundle bin; `None` for the shared
    /// all-default bin.
    pub fn decode(&self, bundle: usize, bin: u16) -> Option<(usize, u16)> {
        let b = &self.bundles[bundle];
        if b.is_singleton() {
            return Some((b.features[0], bin));
        }
        if bin == 0 {
            return None;
        }
        let pos = b.offsets.partition_point(|&o| o as u16 <= bin) - 1;
        let f = b.features[pos];
        let rank = bin - b.offsets[pos] as u16;
        let default = b.default_bins[pos];
        let fbin = if rank < default { rank } else { rank + 1 };
        Some((f, fbin))
    }

    /// Bundle columns from per-feature bin columns. On a conflicting row the
    /// member with the larger feature index wins.
    pub fn encode_columns(&self, feature_bins: &[Vec<u16>]) -> Vec<Vec<u16>> {
        let n_rows = feature_bins.first().map_or(0, Vec::len);
        self.bundles
            .iter()
            .map(|bundle| {
                if bundle.is_singleton() {
                    return feature_bins[bundle.features[0]].clone();
                }
                let mut col = vec![0u16; n_rows];
                for &f in &bundle.features {
                    for (r, &bin) in feature_bins[f].iter().enumerate() {
                        if let Some(e) = self.encode(f, bin) {
                            col[r] = e;
                        }
                    }
                }
                col
            })
            .collect()
    }

    /// Histogram of one feature recovered from its bundle's histogram. The
    /// default bin of a bundled feature receives whatever of `node_totals`
    /// the member's other bins do not account for.
    pub fn feature_histogram(&self, feature: usize, bundle_hist: &FeatureHistogram, node_totals: &BinStats) -> FeatureHistogram {
        let (b, pos) = self.location[feature];
        let bundle = &self.bundles[b];
        if bundle.is_singleton() {
            return bundle_hist.clone();
        }
        let n_bins = self.feature_n_bins[feature];
        let default = bundle.default_bins[pos] as usize;
        let offset = bundle.offsets[pos] as usize;
        let mut hist = FeatureHistogram::zeros(n_bins);
        let mut others = BinStats::default();
        for fbin in (0..n_bins).filter(|&fb| fb != default) {
            let rank = if fbin < default { fbin } else { fbin - 1 };
            let s = bundle_hist.bins[offset + rank];
            hist.bins[fbin] = s;
            others.add(&s);
        }
        hist.bins[default] = node_totals.minus(&others);
        hist
    }
}

/// Greedy bundling over the feature conflict graph.
///
/// Two features conflict when both are nonzero on more than
/// `max_conflict * n_rows` rows. Features are visited by descending
/// conflict degree (ties by index) and placed in the first bundle holding
/// none of their neighbours.
pub fn efb_bundle(feature_bins: &[Vec<u16>], mappers: &[BinMapper], max_conflict: f64) -> BundlePlan {
    let n_features = feature_bins.len();
    let n_rows = feature_bins.first().map_or(0, Vec::len);
    let nonzero: Vec<Vec<bool>> = feature_bins
        .iter()
        .zip(mappers)
        .map(|(col, m)| {
            let default = m.bin_of(0.0);
            col.iter().map(|&b| b != default).collect()
        })
        .collect();
    let limit = max_conflict * n_rows as f64;

    let mut adjacent = vec![vec![false; n_features]; n_features];
    for i in 0..n_features {
        for j in i + 1..n_features {
            let both = nonzero[i].iter().zip(&nonzero[j]).filter(|(a, b)| **a && **b).count();
            if both as f64 > limit {
                adjacent[i][j] = true;
                adjacent[j][i] = true;
            }
        }
    }
    let degree: Vec<usize> = adjacent.iter().map(|row| row.iter().filter(|&&e| e).count()).collect();
    let mut order: Vec<usize> = (0..n_features).collect();
    order.sort_by(|&a, &b| degree[b].cmp(&degree[a]).then(a.cmp(&b)));

    let mut groups: Vec<Vec<usize>> = Vec::new();
    let mut group_bins: Vec<usize> = Vec::new();
    for f in order {
        let extra = mappers[f].n_bins().saturating_sub(1);
        let slot = groups.iter().enumerate().position(|(gi, g)| {
            g.iter().all(|&o| !adjacent[f][o]) && group_bins[gi] + extra < u16::MAX as usize
        });
        match slot {
            Some(gi) => {
                groups[gi].push(f);
                group_bins[gi] += extra;
            }
            None => {
                groups.push(vec![f]);
                group_bins.push(1 + extra);
            }
        }
    }
    BundlePlan::from_groups(groups, mappers)
}
