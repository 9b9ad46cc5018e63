//! Regression trees grown best-first.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bins::BinMapper;
use crate::efb::BundlePlan;
use crate::error::{BoostError, Result};
use crate::histogram::{build_histograms, BinStats, FeatureHistogram, RowStats};
use crate::split::{find_best_split, strictly_better, SplitCandidate};

/// L2 term added to the hessian sum in leaf outputs.
pub const LEAF_L2: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Node {
    Split {
        feature: usize,
        /// Rows with `value <= threshold` go left.
        threshold: f64,
        /// Same cut in bin space: `bin(value) <= bin` goes left.
        bin: u16,
        gain: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        value: f64,
        count: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    /// Node 0 is the root; nodes are numbered in creation order.
    pub nodes: Vec<Node>,
    /// Node ids in the order they were split.
    pub split_order: Vec<usize>,
}

impl Tree {
    pub fn predict(&self, row: &[f64]) -> f64 {
        self.leaf_value(|feature, _, threshold| row[feature] <= threshold)
    }

    /// Leaf output for a training row given per-feature bin columns.
    pub fn predict_binned(&self, feature_bins: &[Vec<u16>], row: usize) -> f64 {
        self.leaf_value(|feature, bin, _| feature_bins[feature][row] <= bin)
    }

    fn leaf_value(&self, go_left: impl Fn(usize, u16, f64) -> bool) -> f64 {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                Node::Leaf { value, .. } => return *value,
                Node::Split {
                    feature,
                    threshold,
                    bin,
                    left,
                    right,
                    ..
                } => {
                    i = if go_left(*feature, *bin, *threshold) { *left } else { *right };
                }
            }
        }
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, Node::Leaf { .. })).count()
    }
}

/// Binned training data shared by every tree of an ensemble.
#[derive(Debug, Clone)]
pub struct BinnedData {
    pub mappers: Vec<BinMapper>,
    /// Per-feature bin columns, used for row partitioning.
    pub feature_bins: Vec<Vec<u16>>,
    pub plan: BundlePlan,
    /// Per-bundle bin columns, used for histogram construction.
    pub bundle_columns: Vec<Vec<u16>>,
}

/// Limits that shape a single tree.
#[derive(Debug, Clone, Copy)]
pub struct GrowLimits {
    pub num_leaves: usize,
    pub min_child_samples: usize,
    pub deterministic: bool,
}

struct Leaf {
    node: usize,
    rows: Vec<u32>,
    totals: BinStats,
    best: Option<SplitCandidate>,
}

/// Grows one tree on the working set `rows` (ascending).
///
/// The frontier leaf with the largest gain is split until the leaf budget
/// is spent or no positive gain remains; equal gains go to the leaf created
/// first. Leaves output `-G / (H + LEAF_L2)` over their weighted rows.
pub fn grow_tree_leafwise(
    data: &BinnedData,
    rows: Vec<u32>,
    stats: RowStats<'_>,
    features: &[usize],
    limits: GrowLimits,
) -> Result<Tree> {
    if rows.is_empty() {
        return Err(BoostError::Contract("cannot grow a tree on an empty working set".into()));
    }
    let features: Vec<usize> = features
        .iter()
        .copied()
        .filter(|&f| data.mappers[f].n_bins() > 1)
        .collect();
    let mut bundles: Vec<usize> = features.iter().map(|&f| data.plan.bundle_of(f)).collect();
    bundles.sort_unstable();
    bundles.dedup();

    let root_totals = stats.totals(&rows);
    let working_weight = root_totals.weight;
    let evaluate = |rows: &[u32], totals: &BinStats| -> Option<SplitCandidate> {
        if (totals.count as usize) < 2 * limits.min_child_samples || features.is_empty() {
            return None;
        }
        let columns: Vec<(&[u16], usize)> = bundles
            .iter()
            .map(|&b| (data.bundle_columns[b].as_slice(), data.plan.bundles[b].n_bins))
            .collect();
        let bundle_hists = build_histograms(rows, &columns, stats, limits.deterministic);
        let hists: Vec<(usize, FeatureHistogram)> = features
            .iter()
            .map(|&f| {
                let slot = bundles.binary_search(&data.plan.bundle_of(f)).unwrap();
                (f, data.plan.feature_histogram(f, &bundle_hists[slot], totals))
            })
            .collect();
        let refs: Vec<(usize, &FeatureHistogram)> = hists.iter().map(|(f, h)| (*f, h)).collect();
        find_best_split(&refs, totals, limits.min_child_samples, working_weight)
    };

    let mut nodes = vec![Node::Leaf { value: 0.0, count: rows.len() }];
    let mut split_order = Vec::new();
    let root_best = evaluate(&rows, &root_totals);
    let mut leaves = vec![Leaf {
        node: 0,
        rows,
        totals: root_totals,
        best: root_best,
    }];

    while leaves.len() < limits.num_leaves {
        // leaves stay sorted by node id, i.e. creation order
        let mut pick: Option<usize> = None;
        for (i, leaf) in leaves.iter().enumerate() {
            if let Some(c) = &leaf.best {
                if pick.is_none_or(|p| strictly_better(c.gain, leaves[p].best.as_ref().unwrap().gain)) {
                    pick = Some(i);
                }
            }
        }
        let Some(pick) = pick else { break };
        let leaf = leaves.remove(pick);
        let split = leaf.best.expect("picked leaf has a split");
        let column = &data.feature_bins[split.feature];
        let (left_rows, right_rows): (Vec<u32>, Vec<u32>) =
            leaf.rows.iter().partition(|&&r| column[r as usize] <= split.bin);

        let left_id = nodes.len();
        let right_id = left_id + 1;
        nodes[leaf.node] = Node::Split {
            feature: split.feature,
            threshold: data.mappers[split.feature].threshold(split.bin),
            bin: split.bin,
            gain: split.gain,
            left: left_id,
            right: right_id,
        };
        nodes.push(Node::Leaf { value: 0.0, count: left_rows.len() });
        nodes.push(Node::Leaf { value: 0.0, count: right_rows.len() });
        split_order.push(leaf.node);

        let children: Vec<Leaf> = [(left_id, left_rows), (right_id, right_rows)]
            .into_par_iter()
            .map(|(node, rows)| {
                let totals = stats.totals(&rows);
                let best = evaluate(&rows, &totals);
                Leaf { node, rows, totals, best }
            })
            .collect();
        leaves.extend(children);
        leaves.sort_by_key(|l| l.node);
    }

    for leaf in &leaves {
        nodes[leaf.node] = Node::Leaf {
            value: -leaf.totals.grad / (leaf.totals.hess + LEAF_L2),
            count: leaf.rows.len(),
        };
    }
    Ok(Tree { nodes, split_order })
}
