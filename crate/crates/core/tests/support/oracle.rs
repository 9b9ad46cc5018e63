//! Reference greedy tree built by exhaustive search over raw feature values.
//!
//! Shares no code with the histogram learner. Tie conventions mirror the
//! learner's documented ones: features scanned in ascending order, cuts in
//! ascending order, a candidate replaces the incumbent only when better by
//! a relative margin of 1e-10, and equal leaf gains go to the older leaf.

pub const TIE: f64 = 1e-10;
pub const LEAF_L2: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq)]
pub enum OracleNode {
    Split { feature: usize, threshold: f64, left: usize, right: usize },
    Leaf { value: f64, rows: usize },
}

#[derive(Debug, Clone)]
struct Cut {
    feature: usize,
    threshold: f64,
    gain: f64,
}

fn better(candidate: f64, incumbent: f64) -> bool {
    candidate > incumbent + TIE * incumbent.abs()
}

/// Midpoint between `a` and the next larger value of the feature anywhere
/// in the training column; the learner places its cuts there as well.
fn cut_point(column: &[f64], a: f64) -> f64 {
    let next = column.iter().copied().filter(|&v| v > a).fold(f64::INFINITY, f64::min);
    a + (next - a) / 2.0
}

fn best_cut(x: &[Vec<f64>], g: &[f64], rows: &[usize], min_child: usize, n_total: f64) -> Option<Cut> {
    if rows.len() < 2 * min_child {
        return None;
    }
    let n = rows.len() as f64;
    let total: f64 = rows.iter().map(|&r| g[r]).sum();
    let n_features = x[0].len();
    let mut best: Option<Cut> = None;
    for f in 0..n_features {
        let mut values: Vec<f64> = rows.iter().map(|&r| x[r][f]).collect();
        values.sort_by(f64::total_cmp);
        values.dedup();
        for &a in values.iter().take(values.len().saturating_sub(1)) {
            let left: Vec<usize> = rows.iter().copied().filter(|&r| x[r][f] <= a).collect();
            let (nl, nr) = (left.len(), rows.len() - left.len());
            if nl < min_child || nr < min_child {
                continue;
            }
            let gl: f64 = left.iter().map(|&r| g[r]).sum();
            let gr: f64 = rows.iter().filter(|&&r| x[r][f] > a).map(|&r| g[r]).sum();
            let children = gl * gl / nl as f64 + gr * gr / nr as f64;
            let raw = children - total * total / n;
            if raw <= TIE * children {
                continue;
            }
            let gain = raw / n_total;
            if best.as_ref().is_none_or(|b| better(gain, b.gain)) {
                let column: Vec<f64> = x.iter().map(|row| row[f]).collect();
                best = Some(Cut {
                    feature: f,
                    threshold: cut_point(&column, a),
                    gain,
                });
            }
        }
    }
    best
}

/// Grows one regression tree on gradients `g` and hessians `h`.
pub fn grow(x: &[Vec<f64>], g: &[f64], h: &[f64], num_leaves: usize, min_child: usize) -> Vec<OracleNode> {
    let n_total = x.len() as f64;
    let all: Vec<usize> = (0..x.len()).collect();
    let mut nodes = vec![OracleNode::Leaf { value: 0.0, rows: all.len() }];
    let first = best_cut(x, g, &all, min_child, n_total);
    let mut frontier: Vec<(usize, Vec<usize>, Option<Cut>)> = vec![(0, all, first)];
    while frontier.len() < num_leaves {
        let mut pick: Option<usize> = None;
        for (i, (_, _, c)) in frontier.iter().enumerate() {
            if let Some(c) = c {
                let wins = match pick {
                    None => true,
                    Some(p) => better(c.gain, frontier[p].2.as_ref().unwrap().gain),
                };
                if wins {
                    pick = Some(i);
                }
            }
        }
        let Some(p) = pick else { break };
        let (id, rows, cut) = frontier.remove(p);
        let cut = cut.unwrap();
        let (l, r): (Vec<usize>, Vec<usize>) = rows.iter().partition(|&&i| x[i][cut.feature] <= cut.threshold);
        let (lid, rid) = (nodes.len(), nodes.len() + 1);
        nodes[id] = OracleNode::Split {
            feature: cut.feature,
            threshold: cut.threshold,
            left: lid,
            right: rid,
        };
        nodes.push(OracleNode::Leaf { value: 0.0, rows: l.len() });
        nodes.push(OracleNode::Leaf { value: 0.0, rows: r.len() });
        let lc = best_cut(x, g, &l, min_child, n_total);
        let rc = best_cut(x, g, &r, min_child, n_total);
        frontier.push((lid, l, lc));
        frontier.push((rid, r, rc));
        frontier.sort_by_key(|e| e.0);
    }
    for (id, rows, _) in &frontier {
        let gs: f64 = rows.iter().map(|&r| g[r]).sum();
        let hs: f64 = rows.iter().map(|&r| h[r]).sum();
        nodes[*id] = OracleNode::Leaf {
            value: -gs / (hs + LEAF_L2),
            rows: rows.len(),
        };
    }
    nodes
}

/// Gradients and hessians of softmax cross-entropy at all-zero logits.
pub fn initial_gradients(labels: &[usize], n_classes: usize, class: usize) -> (Vec<f64>, Vec<f64>) {
    let p = 1.0 / n_classes as f64;
    let g = labels.iter().map(|&y| if y == class { p - 1.0 } else { p }).collect();
    let h = vec![p * (1.0 - p); labels.len()];
    (g, h)
}
