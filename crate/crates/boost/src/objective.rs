//! Multiclass softmax cross-entropy.

/// Numerically stable softmax; the maximum logit is shifted to zero first.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; logits.len()];
    softmax_into(logits, &mut out);
    out
}

pub fn softmax_into(logits: &[f64], out: &mut [f64]) {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for (o, &z) in out.iter_mut().zip(logits) {
        *o = (z - max).exp();
        sum += *o;
    }
    for o in out.iter_mut() {
        *o /= sum;
    }
}

/// Per-class `(gradient, hessian)` of `-log softmax(logits)[label]`.
///
/// `gradient_k = p_k - [k == label]` and `hessian_k = p_k (1 - p_k)`.
pub fn softmax_gradients(logits: &[f64], label: usize) -> Vec<(f64, f64)> {
    softmax(logits)
        .into_iter()
        .enumerate()
        .map(|(k, p)| {
            let target = if k == label { 1.0 } else { 0.0 };
            (p - target, p * (1.0 - p))
        })
        .collect()
}

/// Cross-entropy of one row, computed through log-sum-exp.
pub fn log_loss(logits: &[f64], label: usize) -> f64 {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|z| (z - max).exp()).sum::<f64>().ln();
    lse - logits[label]
}
