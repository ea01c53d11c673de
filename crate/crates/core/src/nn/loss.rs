use ndarray::Array2;

/// Softmax with max-subtraction.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&z| (z - m).exp()).collect();
    let s: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / s).collect()
}

/// `log(sum(exp(xs)))`, stabilized.
pub fn log_sum_exp(xs: impl Iterator<Item = f64> + Clone) -> f64 {
    let m = xs.clone().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + xs.map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Cross-entropy `-log softmax(logits)[label]` and its gradient
/// `softmax(logits) - onehot(label)`.
pub fn cross_entropy(logits: &[f64], label: usize) -> (f64, Vec<f64>) {
    assert!(label < logits.len(), "label {label} out of range for {} logits", logits.len());
    let lse = log_sum_exp(logits.iter().copied());
    let loss = lse - logits[label];
    let mut grad = softmax(logits);
    grad[label] -= 1.0;
    (loss, grad)
}

/// Mean cross-entropy over a `batch x classes` logit matrix. The returned
/// gradient is already divided by the batch size.
pub fn cross_entropy_batch(logits: &Array2<f64>, labels: &[usize]) -> (f64, Array2<f64>) {
    assert_eq!(logits.nrows(), labels.len());
    let n = labels.len() as f64;
    let mut grad = Array2::zeros(logits.raw_dim());
    let mut total = 0.0;
    for ((row, mut g), &label) in logits.rows().into_iter().zip(grad.rows_mut()).zip(labels) {
        let (l, d) = cross_entropy(row.as_slice().expect("standard layout"), label);
        total += l;
        for (gi, di) in g.iter_mut().zip(d) {
            *gi = di / n;
        }
    }
    (total / n, grad)
}
