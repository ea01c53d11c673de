//! Finite-difference verification of backpropagation.

use ndarray::Array2;

use super::loss::cross_entropy;
use super::net::{DenseNet, Grads};

/// Gradients smaller than this are compared in absolute rather than relative
/// terms. Round-off in a central difference is about `1e-16 * |loss| / eps`,
/// roughly `1e-11 * |loss|` at `eps = 1e-5`, so the floor has to sit well
/// above that for the relative error to mean anything.
pub const RELATIVE_FLOOR: f64 = 1e-5;

/// `|a - n| / max(|a|, |n|, RELATIVE_FLOOR)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(RELATIVE_FLOOR)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamKind {
    Weights,
    Bias,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TensorError {
    pub layer: usize,
    pub kind: ParamKind,
    pub max_rel_error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradReport {
    pub max_rel_error: f64,
    pub tensors: Vec<TensorError>,
}

/// Compares backprop gradients of the cross-entropy loss at `(x, label)`
/// against central differences over every parameter.
pub fn grad_check(net: &DenseNet, x: &[f64], label: usize, eps: f64) -> GradReport {
    let xb = Array2::from_shape_vec((1, x.len()), x.to_vec()).expect("row vector");
    let trace = net.forward_trace(xb.view()).expect("input matches network");
    let logits = trace.output().row(0).to_vec();
    let (_, d) = cross_entropy(&logits, label);
    let d_out = Array2::from_shape_vec((1, d.len()), d).unwrap();
    let (grads, _) = net.backward(&trace, &d_out);
    compare_gradients(net, &grads, eps, |n| cross_entropy(&n.forward(x).unwrap(), label).0)
}

/// Checks `analytic` against central differences of `loss` taken one
/// parameter at a time.
pub fn compare_gradients(net: &DenseNet, analytic: &Grads, eps: f64, loss: impl Fn(&DenseNet) -> f64) -> GradReport {
    assert!(eps > 0.0 && eps <= 1e-3, "eps must lie in (0, 1e-3]");
    let mut probe = net.clone();
    let mut tensors = Vec::with_capacity(net.layers().len() * 2);
    for k in 0..net.layers().len() {
        let mut worst = 0.0f64;
        let (rows, cols) = net.layers()[k].weights.dim();
        for i in 0..rows {
            for j in 0..cols {
                let orig = probe.layers()[k].weights[[i, j]];
                probe.layers_mut()[k].weights[[i, j]] = orig + eps;
                let up = loss(&probe);
                probe.layers_mut()[k].weights[[i, j]] = orig - eps;
                let down = loss(&probe);
                probe.layers_mut()[k].weights[[i, j]] = orig;
                worst = worst.max(relative_error(analytic.weights[k][[i, j]], (up - down) / (2.0 * eps)));
            }
        }
        tensors.push(TensorError { layer: k, kind: ParamKind::Weights, max_rel_error: worst });

        let mut worst = 0.0f64;
        for i in 0..net.layers()[k].bias.len() {
            let orig = probe.layers()[k].bias[i];
            probe.layers_mut()[k].bias[i] = orig + eps;
            let up = loss(&probe);
            probe.layers_mut()[k].bias[i] = orig - eps;
            let down = loss(&probe);
            probe.layers_mut()[k].bias[i] = orig;
            worst = worst.max(relative_error(analytic.biases[k][i], (up - down) / (2.0 * eps)));
        }
        tensors.push(TensorError { layer: k, kind: ParamKind::Bias, max_rel_error: worst });
    }
    let max_rel_error = tensors.iter().map(|t| t.max_rel_error).fold(0.0, f64::max);
    GradReport { max_rel_error, tensors }
}
