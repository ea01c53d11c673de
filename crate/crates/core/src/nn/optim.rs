use ndarray::{ArrayView2, Zip};

use super::loss::cross_entropy_batch;
use super::net::{DenseNet, Grads};
use super::NnError;

/// Hyperparameters shared by every trainer.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Epochs without validation improvement before stopping.
    pub early_stop_patience: usize,
    pub seed: u64,
    /// Coefficient of the `sum ||W||^2` penalty (weights only, not biases).
    pub l2_weight: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-3,
            batch_size: 512,
            max_epochs: 100,
            early_stop_patience: 10,
            seed: 0,
            l2_weight: 0.0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), NnError> {
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(NnError::BadConfig(format!("learning_rate {}", self.learning_rate)));
        }
        if self.batch_size == 0 {
            return Err(NnError::BadConfig("batch_size must be >= 1".into()));
        }
        if self.early_stop_patience == 0 {
            return Err(NnError::BadConfig("early_stop_patience must be >= 1".into()));
        }
        if self.l2_weight.is_nan() || self.l2_weight < 0.0 {
            return Err(NnError::BadConfig(format!("l2_weight {}", self.l2_weight)));
        }
        Ok(())
    }
}

/// Adam with beta1 = 0.9, beta2 = 0.999, eps = 1e-8.
#[derive(Debug, Clone)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    m: Grads,
    v: Grads,
}

impl Adam {
    pub fn new(net: &DenseNet) -> Adam {
        Adam { beta1: 0.9, beta2: 0.999, eps: 1e-8, step: 0, m: Grads::zeros_like(net), v: Grads::zeros_like(net) }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// Applies one update to layers `trainable_from..`; earlier layers are
    /// left untouched.
    pub fn update(&mut self, net: &mut DenseNet, grads: &Grads, lr: f64, trainable_from: usize) {
        self.step += 1;
        let t = self.step as i32;
        let (b1, b2, eps) = (self.beta1, self.beta2, self.eps);
        let c1 = 1.0 - b1.powi(t);
        let c2 = 1.0 - b2.powi(t);
        for (k, layer) in net.layers_mut().iter_mut().enumerate().skip(trainable_from) {
            Zip::from(&mut layer.weights)
                .and(&mut self.m.weights[k])
                .and(&mut self.v.weights[k])
                .and(&grads.weights[k])
                .for_each(|w, m, v, &g| {
                    *m = b1 * *m + (1.0 - b1) * g;
                    *v = b2 * *v + (1.0 - b2) * g * g;
                    *w -= lr * (*m / c1) / ((*v / c2).sqrt() + eps);
                });
            Zip::from(&mut layer.bias)
                .and(&mut self.m.biases[k])
                .and(&mut self.v.biases[k])
                .and(&grads.biases[k])
                .for_each(|w, m, v, &g| {
                    *m = b1 * *m + (1.0 - b1) * g;
                    *v = b2 * *v + (1.0 - b2) * g * g;
                    *w -= lr * (*m / c1) / ((*v / c2).sqrt() + eps);
                });
        }
    }
}

/// Adds `l2 * sum ||W||^2` to the loss and `2 * l2 * W` to the weight
/// gradients of trainable layers. Returns the penalty.
pub fn apply_l2(net: &DenseNet, grads: &mut Grads, l2: f64, trainable_from: usize) -> f64 {
    if l2 == 0.0 {
        return 0.0;
    }
    let mut penalty = 0.0;
    for (k, layer) in net.layers().iter().enumerate().skip(trainable_from) {
        penalty += layer.weights.iter().map(|w| w * w).sum::<f64>();
        grads.weights[k].scaled_add(2.0 * l2, &layer.weights);
    }
    l2 * penalty
}

/// One Adam update on the mean cross-entropy of a batch. Returns the
/// pre-update loss (mean cross-entropy plus the L2 penalty).
pub fn train_step(
    net: &mut DenseNet,
    opt: &mut Adam,
    x: ArrayView2<f64>,
    labels: &[usize],
    cfg: &TrainConfig,
    trainable_from: usize,
) -> Result<f64, NnError> {
    if labels.is_empty() {
        return Err(NnError::EmptyBatch);
    }
    let trace = net.forward_trace(x)?;
    let (ce, d_out) = cross_entropy_batch(trace.output(), labels);
    let (mut grads, _) = net.backward(&trace, &d_out);
    let loss = ce + apply_l2(net, &mut grads, cfg.l2_weight, trainable_from);
    if !loss.is_finite() {
        return Err(NnError::NonFiniteLoss);
    }
    opt.update(net, &grads, cfg.learning_rate, trainable_from);
    Ok(loss)
}
