use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::NnError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Identity,
}

impl Activation {
    pub fn code(self) -> u8 {
        match self {
            Activation::Relu => 1,
            Activation::Identity => 0,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(Activation::Identity),
            1 => Some(Activation::Relu),
            _ => None,
        }
    }
}

/// Fully connected layer computing `act(W x + b)` with `W` stored `out x in`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
    pub activation: Activation,
}

impl Dense {
    pub fn in_dim(&self) -> usize {
        self.weights.ncols()
    }

    pub fn out_dim(&self) -> usize {
        self.weights.nrows()
    }
}

/// Feed-forward stack of dense layers.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseNet {
    layers: Vec<Dense>,
}

/// Per-layer parameter gradients, same shapes as the network.
#[derive(Debug, Clone, PartialEq)]
pub struct Grads {
    pub weights: Vec<Array2<f64>>,
    pub biases: Vec<Array1<f64>>,
}

impl Grads {
    pub fn zeros_like(net: &DenseNet) -> Grads {
        Grads {
            weights: net.layers.iter().map(|l| Array2::zeros(l.weights.raw_dim())).collect(),
            biases: net.layers.iter().map(|l| Array1::zeros(l.bias.raw_dim())).collect(),
        }
    }

    pub fn add_assign(&mut self, other: &Grads) {
        for (a, b) in self.weights.iter_mut().zip(&other.weights) {
            *a += b;
        }
        for (a, b) in self.biases.iter_mut().zip(&other.biases) {
            *a += b;
        }
    }
}

/// Activations kept from a batched forward pass for backpropagation.
#[derive(Debug, Clone)]
pub struct Trace {
    /// `outputs[0]` is the input batch; `outputs[k + 1]` is layer `k`'s output.
    pub outputs: Vec<Array2<f64>>,
}

impl Trace {
    pub fn output(&self) -> &Array2<f64> {
        self.outputs.last().unwrap()
    }
}

impl DenseNet {
    /// Builds a network with `dims.len() - 1` layers.
    ///
    /// Weights are drawn uniformly from `[-a, a]` using ChaCha8 seeded with
    /// `seed`, where `a = sqrt(6 / fan_in)` for ReLU layers and
    /// `a = sqrt(6 / (fan_in + fan_out))` for identity layers. Biases start at
    /// zero.
    pub fn init(dims: &[usize], activations: &[Activation], seed: u64) -> Result<DenseNet, NnError> {
        if dims.len() < 2 {
            return Err(NnError::BadArchitecture(format!("need at least 2 dims, got {}", dims.len())));
        }
        if dims.contains(&0) {
            return Err(NnError::BadArchitecture("layer sizes must be positive".into()));
        }
        if activations.len() != dims.len() - 1 {
            return Err(NnError::BadArchitecture(format!(
                "{} activations for {} layers",
                activations.len(),
                dims.len() - 1
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layers = dims
            .windows(2)
            .zip(activations)
            .map(|(w, &activation)| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let a = match activation {
                    Activation::Relu => (6.0 / fan_in as f64).sqrt(),
                    Activation::Identity => (6.0 / (fan_in + fan_out) as f64).sqrt(),
                };
                let weights = Array2::from_shape_fn((fan_out, fan_in), |_| rng.random_range(-a..a));
                Dense { weights, bias: Array1::zeros(fan_out), activation }
            })
            .collect();
        Ok(DenseNet { layers })
    }

    /// ReLU hidden layers and an identity (logit) output layer.
    pub fn mlp(dims: &[usize], seed: u64) -> Result<DenseNet, NnError> {
        let n = dims.len().saturating_sub(1);
        let mut acts = vec![Activation::Relu; n];
        if let Some(last) = acts.last_mut() {
            *last = Activation::Identity;
        }
        Self::init(dims, &acts, seed)
    }

    pub fn from_layers(layers: Vec<Dense>) -> Result<DenseNet, NnError> {
        if layers.is_empty() {
            return Err(NnError::BadArchitecture("no layers".into()));
        }
        for (k, w) in layers.windows(2).enumerate() {
            if w[0].out_dim() != w[1].in_dim() {
                return Err(NnError::BadArchitecture(format!(
                    "layer {k} outputs {} but layer {} takes {}",
                    w[0].out_dim(),
                    k + 1,
                    w[1].in_dim()
                )));
            }
        }
        for l in &layers {
            if l.bias.len() != l.out_dim() {
                return Err(NnError::BadArchitecture("bias length differs from layer output".into()));
            }
        }
        Ok(DenseNet { layers })
    }

    /// Stacks `self` followed by `other`.
    pub fn concat(&self, other: &DenseNet) -> Result<DenseNet, NnError> {
        let mut layers = self.layers.clone();
        layers.extend(other.layers.iter().cloned());
        Self::from_layers(layers)
    }

    /// Splits into the first `at` layers and the rest.
    pub fn split_at(&self, at: usize) -> (DenseNet, DenseNet) {
        let (a, b) = self.layers.split_at(at);
        (DenseNet { layers: a.to_vec() }, DenseNet { layers: b.to_vec() })
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Dense] {
        &mut self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].in_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().unwrap().out_dim()
    }

    /// `[input_dim, out_0, out_1, ...]`.
    pub fn dims(&self) -> Vec<usize> {
        std::iter::once(self.input_dim()).chain(self.layers.iter().map(Dense::out_dim)).collect()
    }

    pub fn parameter_count(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weights.iter().all(|v| v.is_finite()) && l.bias.iter().all(|v| v.is_finite()))
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>, NnError> {
        if x.len() != self.input_dim() {
            return Err(NnError::DimMismatch { expected: self.input_dim(), got: x.len() });
        }
        let mut a = x.to_vec();
        for l in &self.layers {
            let mut z = l.weights.dot(&ndarray::ArrayView1::from(&a[..]));
            z += &l.bias;
            if l.activation == Activation::Relu {
                z.mapv_inplace(|v| v.max(0.0));
            }
            a = z.to_vec();
        }
        Ok(a)
    }

    /// Forward pass over a `batch x input_dim` matrix, keeping activations.
    pub fn forward_trace(&self, x: ArrayView2<f64>) -> Result<Trace, NnError> {
        if x.ncols() != self.input_dim() {
            return Err(NnError::DimMismatch { expected: self.input_dim(), got: x.ncols() });
        }
        let mut outputs = Vec::with_capacity(self.layers.len() + 1);
        outputs.push(x.to_owned());
        for l in &self.layers {
            let prev = outputs.last().unwrap();
            let mut z = prev.dot(&l.weights.t());
            if !z.is_standard_layout() {
                z = z.as_standard_layout().into_owned();
            }
            z += &l.bias;
            if l.activation == Activation::Relu {
                z.mapv_inplace(|v| v.max(0.0));
            }
            outputs.push(z);
        }
        Ok(Trace { outputs })
    }

    pub fn forward_batch(&self, x: ArrayView2<f64>) -> Result<Array2<f64>, NnError> {
        Ok(self.forward_trace(x)?.outputs.pop().unwrap())
    }

    /// Backpropagates `d_output` (gradient of the loss w.r.t. the network
    /// output, `batch x output_dim`). Returns parameter gradients and the
    /// gradient w.r.t. the input batch.
    pub fn backward(&self, trace: &Trace, d_output: &Array2<f64>) -> (Grads, Array2<f64>) {
        let n = self.layers.len();
        let mut weights = Vec::with_capacity(n);
        let mut biases = Vec::with_capacity(n);
        let mut delta = d_output.clone();
        for k in (0..n).rev() {
            let l = &self.layers[k];
            if l.activation == Activation::Relu {
                delta.zip_mut_with(&trace.outputs[k + 1], |d, &a| {
                    if a <= 0.0 {
                        *d = 0.0;
                    }
                });
            }
            weights.push(delta.t().dot(&trace.outputs[k]));
            biases.push(delta.sum_axis(Axis(0)));
            delta = delta.dot(&l.weights);
        }
        weights.reverse();
        biases.reverse();
        (Grads { weights, biases }, delta)
    }
}
