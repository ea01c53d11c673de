//! Contrastive pre-training by random feature corruption, followed by
//! supervised fine-tuning of the encoder with a fresh classification head.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::epc::{Dataset, Encoder, HomeProfile};
use crate::nn::{
    compare_gradients, epoch_rng, fit_classifier, log_sum_exp, Adam, DenseNet, FitSummary, GradReport, NnError,
    TrainConfig, Validation,
};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ScarfError {
    #[error("InfoNCE needs at least 2 pairs, got {0}")]
    DegenerateBatch(usize),
    #[error("corruption rate {0} outside [0, 1]")]
    BadRate(f64),
    #[error("temperature must be positive, got {0}")]
    BadTemperature(f64),
    #[error("training split is empty")]
    EmptyTrain,
    #[error("encoder output {got} does not match {expected}")]
    Mismatch { expected: usize, got: usize },
    #[error(transparent)]
    Nn(#[from] NnError),
}

/// Replaces a random subset of features with values drawn from the
/// training split's empirical marginals.
#[derive(Debug, Clone)]
pub struct CorruptionSampler {
    rate: f64,
    columns: Vec<Vec<f64>>,
}

impl CorruptionSampler {
    pub fn new(train: &Dataset, rate: f64) -> Result<CorruptionSampler, ScarfError> {
        if !(0.0..=1.0).contains(&rate) {
            return Err(ScarfError::BadRate(rate));
        }
        if train.is_empty() {
            return Err(ScarfError::EmptyTrain);
        }
        let width = train.schema().len();
        let columns = (0..width).map(|f| train.rows().iter().map(|r| r.get(f)).collect()).collect();
        Ok(CorruptionSampler { rate, columns })
    }

    pub fn rate(&self) -> f64 {
        self.rate
    }

    pub fn feature_count(&self) -> usize {
        self.columns.len()
    }

    /// `ceil(rate * features)`; the small offset keeps products such as
    /// `0.1 * 30` from rounding up past the integer.
    pub fn selection_count(&self) -> usize {
        ((self.rate * self.columns.len() as f64 - 1e-9).ceil().max(0.0) as usize).min(self.columns.len())
    }

    /// Training values observed for feature `f`, in row order.
    pub fn support(&self, f: usize) -> &[f64] {
        &self.columns[f]
    }

    /// Picks the corrupted features, then one donor row per feature.
    pub fn draw<R: Rng>(&self, rng: &mut R) -> Vec<(usize, f64)> {
        let picked = rand::seq::index::sample(rng, self.columns.len(), self.selection_count());
        let mut out: Vec<(usize, f64)> = picked
            .into_iter()
            .map(|f| {
                let col = &self.columns[f];
                (f, col[rng.random_range(0..col.len())])
            })
            .collect();
        out.sort_unstable_by_key(|&(f, _)| f);
        out
    }

    pub fn corrupt<R: Rng>(&self, x: &HomeProfile, rng: &mut R) -> HomeProfile {
        let mut out = x.clone();
        for (f, v) in self.draw(rng) {
            out.set(f, v);
        }
        out
    }
}

/// InfoNCE over cosine similarities of paired rows. Returns the mean loss
/// and its gradients with respect to both inputs.
pub fn info_nce(z: ArrayView2<f64>, zt: ArrayView2<f64>, tau: f64) -> Result<(f64, Array2<f64>, Array2<f64>), ScarfError> {
    let n = z.nrows();
    assert_eq!(z.dim(), zt.dim(), "views must have the same shape");
    if n < 2 {
        return Err(ScarfError::DegenerateBatch(n));
    }
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(ScarfError::BadTemperature(tau));
    }
    let (u, nu) = normalize_rows(z);
    let (v, nv) = normalize_rows(zt);
    let s = u.dot(&v.t()) / tau;

    let mut loss = 0.0;
    let mut g = Array2::zeros((n, n));
    for i in 0..n {
        let row = s.row(i);
        let lse = log_sum_exp(row.iter().copied());
        loss += lse - s[[i, i]];
        for j in 0..n {
            g[[i, j]] = (s[[i, j]] - lse).exp() / n as f64;
        }
        g[[i, i]] -= 1.0 / n as f64;
    }
    let du = g.dot(&v) / tau;
    let dv = g.t().dot(&u) / tau;
    Ok((loss / n as f64, unnormalize_grad(&u, &nu, du), unnormalize_grad(&v, &nv, dv)))
}

fn normalize_rows(z: ArrayView2<f64>) -> (Array2<f64>, Array1<f64>) {
    let norms = z.map_axis(Axis(1), |r| r.dot(&r).sqrt().max(1e-12));
    let u = &z / &norms.view().insert_axis(Axis(1));
    (u, norms)
}

// d/dz of z/|z| applied to du: (du - u (u . du)) / |z|
fn unnormalize_grad(u: &Array2<f64>, norms: &Array1<f64>, mut du: Array2<f64>) -> Array2<f64> {
    for ((mut d, ur), &nz) in du.rows_mut().into_iter().zip(u.rows()).zip(norms) {
        let proj = ur.dot(&d);
        d.scaled_add(-proj, &ur);
        d /= nz;
    }
    du
}

/// InfoNCE of a batch pushed through `net` twice (original and corrupted
/// view), with parameter gradients summed over both passes.
pub fn info_nce_step(net: &DenseNet, x: ArrayView2<f64>, xt: ArrayView2<f64>, tau: f64) -> Result<(f64, crate::nn::Grads), ScarfError> {
    let ta = net.forward_trace(x)?;
    let tb = net.forward_trace(xt)?;
    let (loss, dz, dzt) = info_nce(ta.output().view(), tb.output().view(), tau)?;
    let (mut grads, _) = net.backward(&ta, &dz);
    grads.add_assign(&net.backward(&tb, &dzt).0);
    Ok((loss, grads))
}

/// Finite-difference check of [`info_nce_step`] over every parameter.
pub fn info_nce_grad_check(net: &DenseNet, x: ArrayView2<f64>, xt: ArrayView2<f64>, tau: f64, eps: f64) -> Result<GradReport, ScarfError> {
    let (_, grads) = info_nce_step(net, x, xt, tau)?;
    Ok(compare_gradients(net, &grads, eps, |n| {
        let a = n.forward_batch(x).unwrap();
        let b = n.forward_batch(xt).unwrap();
        info_nce(a.view(), b.view(), tau).unwrap().0
    }))
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScarfParams {
    pub corruption_rate: f64,
    pub temperature: f64,
    pub hidden_width: usize,
    pub hidden_layers: usize,
    pub repr_dim: usize,
    pub head_hidden: usize,
    pub pretrain_epochs: usize,
}

impl Default for ScarfParams {
    fn default() -> Self {
        ScarfParams {
            corruption_rate: 0.30,
            temperature: 1.0,
            hidden_width: 256,
            hidden_layers: 4,
            repr_dim: 64,
            head_hidden: 64,
            pretrain_epochs: 20,
        }
    }
}

/// A pre-trained encoder and how it was obtained.
#[derive(Debug, Clone, PartialEq)]
pub struct ScarfEncoder {
    pub net: DenseNet,
    pub epochs: usize,
    pub temperature: f64,
    pub corruption_rate: f64,
    /// Mean InfoNCE per epoch.
    pub losses: Vec<f64>,
}

impl ScarfEncoder {
    pub fn final_loss(&self) -> Option<f64> {
        self.losses.last().copied()
    }

    pub fn repr_dim(&self) -> usize {
        self.net.output_dim()
    }
}

/// RNG for the corruption of one batch, independent of every other batch.
pub fn batch_rng(seed: u64, epoch: usize, batch: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5CA2_F00D);
    rng.set_stream(((epoch as u64) << 32) | batch as u64);
    rng
}

/// Label-blind pre-training of a fresh encoder on `train`.
pub fn pretrain(train: &Dataset, enc: &Encoder, cfg: &TrainConfig, params: &ScarfParams) -> Result<ScarfEncoder, ScarfError> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(ScarfError::EmptyTrain);
    }
    if params.repr_dim < 2 {
        return Err(NnError::BadArchitecture("representation dim must be >= 2".into()).into());
    }
    let sampler = CorruptionSampler::new(train, params.corruption_rate)?;
    let mut dims = vec![enc.encoded_dim()];
    dims.extend(std::iter::repeat_n(params.hidden_width, params.hidden_layers));
    dims.push(params.repr_dim);
    let mut net = DenseNet::mlp(&dims, cfg.seed)?;
    let mut opt = Adam::new(&net);
    let rows = train.rows();
    let mut order: Vec<usize> = (0..rows.len()).collect();
    let mut losses = Vec::with_capacity(params.pretrain_epochs);
    let width = enc.encoded_dim();
    for epoch in 0..params.pretrain_epochs {
        order.sort_unstable();
        order.shuffle(&mut epoch_rng(cfg.seed, epoch));
        let (mut total, mut seen) = (0.0, 0usize);
        for (b, chunk) in order.chunks(cfg.batch_size).enumerate() {
            if chunk.len() < 2 {
                continue;
            }
            let mut rng = batch_rng(cfg.seed, epoch, b);
            let mut x = Array2::zeros((chunk.len(), width));
            let mut xt = Array2::zeros((chunk.len(), width));
            for (k, &i) in chunk.iter().enumerate() {
                enc.encode_into(&rows[i], x.row_mut(k).as_slice_mut().unwrap());
                let c = sampler.corrupt(&rows[i], &mut rng);
                enc.encode_into(&c, xt.row_mut(k).as_slice_mut().unwrap());
            }
            let (loss, grads) = info_nce_step(&net, x.view(), xt.view(), params.temperature)?;
            if !loss.is_finite() {
                return Err(NnError::NonFiniteLoss.into());
            }
            opt.update(&mut net, &grads, cfg.learning_rate, 0);
            total += loss * chunk.len() as f64;
            seen += chunk.len();
        }
        if seen > 0 {
            losses.push(total / seen as f64);
        }
    }
    Ok(ScarfEncoder {
        net,
        epochs: params.pretrain_epochs,
        temperature: params.temperature,
        corruption_rate: params.corruption_rate,
        losses,
    })
}

/// Encoder and classification head stored as one network; the first
/// `encoder_layers` layers are the encoder.
#[derive(Debug, Clone, PartialEq)]
pub struct ScarfClassifier {
    pub net: DenseNet,
    pub encoder_layers: usize,
}

impl ScarfClassifier {
    pub fn encoder(&self) -> DenseNet {
        self.net.split_at(self.encoder_layers).0
    }

    pub fn head(&self) -> DenseNet {
        self.net.split_at(self.encoder_layers).1
    }
}

/// Attaches a fresh head to `pre` and trains both with cross-entropy, or
/// only the head when `freeze_encoder` is set.
#[allow(clippy::too_many_arguments)]
pub fn finetune(
    pre: &ScarfEncoder,
    x: &Array2<f64>,
    y: &[usize],
    validation: Option<Validation<'_>>,
    classes: usize,
    cfg: &TrainConfig,
    head_hidden: usize,
    freeze_encoder: bool,
) -> Result<(ScarfClassifier, FitSummary), ScarfError> {
    if x.ncols() != pre.net.input_dim() {
        return Err(ScarfError::Mismatch { expected: pre.net.input_dim(), got: x.ncols() });
    }
    let head = DenseNet::mlp(&[pre.repr_dim(), head_hidden, classes], cfg.seed.wrapping_add(1))?;
    let mut net = pre.net.concat(&head)?;
    let encoder_layers = pre.net.layers().len();
    let from = if freeze_encoder { encoder_layers } else { 0 };
    let summary = fit_classifier(&mut net, x, y, validation, classes, cfg, from)?;
    Ok((ScarfClassifier { net, encoder_layers }, summary))
}
