use ndarray::{Array2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::net::DenseNet;
use super::optim::{train_step, Adam, TrainConfig};
use super::NnError;
use crate::metrics::{argmax, macro_f1};

/// Validation rows used for early stopping.
pub struct Validation<'a> {
    pub x: &'a Array2<f64>,
    pub y: &'a [usize],
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitSummary {
    pub epochs_run: usize,
    /// Epoch (1-based) whose parameters were kept; 0 means the initial ones.
    pub best_epoch: usize,
    pub best_val_macro_f1: Option<f64>,
    pub last_train_loss: Option<f64>,
}

/// Stream of per-epoch shuffles. Epoch `e` uses ChaCha8 seeded with `seed`
/// on stream `e`, so the order never depends on how many draws earlier
/// epochs made.
pub fn epoch_rng(seed: u64, epoch: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(epoch as u64 + 1);
    rng
}

pub fn predict_classes(net: &DenseNet, x: &Array2<f64>) -> Vec<usize> {
    let logits = net.forward_batch(x.view()).expect("input matches network");
    logits.rows().into_iter().map(|r| argmax(r.as_slice().unwrap())).collect()
}

/// Mini-batch Adam on cross-entropy. With a validation set, training stops
/// after `early_stop_patience` epochs without a macro-F1 improvement and the
/// best parameters are restored. Layers before `trainable_from` stay frozen.
pub fn fit_classifier(
    net: &mut DenseNet,
    x: &Array2<f64>,
    y: &[usize],
    validation: Option<Validation<'_>>,
    classes: usize,
    cfg: &TrainConfig,
    trainable_from: usize,
) -> Result<FitSummary, NnError> {
    cfg.validate()?;
    if y.is_empty() {
        return Err(NnError::EmptyBatch);
    }
    let mut opt = Adam::new(net);
    let mut order: Vec<usize> = (0..y.len()).collect();
    let score = |n: &DenseNet, v: &Validation<'_>| macro_f1(v.y, &predict_classes(n, v.x), classes);

    let mut best = validation.as_ref().map(|v| (score(net, v), net.clone()));
    let mut best_epoch = 0;
    let mut stale = 0;
    let mut last_loss = None;
    let mut epochs_run = 0;
    for epoch in 0..cfg.max_epochs {
        order.sort_unstable();
        order.shuffle(&mut epoch_rng(cfg.seed, epoch));
        let mut total = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let xb = x.select(Axis(0), chunk);
            let yb: Vec<usize> = chunk.iter().map(|&i| y[i]).collect();
            total += train_step(net, &mut opt, xb.view(), &yb, cfg, trainable_from)? * chunk.len() as f64;
        }
        last_loss = Some(total / y.len() as f64);
        epochs_run = epoch + 1;
        if let (Some(v), Some((best_score, best_net))) = (validation.as_ref(), best.as_mut()) {
            let s = score(net, v);
            if s > *best_score {
                *best_score = s;
                *best_net = net.clone();
                best_epoch = epochs_run;
                stale = 0;
            } else {
                stale += 1;
                if stale >= cfg.early_stop_patience {
                    break;
                }
            }
        } else {
            best_epoch = epochs_run;
        }
    }
    let best_val_macro_f1 = best.as_ref().map(|b| b.0);
    if let Some((_, b)) = best {
        *net = b;
    }
    Ok(FitSummary { epochs_run, best_epoch, best_val_macro_f1, last_train_loss: last_loss })
}
