//! Dense feed-forward networks: forward/backward passes, cross-entropy,
//! Adam, and finite-difference gradient checks.
//!
//! Everything runs in `f64` on a single thread so that a seed fully
//! determines the trained parameters.

mod gradcheck;
mod loss;
mod net;
mod optim;
mod train;

pub use gradcheck::{compare_gradients, grad_check, relative_error, GradReport, ParamKind, TensorError, RELATIVE_FLOOR};
pub use loss::{cross_entropy, cross_entropy_batch, log_sum_exp, softmax};
pub use net::{Activation, Dense, DenseNet, Grads, Trace};
pub use optim::{apply_l2, train_step, Adam, TrainConfig};
pub use train::{epoch_rng, fit_classifier, predict_classes, FitSummary, Validation};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum NnError {
    #[error("bad architecture: {0}")]
    BadArchitecture(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimMismatch { expected: usize, got: usize },
    #[error("loss became non-finite")]
    NonFiniteLoss,
    #[error("empty batch")]
    EmptyBatch,
    #[error("bad training config: {0}")]
    BadConfig(String),
}
