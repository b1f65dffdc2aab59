//! Classical readouts: a feed-forward network trained with Adam, and the
//! linear baselines (ridge regression, multinomial logistic regression).
//!
//! Batches are row-major: one sample per row.

mod activation;
mod adam;
mod linear;
mod loss;
mod mlp;
mod train;

pub use activation::{
    gelu, gelu_derivative, softmax, softmax_rows, HiddenActivation, OutputActivation,
};
pub use adam::{AdamState, WeightDecay, DEFAULT_LEARNING_RATE, DEFAULT_WEIGHT_DECAY};
pub use linear::{
    accuracy, fit_logistic, fit_multinomial_logistic, fit_ridge, fit_ridge_through_origin,
    lambda_grid, LinearKind, LinearModel, LOGISTIC_MAX_ITERATIONS, LOGISTIC_TOLERANCE,
};
pub use loss::{
    loss_cross_entropy, loss_huber, loss_mse, LossKind, Targets, DEFAULT_HUBER_DELTA, PROB_FLOOR,
};
pub use mlp::{ForwardCache, Gradients, Mlp};
pub use train::{train_mlp, History, TrainConfig, Trained};
