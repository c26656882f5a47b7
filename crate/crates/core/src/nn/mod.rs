//! Minimal dense network engine in `f64`.

pub mod adam;
pub mod layer;
pub mod loss;
pub mod matrix;
pub mod network;
pub mod reversal;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use layer::{he_init, sigmoid, Activation, BatchNorm, DenseLayer, LayerGrad, Mode};
pub use loss::{bce_grad, bce_loss, mse_recon_grad, mse_recon_loss, PROB_EPSILON};
pub use matrix::Matrix;
pub use network::{GradientSet, Mlp, Param};
pub use reversal::GradientReversal;
