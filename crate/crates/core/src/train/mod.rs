//! Source pretraining, the adversarial training loop with early stopping,
//! and the cross-validated hyperparameter grid.

mod fit;
mod grid;
mod objective;
mod stopping;

pub use fit::{fit_classifier, pretrain_source, train_transmeter, ClassifierFit};
pub use grid::{grid_search, GridResult, GridSpec, DEFAULT_ALPHAS, DEFAULT_BETAS, DEFAULT_SEEDS};
pub use objective::{compute_objective, objective_gradients, train_step, ModelGradients, ObjectiveBreakdown, OptimizerStates};
pub use stopping::{simulate_stopping, EarlyStopping, EpochRecord, StopState, TrainHistory};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Architecture;
use crate::nn::AdamConfig;

/// Every knob of one training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub alpha: f64,
    pub beta: f64,
    pub seed: u64,
    pub flip: bool,
    pub lr: f64,
    pub per_domain_batch: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub use_pretrained_init: bool,
    pub use_reconstruction: bool,
    pub validation_fraction: f64,
    pub arch: Architecture,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            alpha: 0.1,
            beta: 0.1,
            seed: 1,
            flip: false,
            lr: 1e-3,
            per_domain_batch: 32,
            max_epochs: 500,
            patience: 10,
            use_pretrained_init: true,
            use_reconstruction: true,
            validation_fraction: 0.2,
            arch: Architecture::default(),
        }
    }
}

impl TrainConfig {
    /// β as seen by the objective: zero when reconstruction is switched off.
    pub fn effective_beta(&self) -> f64 {
        if self.use_reconstruction {
            self.beta
        } else {
            0.0
        }
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            lr: self.lr,
            ..AdamConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return Err(Error::invalid(format!("alpha must be finite and >= 0, got {}", self.alpha)));
        }
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return Err(Error::invalid(format!("beta must be finite and >= 0, got {}", self.beta)));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::invalid("learning rate must be positive"));
        }
        if self.patience == 0 || self.max_epochs == 0 {
            return Err(Error::invalid("patience and max_epochs must be >= 1"));
        }
        if self.per_domain_batch < 2 {
            return Err(Error::invalid("per-domain batch must be >= 2 for batch norm"));
        }
        if !(self.validation_fraction > 0.0 && self.validation_fraction < 1.0) {
            return Err(Error::invalid("validation fraction must lie in (0, 1)"));
        }
        if self.arch.predictor_widths.is_empty() {
            return Err(Error::invalid("label predictor needs at least one hidden layer"));
        }
        Ok(())
    }
}
