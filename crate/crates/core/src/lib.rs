//! Transferability measurement between a target tabular dataset and
//! heterogeneous source datasets.
//!
//! A target encoder maps target rows into the source feature space, where a
//! label predictor initialized from the pretrained source classifier is
//! fine-tuned on both domains. A domain classifier behind a gradient
//! reversal junction pushes encoded target rows toward the source
//! distribution, and a decoder keeps the encoding informative by
//! reconstructing the target rows. Transferability is the relative accuracy
//! gain of this model over a target-only baseline.

pub mod cli;
pub mod data;
pub mod error;
pub mod hexfloat;
pub mod model;
pub mod nn;
pub mod rng;
pub mod synthetic;
pub mod train;
pub mod transfer;

pub use error::{Error, Result};
