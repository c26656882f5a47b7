//! Binary cross-entropy and squared reconstruction error, each with its
//! gradient with respect to the prediction.

use crate::error::{Error, Result};
use crate::nn::matrix::Matrix;

/// Probability clamp applied inside the cross-entropy logs.
pub const PROB_EPSILON: f64 = 1e-7;

fn check_lengths(y_hat: &[f64], y: &[f64]) -> Result<()> {
    if y_hat.len() != y.len() {
        return Err(Error::shape(format!(
            "{} predictions for {} labels",
            y_hat.len(),
            y.len()
        )));
    }
    if y.is_empty() {
        return Err(Error::invalid("cross-entropy over an empty batch"));
    }
    Ok(())
}

#[inline]
fn clamp(p: f64) -> f64 {
    p.clamp(PROB_EPSILON, 1.0 - PROB_EPSILON)
}

/// Mean of `−y·ln ŷ − (1−y)·ln(1−ŷ)` with ŷ clamped to `[ε, 1−ε]`.
pub fn bce_loss(y_hat: &[f64], y: &[f64]) -> Result<f64> {
    check_lengths(y_hat, y)?;
    let sum: f64 = y_hat
        .iter()
        .zip(y)
        .map(|(&p, &t)| {
            let p = clamp(p);
            -t * p.ln() - (1.0 - t) * (1.0 - p).ln()
        })
        .sum();
    Ok(sum / y.len() as f64)
}

/// ∂[`bce_loss`]/∂ŷ. Zero where the clamp is active.
pub fn bce_grad(y_hat: &[f64], y: &[f64]) -> Result<Vec<f64>> {
    check_lengths(y_hat, y)?;
    let n = y.len() as f64;
    Ok(y_hat
        .iter()
        .zip(y)
        .map(|(&p, &t)| {
            if p <= PROB_EPSILON || p >= 1.0 - PROB_EPSILON {
                0.0
            } else {
                (-t / p + (1.0 - t) / (1.0 - p)) / n
            }
        })
        .collect())
}

/// Mean over rows of ‖x̂ − x‖².
pub fn mse_recon_loss(x_hat: &Matrix, x: &Matrix) -> Result<f64> {
    if x_hat.shape() != x.shape() {
        return Err(Error::shape(format!(
            "reconstruction {:?} vs input {:?}",
            x_hat.shape(),
            x.shape()
        )));
    }
    if x.rows() == 0 {
        return Err(Error::invalid("reconstruction loss over an empty batch"));
    }
    let sum: f64 = x_hat
        .as_slice()
        .iter()
        .zip(x.as_slice())
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    Ok(sum / x.rows() as f64)
}

/// ∂[`mse_recon_loss`]/∂x̂ = 2(x̂ − x)/n.
pub fn mse_recon_grad(x_hat: &Matrix, x: &Matrix) -> Result<Matrix> {
    if x_hat.shape() != x.shape() {
        return Err(Error::shape(format!(
            "reconstruction {:?} vs input {:?}",
            x_hat.shape(),
            x.shape()
        )));
    }
    let n = x.rows() as f64;
    let data = x_hat
        .as_slice()
        .iter()
        .zip(x.as_slice())
        .map(|(a, b)| 2.0 * (a - b) / n)
        .collect();
    Matrix::from_vec(x.rows(), x.cols(), data)
}
