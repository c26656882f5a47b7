//! Generated dataset families with a known transferability ordering.
//!
//! The "ordering" suite draws a latent vector `z` and a nonlinear label rule
//! on it. The target observes `z` through a random full-rank linear map.
//! Source A observes the same `z` through another invertible map, padded
//! with noise columns to a different width, under the same label rule.
//! Source B is pure noise with coin-flip labels. Source C has A's features
//! with every label inverted.

use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::nn::Matrix;
use crate::rng::{derive_seed, seeded, tag, Rng};

pub const SUITES: [&str; 1] = ["ordering"];

/// Row counts and widths of the ordering suite.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OrderingSize {
    pub latent: usize,
    pub target_rows: usize,
    pub target_dim: usize,
    pub source_rows: usize,
    /// Noise columns appended to source A's transformed latent features.
    pub source_pad: usize,
    pub noise_dim: usize,
}

impl Default for OrderingSize {
    fn default() -> Self {
        Self {
            latent: 4,
            target_rows: 150,
            target_dim: 5,
            source_rows: 600,
            source_pad: 2,
            noise_dim: 6,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSuite {
    pub name: String,
    pub target: Dataset,
    pub sources: Vec<Dataset>,
    pub expected_best: String,
    pub notes: String,
}

const LABEL_NOISE: f64 = 0.03;
const FEATURE_NOISE: f64 = 0.05;

fn normal(rng: &mut Rng) -> f64 {
    StandardNormal.sample(rng)
}

fn gaussian(rows: usize, cols: usize, rng: &mut Rng) -> Matrix {
    let data = (0..rows * cols).map(|_| normal(rng)).collect();
    Matrix::from_vec(rows, cols, data).expect("sized buffer")
}

/// Random map whose singular values stay away from zero: a Gaussian matrix
/// plus a scaled identity block.
fn well_conditioned(rows: usize, cols: usize, rng: &mut Rng) -> Matrix {
    let mut m = gaussian(rows, cols, rng).scale(0.5);
    for i in 0..rows.min(cols) {
        m.set(i, i, m.get(i, i) + 1.5);
    }
    m
}

/// Median of a chi-square variable with four degrees of freedom.
const BALL_RADIUS_SQ: f64 = 3.356_694;

/// Inside a latent ball holding half the mass. No linear map sends the
/// ball onto its complement, so inverted labels cannot be matched by the
/// encoder alone.
fn label_rule(z: &[f64]) -> u8 {
    u8::from(z[..4].iter().map(|v| v * v).sum::<f64>() < BALL_RADIUS_SQ)
}

fn latent_labels(z: &Matrix, rng: &mut Rng) -> Vec<u8> {
    (0..z.rows())
        .map(|r| {
            let y = label_rule(z.row(r));
            if rng.random::<f64>() < LABEL_NOISE {
                1 - y
            } else {
                y
            }
        })
        .collect()
}

fn observe(z: &Matrix, map: &Matrix, pad: usize, rng: &mut Rng) -> Result<Matrix> {
    let mut x = z.matmul(map)?;
    for v in x.as_mut_slice() {
        *v += FEATURE_NOISE * normal(rng);
    }
    if pad == 0 {
        return Ok(x);
    }
    let noise = gaussian(x.rows(), pad, rng);
    let rows: Vec<Vec<f64>> = (0..x.rows()).map(|r| [x.row(r), noise.row(r)].concat()).collect();
    Matrix::from_rows(&rows)
}

pub fn ordering_suite(seed: u64, size: OrderingSize) -> Result<SyntheticSuite> {
    if size.latent < 4 || size.target_dim < size.latent || size.target_rows < 20 || size.source_rows < 20 {
        return Err(Error::invalid("ordering suite needs latent >= 4, target_dim >= latent and >= 20 rows"));
    }
    let mut rng = seeded(derive_seed(seed, &[tag("ordering")]));
    let target_map = well_conditioned(size.latent, size.target_dim, &mut rng);
    let source_map = well_conditioned(size.latent, size.latent, &mut rng);

    let z_t = gaussian(size.target_rows, size.latent, &mut rng);
    let y_t = latent_labels(&z_t, &mut rng);
    let x_t = observe(&z_t, &target_map, 0, &mut rng)?;

    let z_s = gaussian(size.source_rows, size.latent, &mut rng);
    let y_a = latent_labels(&z_s, &mut rng);
    let x_a = observe(&z_s, &source_map, size.source_pad, &mut rng)?;

    let x_b = gaussian(size.source_rows, size.noise_dim, &mut rng);
    let y_b: Vec<u8> = (0..size.source_rows).map(|_| u8::from(rng.random::<bool>())).collect();

    let y_c: Vec<u8> = y_a.iter().map(|&y| 1 - y).collect();

    let target = Dataset::new("target", x_t, y_t)?;
    let a = Dataset::new("source_a", x_a.clone(), y_a)?;
    let b = Dataset::new("source_b", x_b, y_b)?;
    let c = Dataset::new("source_c", x_a, y_c)?;
    for ds in [&target, &a, &b, &c] {
        if !ds.has_both_classes() {
            return Err(Error::DegenerateData(format!("generated `{}` holds one class", ds.name())));
        }
    }
    let notes = format!(
        "suite: ordering\nseed: {seed}\n\
         target: {} rows, {} features; label = [z0^2 + z1^2 + z2^2 + z3^2 < 3.3567] on a {}-dim latent z, \
         observed through a random linear map, {:.0}% label noise\n\
         source_a: {} rows, {} features; same latent process through an invertible map plus {} noise columns, same label rule\n\
         source_b: {} rows, {} features; Gaussian noise with coin-flip labels\n\
         source_c: source_a's features with every label inverted\n\
         expected best source: source_a\n\
         expected ordering: source_a and source_c above source_b; source_c transfers best with flipped labels\n",
        size.target_rows,
        size.target_dim,
        size.latent,
        LABEL_NOISE * 100.0,
        size.source_rows,
        size.latent + size.source_pad,
        size.source_pad,
        size.source_rows,
        size.noise_dim,
    );
    Ok(SyntheticSuite {
        name: "ordering".into(),
        target,
        sources: vec![a, b, c],
        expected_best: "source_a".into(),
        notes,
    })
}

/// Builds a named suite with its default sizes.
pub fn suite(name: &str, seed: u64) -> Result<SyntheticSuite> {
    match name {
        "ordering" => ordering_suite(seed, OrderingSize::default()),
        other => Err(Error::invalid(format!(
            "unknown suite `{other}` (available: {})",
            SUITES.join(", ")
        ))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shapes_and_relations() {
        let s = suite("ordering", 1).unwrap();
        let sz = OrderingSize::default();
        assert_eq!(s.sources.len(), 3);
        assert_eq!(s.target.features().shape(), (sz.target_rows, sz.target_dim));
        let (a, b, c) = (&s.sources[0], &s.sources[1], &s.sources[2]);
        assert_eq!(a.dim(), sz.latent + sz.source_pad);
        assert_ne!(a.dim(), s.target.dim());
        assert_eq!(b.dim(), sz.noise_dim);
        assert_eq!(c.features(), a.features());
        assert!(a.labels().iter().zip(c.labels()).all(|(x, y)| x + y == 1));
        assert!(s.notes.contains("expected best source: source_a"));
    }

    #[test]
    fn deterministic_per_seed() {
        assert_eq!(suite("ordering", 3).unwrap(), suite("ordering", 3).unwrap());
        assert_ne!(suite("ordering", 3).unwrap().target, suite("ordering", 4).unwrap().target);
        assert!(suite("nope", 1).is_err());
    }

    #[test]
    fn label_rule_is_balanced_enough() {
        let s = suite("ordering", 2).unwrap();
        let frac = s.target.positives() as f64 / s.target.size() as f64;
        assert!((0.25..=0.75).contains(&frac), "{frac}");
    }
}
