use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::layer::{Activation, DenseLayer, LayerGrad, Mode};
use crate::nn::matrix::Matrix;
use crate::rng::Rng;

/// Names of the trainable arrays in a layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Param {
    Weight,
    Bias,
    Gamma,
    Beta,
}

/// Gradients for every parameter of a [`Mlp`], indexed by layer and [`Param`].
#[derive(Debug, Clone, PartialEq)]
pub struct GradientSet {
    layers: Vec<LayerGrad>,
}

impl GradientSet {
    pub fn zeros_like(net: &Mlp) -> Self {
        Self {
            layers: net.layers.iter().map(LayerGrad::zeros_like).collect(),
        }
    }

    pub fn layers(&self) -> &[LayerGrad] {
        &self.layers
    }

    pub fn get(&self, layer: usize, param: Param) -> Option<&[f64]> {
        let g = self.layers.get(layer)?;
        match param {
            Param::Weight => Some(g.weight.as_slice()),
            Param::Bias => Some(&g.bias),
            Param::Gamma => g.gamma.as_deref(),
            Param::Beta => g.beta.as_deref(),
        }
    }

    /// Flat views in the canonical order: per layer weight, bias, gamma, beta.
    pub fn slices(&self) -> Vec<&[f64]> {
        self.layers.iter().flat_map(|l| l.slices()).collect()
    }

    pub fn is_zero(&self) -> bool {
        self.slices().iter().all(|s| s.iter().all(|v| *v == 0.0))
    }

    pub fn scale(&mut self, s: f64) {
        for l in &mut self.layers {
            for sl in l.slices_mut() {
                sl.iter_mut().for_each(|v| *v *= s);
            }
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.slices()
            .iter()
            .flat_map(|s| s.iter())
            .fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// A stack of dense layers evaluated in order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    layers: Vec<DenseLayer>,
}

impl Mlp {
    /// `input → hidden[0] → … → hidden[k-1] → output`. Hidden layers use
    /// `hidden_activation` and batch norm when `hidden_batchnorm`; the output
    /// layer uses `output_activation` and no batch norm.
    pub fn new(
        input: usize,
        hidden: &[usize],
        output: usize,
        hidden_activation: Activation,
        hidden_batchnorm: bool,
        output_activation: Activation,
        rng: &mut Rng,
    ) -> Result<Self> {
        let mut layers = Vec::with_capacity(hidden.len() + 1);
        let mut width = input;
        for &h in hidden {
            layers.push(DenseLayer::new(width, h, hidden_activation, hidden_batchnorm, rng)?);
            width = h;
        }
        layers.push(DenseLayer::new(width, output, output_activation, false, rng)?);
        Ok(Self { layers })
    }

    pub fn from_layers(layers: Vec<DenseLayer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::invalid("a network needs at least one layer"));
        }
        for (i, pair) in layers.windows(2).enumerate() {
            if pair[0].output_width() != pair[1].input_width() {
                return Err(Error::shape(format!(
                    "layer {i} emits {} columns but layer {} expects {}",
                    pair[0].output_width(),
                    i + 1,
                    pair[1].input_width()
                )));
            }
        }
        Ok(Self { layers })
    }

    /// Re-checks layer shapes and the width chain, e.g. after deserialization.
    pub fn validate(&self) -> Result<()> {
        for l in &self.layers {
            l.validate()?;
        }
        Self::from_layers(self.layers.clone()).map(|_| ())
    }

    pub fn layers(&self) -> &[DenseLayer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [DenseLayer] {
        &mut self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].input_width()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].output_width()
    }

    /// Widths of the hidden layers (every layer but the last).
    pub fn hidden_widths(&self) -> Vec<usize> {
        self.layers[..self.layers.len() - 1]
            .iter()
            .map(DenseLayer::output_width)
            .collect()
    }

    pub fn param_count(&self) -> usize {
        self.params().iter().map(|s| s.len()).sum()
    }

    pub fn params(&self) -> Vec<&[f64]> {
        self.layers.iter().flat_map(DenseLayer::params).collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut [f64]> {
        self.layers.iter_mut().flat_map(DenseLayer::params_mut).collect()
    }

    /// Trainable parameters flattened in canonical order.
    pub fn flat_params(&self) -> Vec<f64> {
        self.params().concat()
    }

    pub fn forward(&mut self, x: &Matrix, mode: Mode) -> Result<Matrix> {
        let mut h = x.clone();
        for l in &mut self.layers {
            h = l.forward(&h, mode)?;
        }
        Ok(h)
    }

    /// Eval-mode forward with no side effects.
    pub fn infer(&self, x: &Matrix) -> Result<Matrix> {
        let mut h = self.layers[0].infer(x)?;
        for l in &self.layers[1..] {
            h = l.infer(&h)?;
        }
        Ok(h)
    }

    /// Back-propagates `grad_output` (∂L/∂output) through the cached forward.
    /// Returns parameter gradients and ∂L/∂input.
    pub fn backward(&mut self, grad_output: &Matrix) -> Result<(GradientSet, Matrix)> {
        let mut grads = Vec::with_capacity(self.layers.len());
        let mut g = grad_output.clone();
        for l in self.layers.iter_mut().rev() {
            let (lg, dx) = l.backward(&g)?;
            grads.push(lg);
            g = dx;
        }
        grads.reverse();
        Ok((GradientSet { layers: grads }, g))
    }

    pub fn clear_cache(&mut self) {
        self.layers.iter_mut().for_each(DenseLayer::clear_cache);
    }
}
