//! Dense layer: affine transform, optional batch normalization, activation.
//!
//! The forward order is `z = x·Wᵀ + b`, then batch norm (when enabled), then
//! the activation. Training-mode forwards cache what the backward pass needs;
//! a backward without a preceding training forward is a state error.

use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::matrix::{dot, Matrix};
use crate::rng::Rng;

pub const BN_EPSILON: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Sigmoid,
    Linear,
}

impl Activation {
    #[inline]
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Sigmoid => sigmoid(z),
            Activation::Linear => z,
        }
    }

    /// Derivative expressed through the pre-activation `z` and output `a`.
    #[inline]
    fn derivative(self, z: f64, a: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Sigmoid => a * (1.0 - a),
            Activation::Linear => 1.0,
        }
    }
}

#[inline]
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Draws an `rows x cols` matrix with i.i.d. `N(0, 2 / fan_in)` entries.
pub fn he_init(fan_in: usize, rows: usize, cols: usize, rng: &mut Rng) -> Result<Matrix> {
    if fan_in == 0 {
        return Err(Error::invalid("He initialization needs fan_in >= 1"));
    }
    let std = (2.0 / fan_in as f64).sqrt();
    let dist = Normal::new(0.0, std).map_err(|e| Error::invalid(e.to_string()))?;
    let data = (0..rows * cols).map(|_| dist.sample(rng)).collect();
    Matrix::from_vec(rows, cols, data)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchNorm {
    #[serde(with = "crate::hexfloat::vec")]
    pub gamma: Vec<f64>,
    #[serde(with = "crate::hexfloat::vec")]
    pub beta: Vec<f64>,
    #[serde(with = "crate::hexfloat::vec")]
    pub running_mean: Vec<f64>,
    #[serde(with = "crate::hexfloat::vec")]
    pub running_var: Vec<f64>,
    #[serde(with = "crate::hexfloat::scalar")]
    pub momentum: f64,
    #[serde(with = "crate::hexfloat::scalar")]
    pub epsilon: f64,
}

impl BatchNorm {
    pub fn new(width: usize) -> Self {
        Self {
            gamma: vec![1.0; width],
            beta: vec![0.0; width],
            running_mean: vec![0.0; width],
            running_var: vec![1.0; width],
            momentum: BN_MOMENTUM,
            epsilon: BN_EPSILON,
        }
    }

    fn width(&self) -> usize {
        self.gamma.len()
    }
}

#[derive(Debug, Clone)]
struct Cache {
    input: Matrix,
    pre_activation: Matrix,
    output: Matrix,
    mode: Mode,
    /// Normalized values and `1/sqrt(var + eps)` per column, when batch norm is on.
    normalized: Option<(Matrix, Vec<f64>)>,
}

/// Parameter gradients of one layer.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerGrad {
    pub weight: Matrix,
    pub bias: Vec<f64>,
    pub gamma: Option<Vec<f64>>,
    pub beta: Option<Vec<f64>>,
}

impl LayerGrad {
    pub fn zeros_like(layer: &DenseLayer) -> Self {
        let (out, inp) = layer.weight.shape();
        Self {
            weight: Matrix::zeros(out, inp),
            bias: vec![0.0; out],
            gamma: layer.batchnorm.as_ref().map(|_| vec![0.0; out]),
            beta: layer.batchnorm.as_ref().map(|_| vec![0.0; out]),
        }
    }

    pub(crate) fn slices(&self) -> Vec<&[f64]> {
        let mut v: Vec<&[f64]> = vec![self.weight.as_slice(), &self.bias];
        if let (Some(g), Some(b)) = (&self.gamma, &self.beta) {
            v.push(g);
            v.push(b);
        }
        v
    }

    pub(crate) fn slices_mut(&mut self) -> Vec<&mut [f64]> {
        let mut v: Vec<&mut [f64]> = vec![self.weight.as_mut_slice(), &mut self.bias];
        if let (Some(g), Some(b)) = (&mut self.gamma, &mut self.beta) {
            v.push(g);
            v.push(b);
        }
        v
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DenseLayer {
    weight: Matrix,
    #[serde(with = "crate::hexfloat::vec")]
    bias: Vec<f64>,
    activation: Activation,
    batchnorm: Option<BatchNorm>,
    #[serde(skip)]
    cache: Option<Cache>,
}

impl PartialEq for DenseLayer {
    fn eq(&self, other: &Self) -> bool {
        self.weight == other.weight
            && self.bias == other.bias
            && self.activation == other.activation
            && self.batchnorm == other.batchnorm
    }
}

impl DenseLayer {
    /// He-initialized weights, zero bias, fresh batch-norm statistics.
    pub fn new(
        input: usize,
        output: usize,
        activation: Activation,
        batchnorm: bool,
        rng: &mut Rng,
    ) -> Result<Self> {
        if output == 0 {
            return Err(Error::invalid("layer output width must be >= 1"));
        }
        let weight = he_init(input, output, input, rng)?;
        Ok(Self {
            weight,
            bias: vec![0.0; output],
            activation,
            batchnorm: batchnorm.then(|| BatchNorm::new(output)),
            cache: None,
        })
    }

    pub fn from_parts(
        weight: Matrix,
        bias: Vec<f64>,
        activation: Activation,
        batchnorm: Option<BatchNorm>,
    ) -> Result<Self> {
        let out = weight.rows();
        if bias.len() != out {
            return Err(Error::shape(format!(
                "bias has {} entries for {out} outputs",
                bias.len()
            )));
        }
        if let Some(bn) = &batchnorm {
            let ok = bn.width() == out
                && bn.beta.len() == out
                && bn.running_mean.len() == out
                && bn.running_var.len() == out;
            if !ok {
                return Err(Error::shape("batch-norm vectors disagree with layer width"));
            }
            if bn.running_var.iter().any(|v| *v < 0.0) {
                return Err(Error::invalid("running variance must be non-negative"));
            }
        }
        Ok(Self {
            weight,
            bias,
            activation,
            batchnorm,
            cache: None,
        })
    }

    pub fn input_width(&self) -> usize {
        self.weight.cols()
    }

    pub fn output_width(&self) -> usize {
        self.weight.rows()
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn weight(&self) -> &Matrix {
        &self.weight
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    pub fn batchnorm(&self) -> Option<&BatchNorm> {
        self.batchnorm.as_ref()
    }

    pub fn batchnorm_mut(&mut self) -> Option<&mut BatchNorm> {
        self.batchnorm.as_mut()
    }

    pub fn has_batchnorm(&self) -> bool {
        self.batchnorm.is_some()
    }

    pub fn weight_mut(&mut self) -> &mut Matrix {
        &mut self.weight
    }

    pub fn bias_mut(&mut self) -> &mut [f64] {
        &mut self.bias
    }

    pub(crate) fn params(&self) -> Vec<&[f64]> {
        let mut v: Vec<&[f64]> = vec![self.weight.as_slice(), &self.bias];
        if let Some(bn) = &self.batchnorm {
            v.push(&bn.gamma);
            v.push(&bn.beta);
        }
        v
    }

    pub(crate) fn params_mut(&mut self) -> Vec<&mut [f64]> {
        let mut v: Vec<&mut [f64]> = vec![self.weight.as_mut_slice(), &mut self.bias];
        if let Some(bn) = &mut self.batchnorm {
            v.push(&mut bn.gamma);
            v.push(&mut bn.beta);
        }
        v
    }

    /// `x·Wᵀ + b`.
    pub fn affine(&self, x: &Matrix) -> Result<Matrix> {
        if x.cols() != self.input_width() {
            return Err(Error::shape(format!(
                "layer expects {} input columns, got {}",
                self.input_width(),
                x.cols()
            )));
        }
        let mut z = x.matmul_t(&self.weight)?;
        for r in 0..z.rows() {
            for (v, b) in z.row_mut(r).iter_mut().zip(&self.bias) {
                *v += b;
            }
        }
        Ok(z)
    }

    /// Batch normalization of pre-activations `z`. Train mode uses batch
    /// statistics and folds them into the running estimates; eval mode uses
    /// the running estimates. Without batch norm the input is returned as is.
    pub fn batchnorm_forward(&mut self, z: &Matrix, mode: Mode) -> Result<Matrix> {
        Ok(self.normalize(z, mode)?.0)
    }

    fn normalize(&mut self, z: &Matrix, mode: Mode) -> Result<(Matrix, Option<(Matrix, Vec<f64>)>)> {
        let Some(bn) = self.batchnorm.as_mut() else {
            return Ok((z.clone(), None));
        };
        if z.cols() != bn.width() {
            return Err(Error::shape(format!(
                "batch norm expects {} columns, got {}",
                bn.width(),
                z.cols()
            )));
        }
        match mode {
            Mode::Eval => {
                let inv_std: Vec<f64> = bn
                    .running_var
                    .iter()
                    .map(|v| 1.0 / (v + bn.epsilon).sqrt())
                    .collect();
                let (xhat, out) = apply_norm(z, &bn.running_mean, &inv_std, &bn.gamma, &bn.beta);
                Ok((out, Some((xhat, inv_std))))
            }
            Mode::Train => {
                let n = z.rows();
                if n < 2 {
                    return Err(Error::InvalidBatch(format!(
                        "batch norm in train mode needs at least 2 rows, got {n}"
                    )));
                }
                let w = z.cols();
                let mut mean = vec![0.0; w];
                for r in 0..n {
                    for (m, v) in mean.iter_mut().zip(z.row(r)) {
                        *m += v;
                    }
                }
                mean.iter_mut().for_each(|m| *m /= n as f64);
                let mut var = vec![0.0; w];
                for r in 0..n {
                    for ((s, v), m) in var.iter_mut().zip(z.row(r)).zip(&mean) {
                        *s += (v - m) * (v - m);
                    }
                }
                var.iter_mut().for_each(|s| *s /= n as f64);
                let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + bn.epsilon).sqrt()).collect();
                let (xhat, out) = apply_norm(z, &mean, &inv_std, &bn.gamma, &bn.beta);

                let unbias = n as f64 / (n as f64 - 1.0);
                let m = bn.momentum;
                for j in 0..w {
                    bn.running_mean[j] = (1.0 - m) * bn.running_mean[j] + m * mean[j];
                    bn.running_var[j] = (1.0 - m) * bn.running_var[j] + m * var[j] * unbias;
                }
                Ok((out, Some((xhat, inv_std))))
            }
        }
    }

    /// Full layer forward. Caches intermediates for [`DenseLayer::backward`].
    pub fn forward(&mut self, x: &Matrix, mode: Mode) -> Result<Matrix> {
        let z = self.affine(x)?;
        let (pre_activation, normalized) = self.normalize(&z, mode)?;
        let output = pre_activation.map(|v| self.activation.apply(v));
        self.cache = Some(Cache {
            input: x.clone(),
            pre_activation,
            output: output.clone(),
            mode,
            normalized,
        });
        Ok(output)
    }

    /// Eval-mode forward that leaves the layer untouched.
    pub fn infer(&self, x: &Matrix) -> Result<Matrix> {
        let mut z = self.affine(x)?;
        if let Some(bn) = &self.batchnorm {
            let inv_std: Vec<f64> = bn
                .running_var
                .iter()
                .map(|v| 1.0 / (v + bn.epsilon).sqrt())
                .collect();
            z = apply_norm(&z, &bn.running_mean, &inv_std, &bn.gamma, &bn.beta).1;
        }
        Ok(z.map(|v| self.activation.apply(v)))
    }

    /// Reverse-mode pass for the cached forward. Returns parameter gradients
    /// and the gradient with respect to the layer input. Consumes the cache.
    pub fn backward(&mut self, grad_output: &Matrix) -> Result<(LayerGrad, Matrix)> {
        let cache = self
            .cache
            .take()
            .ok_or_else(|| Error::State("backward called without a cached forward pass".into()))?;
        if grad_output.shape() != cache.output.shape() {
            return Err(Error::shape(format!(
                "upstream gradient {:?} does not match layer output {:?}",
                grad_output.shape(),
                cache.output.shape()
            )));
        }
        let n = grad_output.rows();
        let w = self.output_width();

        let mut dpre = grad_output.clone();
        for r in 0..n {
            let pre = cache.pre_activation.row(r);
            let out = cache.output.row(r);
            for (j, g) in dpre.row_mut(r).iter_mut().enumerate() {
                *g *= self.activation.derivative(pre[j], out[j]);
            }
        }

        let mut grad = LayerGrad::zeros_like(self);
        let dz = match (&self.batchnorm, &cache.normalized) {
            (Some(bn), Some((xhat, inv_std))) => {
                let mut dgamma = vec![0.0; w];
                let mut dbeta = vec![0.0; w];
                for r in 0..n {
                    let d = dpre.row(r);
                    let xh = xhat.row(r);
                    for j in 0..w {
                        dgamma[j] += d[j] * xh[j];
                        dbeta[j] += d[j];
                    }
                }
                let mut dz = Matrix::zeros(n, w);
                match cache.mode {
                    Mode::Eval => {
                        for r in 0..n {
                            let d = dpre.row(r);
                            for (j, v) in dz.row_mut(r).iter_mut().enumerate() {
                                *v = d[j] * bn.gamma[j] * inv_std[j];
                            }
                        }
                    }
                    Mode::Train => {
                        // dxhat = dpre * gamma; sums over the batch of dxhat and dxhat * xhat.
                        let mut sum_dxhat = vec![0.0; w];
                        let mut sum_dxhat_xhat = vec![0.0; w];
                        for r in 0..n {
                            let d = dpre.row(r);
                            let xh = xhat.row(r);
                            for j in 0..w {
                                let dxh = d[j] * bn.gamma[j];
                                sum_dxhat[j] += dxh;
                                sum_dxhat_xhat[j] += dxh * xh[j];
                            }
                        }
                        let nf = n as f64;
                        for r in 0..n {
                            let d = dpre.row(r);
                            let xh = xhat.row(r);
                            for (j, v) in dz.row_mut(r).iter_mut().enumerate() {
                                let dxh = d[j] * bn.gamma[j];
                                *v = inv_std[j] / nf
                                    * (nf * dxh - sum_dxhat[j] - xh[j] * sum_dxhat_xhat[j]);
                            }
                        }
                    }
                }
                grad.gamma = Some(dgamma);
                grad.beta = Some(dbeta);
                dz
            }
            _ => dpre,
        };

        let in_w = self.input_width();
        let gw = grad.weight.as_mut_slice();
        for r in 0..n {
            let d = dz.row(r);
            let x = cache.input.row(r);
            for (j, &dj) in d.iter().enumerate() {
                grad.bias[j] += dj;
                if dj != 0.0 {
                    for (g, xv) in gw[j * in_w..(j + 1) * in_w].iter_mut().zip(x) {
                        *g += dj * xv;
                    }
                }
            }
        }
        let dx = dz.matmul(&self.weight)?;
        Ok((grad, dx))
    }

    /// Re-checks the shape invariants, e.g. after deserialization.
    pub fn validate(&self) -> Result<()> {
        Self::from_parts(
            self.weight.clone(),
            self.bias.clone(),
            self.activation,
            self.batchnorm.clone(),
        )
        .map(|_| ())
    }

    pub(crate) fn clear_cache(&mut self) {
        self.cache = None;
    }

    /// Row-wise helper used by tests: eval output for a single row.
    pub fn infer_row(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.input_width() {
            return Err(Error::shape("row width does not match layer input"));
        }
        let mut z: Vec<f64> = (0..self.output_width())
            .map(|j| dot(self.weight.row(j), x) + self.bias[j])
            .collect();
        if let Some(bn) = &self.batchnorm {
            for (j, v) in z.iter_mut().enumerate() {
                *v = bn.gamma[j] * (*v - bn.running_mean[j]) / (bn.running_var[j] + bn.epsilon).sqrt()
                    + bn.beta[j];
            }
        }
        Ok(z.into_iter().map(|v| self.activation.apply(v)).collect())
    }
}

fn apply_norm(
    z: &Matrix,
    mean: &[f64],
    inv_std: &[f64],
    gamma: &[f64],
    beta: &[f64],
) -> (Matrix, Matrix) {
    let mut xhat = Matrix::zeros(z.rows(), z.cols());
    let mut out = Matrix::zeros(z.rows(), z.cols());
    for r in 0..z.rows() {
        let src = z.row(r);
        for j in 0..z.cols() {
            let h = (src[j] - mean[j]) * inv_std[j];
            xhat.set(r, j, h);
            out.set(r, j, gamma[j] * h + beta[j]);
        }
    }
    (xhat, out)
}
