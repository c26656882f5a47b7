//! Source classifier and the four-block transfer network: target encoder,
//! target decoder, label predictor and domain classifier.
//!
//! Source rows live natively in the `d_s`-dimensional source feature space.
//! Target rows are mapped there by the encoder, so every row of a mixed batch
//! has a homogeneous representation of width `d_s` that the label predictor
//! and the domain classifier consume.

mod checkpoint;

pub use checkpoint::{Checkpoint, CheckpointKind, ModuleRecord, CHECKPOINT_FORMAT};

use serde::{Deserialize, Serialize};

use crate::data::{Batch, NormStats};
use crate::error::{Error, Result};
use crate::nn::{Activation, GradientReversal, Matrix, Mlp, Mode};
use crate::rng::Rng;

pub const DEFAULT_PREDICTOR_WIDTHS: [usize; 4] = [64, 32, 16, 8];
pub const DEEP_PREDICTOR_WIDTHS: [usize; 5] = [64, 48, 32, 16, 8];
pub const DEFAULT_ENCODER_WIDTHS: [usize; 3] = [64, 32, 32];
pub const DEEP_ENCODER_WIDTHS: [usize; 4] = [64, 48, 32, 32];

/// Hidden widths of the label-predictor family and of the target encoder.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Architecture {
    pub predictor_widths: Vec<usize>,
    pub encoder_widths: Vec<usize>,
}

impl Default for Architecture {
    fn default() -> Self {
        Self {
            predictor_widths: DEFAULT_PREDICTOR_WIDTHS.to_vec(),
            encoder_widths: DEFAULT_ENCODER_WIDTHS.to_vec(),
        }
    }
}

/// Binary classifier pretrained on a source dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct SourceModel {
    pub net: Mlp,
    /// Statistics the source features were z-normalized with before training.
    pub normalization: Option<NormStats>,
}

impl SourceModel {
    pub fn input_dim(&self) -> usize {
        self.net.input_dim()
    }

    pub fn hidden_widths(&self) -> Vec<usize> {
        self.net.hidden_widths()
    }

    pub fn hidden_depth(&self) -> usize {
        self.net.layers().len() - 1
    }

    /// Eval-mode probabilities, one per row.
    pub fn predict(&self, x: &Matrix) -> Result<Vec<f64>> {
        Ok(self.net.infer(x)?.into_vec())
    }
}

fn classifier(input: usize, hidden: &[usize], rng: &mut Rng) -> Result<Mlp> {
    Mlp::new(input, hidden, 1, Activation::Relu, true, Activation::Sigmoid, rng)
}

/// He-initialized `d_s → widths → 1` stack: batch norm and ReLU on hidden
/// layers, sigmoid output, zero biases.
pub fn build_source_model(d_s: usize, hidden_widths: &[usize], rng: &mut Rng) -> Result<SourceModel> {
    if hidden_widths.is_empty() {
        return Err(Error::invalid("source model needs at least one hidden layer"));
    }
    if d_s == 0 {
        return Err(Error::invalid("source dimension must be >= 1"));
    }
    Ok(SourceModel {
        net: classifier(d_s, hidden_widths, rng)?,
        normalization: None,
    })
}

/// The four trainable blocks plus the loss weights.
#[derive(Debug, Clone, PartialEq)]
pub struct TransmeterModel {
    pub encoder: Mlp,
    pub decoder: Mlp,
    pub label_predictor: Mlp,
    pub domain_classifier: Mlp,
    pub alpha: f64,
    pub beta: f64,
    d_s: usize,
    d_t: usize,
}

/// Rows of a batch mapped into the `d_s`-wide shared space.
#[derive(Debug, Clone, PartialEq)]
pub struct HomogeneousBatch {
    pub representation: Matrix,
    pub domain_labels: Vec<f64>,
}

/// Builds the transfer network.
///
/// The encoder is `d_t → encoder_widths → d_s` and the decoder mirrors it;
/// both use batch norm and ReLU on hidden layers and a plain linear output.
/// With `source`, the label predictor is a copy of the pretrained network;
/// otherwise it is He-initialized as `d_s → predictor_widths → 1`. The
/// domain classifier is a single sigmoid unit over the shared space.
#[allow(clippy::too_many_arguments)]
pub fn build_transmeter(
    d_s: usize,
    d_t: usize,
    encoder_widths: &[usize],
    source: Option<&SourceModel>,
    predictor_widths: &[usize],
    alpha: f64,
    beta: f64,
    rng: &mut Rng,
) -> Result<TransmeterModel> {
    if d_s == 0 || d_t == 0 {
        return Err(Error::invalid("feature dimensions must be >= 1"));
    }
    if !(alpha >= 0.0) || !(beta >= 0.0) {
        return Err(Error::invalid("alpha and beta must be non-negative"));
    }
    if let Some(src) = source {
        if src.input_dim() != d_s {
            return Err(Error::shape(format!(
                "source model takes {} features but d_s is {d_s}",
                src.input_dim()
            )));
        }
    }
    let encoder = Mlp::new(d_t, encoder_widths, d_s, Activation::Relu, true, Activation::Linear, rng)?;
    let mirrored: Vec<usize> = encoder_widths.iter().rev().copied().collect();
    let decoder = Mlp::new(d_s, &mirrored, d_t, Activation::Relu, true, Activation::Linear, rng)?;
    let label_predictor = match source {
        Some(src) => {
            let mut net = src.net.clone();
            net.clear_cache();
            net
        }
        None => {
            if predictor_widths.is_empty() {
                return Err(Error::invalid("label predictor needs at least one hidden layer"));
            }
            classifier(d_s, predictor_widths, rng)?
        }
    };
    let domain_classifier = Mlp::new(d_s, &[], 1, Activation::Linear, false, Activation::Sigmoid, rng)?;
    Ok(TransmeterModel {
        encoder,
        decoder,
        label_predictor,
        domain_classifier,
        alpha,
        beta,
        d_s,
        d_t,
    })
}

impl TransmeterModel {
    pub fn from_parts(
        encoder: Mlp,
        decoder: Mlp,
        label_predictor: Mlp,
        domain_classifier: Mlp,
        alpha: f64,
        beta: f64,
    ) -> Result<Self> {
        let d_t = encoder.input_dim();
        let d_s = encoder.output_dim();
        let ok = decoder.input_dim() == d_s
            && decoder.output_dim() == d_t
            && label_predictor.input_dim() == d_s
            && label_predictor.output_dim() == 1
            && domain_classifier.input_dim() == d_s
            && domain_classifier.output_dim() == 1;
        if !ok {
            return Err(Error::shape("transfer network blocks disagree on d_s / d_t"));
        }
        Ok(Self {
            encoder,
            decoder,
            label_predictor,
            domain_classifier,
            alpha,
            beta,
            d_s,
            d_t,
        })
    }

    pub fn d_s(&self) -> usize {
        self.d_s
    }

    pub fn d_t(&self) -> usize {
        self.d_t
    }

    fn check_batch(&self, batch: &Batch) -> Result<()> {
        if batch.n_source() > 0 && batch.source_features.cols() != self.d_s {
            return Err(Error::shape(format!(
                "source rows have {} features, model expects {}",
                batch.source_features.cols(),
                self.d_s
            )));
        }
        if batch.n_target() > 0 && batch.target_features.cols() != self.d_t {
            return Err(Error::shape(format!(
                "target rows have {} features, model expects {}",
                batch.target_features.cols(),
                self.d_t
            )));
        }
        Ok(())
    }

    /// Encodes the target block only. Returns a `0 x d_s` matrix when the batch has no target rows.
    pub(crate) fn encode_target(&mut self, batch: &Batch, mode: Mode) -> Result<Matrix> {
        self.check_batch(batch)?;
        if batch.n_target() == 0 {
            return Ok(Matrix::zeros(0, self.d_s));
        }
        self.encoder.forward(&batch.target_features, mode)
    }

    /// Source rows unchanged, target rows through the encoder.
    pub fn homogeneous(&mut self, batch: &Batch, mode: Mode) -> Result<HomogeneousBatch> {
        let encoded = self.encode_target(batch, mode)?;
        let representation = if batch.n_source() > 0 {
            batch.source_features.vstack(&encoded)?
        } else {
            encoded
        };
        Ok(HomogeneousBatch {
            representation,
            domain_labels: batch.domain_labels(),
        })
    }

    pub fn predict_label(&mut self, batch: &Batch, mode: Mode) -> Result<Vec<f64>> {
        let h = self.homogeneous(batch, mode)?;
        Ok(self.label_predictor.forward(&h.representation, mode)?.into_vec())
    }

    pub fn predict_domain(&mut self, batch: &Batch, mode: Mode) -> Result<Vec<f64>> {
        let h = self.homogeneous(batch, mode)?;
        let grl = GradientReversal::new(self.alpha)?;
        Ok(self
            .domain_classifier
            .forward(&grl.forward(&h.representation), mode)?
            .into_vec())
    }

    /// Decoded target rows. The batch must hold target rows only.
    pub fn reconstruct(&mut self, batch: &Batch, mode: Mode) -> Result<Matrix> {
        if batch.n_source() > 0 {
            return Err(Error::invalid("reconstruction is defined for target rows only"));
        }
        let encoded = self.encode_target(batch, mode)?;
        self.decoder.forward(&encoded, mode)
    }

    /// Eval-mode label probabilities for raw target rows (encoder, then label predictor).
    pub fn predict_target(&self, x_t: &Matrix) -> Result<Vec<f64>> {
        if x_t.cols() != self.d_t {
            return Err(Error::shape(format!(
                "target rows have {} features, model expects {}",
                x_t.cols(),
                self.d_t
            )));
        }
        let h = self.encoder.infer(x_t)?;
        Ok(self.label_predictor.infer(&h)?.into_vec())
    }

    pub fn clear_cache(&mut self) {
        self.encoder.clear_cache();
        self.decoder.clear_cache();
        self.label_predictor.clear_cache();
        self.domain_classifier.clear_cache();
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{he_init, DenseLayer};
    use crate::rng::seeded;

    fn zero_net(net: &Mlp) -> Mlp {
        let mut n = net.clone();
        for p in n.params_mut() {
            p.iter_mut().for_each(|v| *v = 0.0);
        }
        n
    }

    fn model(seed: u64) -> TransmeterModel {
        build_transmeter(4, 3, &[6, 5], None, &[5, 4], 0.3, 0.1, &mut seeded(seed)).unwrap()
    }

    fn mixed_batch(seed: u64, ns: usize, nt: usize) -> Batch {
        let mut rng = seeded(seed);
        let s = he_init(1, ns, 4, &mut rng).unwrap();
        let t = he_init(1, nt, 3, &mut rng).unwrap();
        Batch::new(s, vec![1.0; ns], t, vec![0.0; nt]).unwrap()
    }

    #[test]
    fn source_model_widths_and_errors() {
        let m = build_source_model(14, &[64, 32, 16, 8], &mut seeded(1)).unwrap();
        let w: Vec<(usize, usize)> = m.net.layers().iter().map(|l| (l.input_width(), l.output_width())).collect();
        assert_eq!(w, vec![(14, 64), (64, 32), (32, 16), (16, 8), (8, 1)]);
        assert_eq!(m.hidden_depth(), 4);
        assert!(m.net.layers().iter().all(|l| l.bias().iter().all(|b| *b == 0.0)));
        assert_eq!(m, build_source_model(14, &[64, 32, 16, 8], &mut seeded(1)).unwrap());
        assert!(build_source_model(14, &[], &mut seeded(1)).is_err());
    }

    #[test]
    fn encoder_decoder_mirror() {
        let m = build_transmeter(14, 8, &[64, 32, 32], None, &DEFAULT_PREDICTOR_WIDTHS, 0.1, 0.1, &mut seeded(2)).unwrap();
        let widths = |n: &Mlp| {
            let mut v = vec![n.input_dim()];
            v.extend(n.layers().iter().map(DenseLayer::output_width));
            v
        };
        assert_eq!(widths(&m.encoder), vec![8, 64, 32, 32, 14]);
        assert_eq!(widths(&m.decoder), vec![14, 32, 32, 64, 8]);
        let last = m.encoder.layers().last().unwrap();
        assert_eq!(last.activation(), Activation::Linear);
        assert!(!last.has_batchnorm());
        assert_eq!(m.domain_classifier.layers().len(), 1);
    }

    #[test]
    fn pretrained_predictor_copied_by_value() {
        let src = build_source_model(4, &[5, 4], &mut seeded(3)).unwrap();
        let mut m = build_transmeter(4, 3, &[6], Some(&src), &[], 0.1, 0.1, &mut seeded(4)).unwrap();
        assert_eq!(m.label_predictor, src.net);
        m.label_predictor.params_mut()[0][0] += 1.0;
        assert_ne!(m.label_predictor, src.net);

        let fresh = build_transmeter(4, 3, &[6], None, &[5, 4], 0.1, 0.1, &mut seeded(4)).unwrap();
        assert_ne!(fresh.label_predictor.flat_params(), src.net.flat_params());

        let wrong = build_source_model(5, &[4], &mut seeded(3)).unwrap();
        assert!(matches!(
            build_transmeter(4, 3, &[6], Some(&wrong), &[], 0.1, 0.1, &mut seeded(4)),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn homogeneous_branches() {
        let mut m = model(5);
        let b = mixed_batch(6, 3, 0);
        let h = m.homogeneous(&b, Mode::Eval).unwrap();
        assert_eq!(h.representation, b.source_features);

        m.encoder = zero_net(&m.encoder);
        let t = mixed_batch(7, 0, 4);
        let h = m.homogeneous(&t, Mode::Eval).unwrap();
        assert!(h.representation.as_slice().iter().all(|v| *v == 0.0));
        assert_eq!(h.representation.cols(), 4);

        let mut m = model(5);
        let mix = mixed_batch(8, 2, 3);
        let h = m.homogeneous(&mix, Mode::Eval).unwrap();
        let alone = m.encoder.infer(&mix.target_features).unwrap();
        assert_eq!(h.representation.slice_rows(0, 2), mix.source_features);
        assert_eq!(h.representation.slice_rows(2, 5), alone);
        assert_eq!(h.domain_labels, vec![0.0, 0.0, 1.0, 1.0, 1.0]);

        let bad = Batch::new(Matrix::zeros(1, 5), vec![0.0], Matrix::zeros(0, 0), vec![]).unwrap();
        assert!(matches!(m.homogeneous(&bad, Mode::Eval), Err(Error::Shape(_))));
    }

    #[test]
    fn zero_heads_give_half() {
        let mut m = model(9);
        m.label_predictor = zero_net(&m.label_predictor);
        m.domain_classifier = zero_net(&m.domain_classifier);
        let b = mixed_batch(10, 3, 3);
        assert!(m.predict_label(&b, Mode::Eval).unwrap().iter().all(|&p| p == 0.5));
        assert!(m.predict_domain(&b, Mode::Eval).unwrap().iter().all(|&p| p == 0.5));
    }

    #[test]
    fn outputs_are_probabilities() {
        let mut m = model(11);
        let b = mixed_batch(12, 8, 8);
        for p in m.predict_label(&b, Mode::Train).unwrap() {
            assert!((0.0..=1.0).contains(&p));
        }
        for p in m.predict_domain(&b, Mode::Eval).unwrap() {
            assert!((0.0..=1.0).contains(&p));
        }
    }

    #[test]
    fn eval_label_row_independent() {
        let mut m = model(13);
        let b = mixed_batch(14, 0, 6);
        let all = m.predict_label(&b, Mode::Eval).unwrap();
        let one = Batch::new(Matrix::zeros(0, 0), vec![], b.target_features.select_rows(&[4]), vec![0.0]).unwrap();
        assert_eq!(m.predict_label(&one, Mode::Eval).unwrap()[0], all[4]);
        assert_eq!(m.predict_target(&b.target_features).unwrap(), all);
    }

    #[test]
    fn domain_classifier_fits_separated_reps() {
        // Source reps around +2 on the first axis, target reps around −2.
        let mut m = model(15);
        let mut rng = seeded(16);
        let noise = he_init(50, 20, 4, &mut rng).unwrap();
        let mut reps = noise.clone();
        for r in 0..20 {
            reps.row_mut(r)[0] += if r < 10 { 2.0 } else { -2.0 };
        }
        let d: Vec<f64> = (0..20).map(|r| if r < 10 { 0.0 } else { 1.0 }).collect();
        // logistic regression by plain gradient descent on the single layer
        for _ in 0..2000 {
            let p = m.domain_classifier.forward(&reps, Mode::Train).unwrap();
            let g = crate::nn::bce_grad(p.as_slice(), &d).unwrap();
            let up = Matrix::from_vec(20, 1, g).unwrap();
            let (grads, _) = m.domain_classifier.backward(&up.scale(1.0)).unwrap();
            for (p, g) in m.domain_classifier.params_mut().into_iter().zip(grads.slices()) {
                for (a, b) in p.iter_mut().zip(g) {
                    *a -= 1.0 * b;
                }
            }
        }
        let b = Batch::new(reps.slice_rows(0, 10), vec![0.0; 10], Matrix::zeros(0, 0), vec![]).unwrap();
        let mut probs = m.domain_classifier.infer(&reps).unwrap().into_vec();
        let loss = crate::nn::bce_loss(&probs, &d).unwrap();
        assert!(loss < 0.01, "loss {loss}");
        probs.truncate(10);
        assert_eq!(m.predict_domain(&b, Mode::Eval).unwrap(), probs);
    }

    #[test]
    fn reconstruct_shapes_and_errors() {
        let mut m = model(17);
        let t = mixed_batch(18, 0, 5);
        assert_eq!(m.reconstruct(&t, Mode::Eval).unwrap().shape(), (5, 3));
        m.decoder = zero_net(&m.decoder);
        assert!(m.reconstruct(&t, Mode::Eval).unwrap().as_slice().iter().all(|v| *v == 0.0));
        let mix = mixed_batch(19, 2, 2);
        assert!(matches!(m.reconstruct(&mix, Mode::Eval), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn identity_autoencoder_reconstructs_exactly() {
        let id = |n: usize| DenseLayer::from_parts(Matrix::identity(n), vec![0.0; n], Activation::Linear, None).unwrap();
        let enc = Mlp::from_layers(vec![id(3), id(3)]).unwrap();
        let dec = Mlp::from_layers(vec![id(3), id(3)]).unwrap();
        let mut rng = seeded(20);
        let lp = classifier(3, &[2], &mut rng).unwrap();
        let dc = Mlp::new(3, &[], 1, Activation::Linear, false, Activation::Sigmoid, &mut rng).unwrap();
        let mut m = TransmeterModel::from_parts(enc, dec, lp, dc, 0.1, 0.1).unwrap();
        let t = mixed_batch(21, 0, 4);
        let xh = m.reconstruct(&t, Mode::Eval).unwrap();
        assert_eq!(xh, t.target_features);
        assert_eq!(crate::nn::mse_recon_loss(&xh, &t.target_features).unwrap(), 0.0);
    }
}
