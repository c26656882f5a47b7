use serde::{Deserialize, Serialize};

use super::TrainConfig;
use crate::data::Batch;
use crate::error::{Error, Result};
use crate::model::TransmeterModel;
use crate::nn::{
    adam_step, bce_grad, bce_loss, mse_recon_grad, mse_recon_loss, AdamState, GradientReversal, GradientSet, Matrix,
    Mode,
};

/// The three loss terms and their weighted combination
/// `label − α·domain + β·recon`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ObjectiveBreakdown {
    pub label_loss: f64,
    pub domain_loss: f64,
    pub recon_loss: f64,
    pub total: f64,
}

impl ObjectiveBreakdown {
    pub fn combine(label_loss: f64, domain_loss: f64, recon_loss: f64, alpha: f64, beta: f64) -> Self {
        Self {
            label_loss,
            domain_loss,
            recon_loss,
            total: label_loss - alpha * domain_loss + beta * recon_loss,
        }
    }

    /// Plain classification loss with no domain or reconstruction terms.
    pub fn label_only(label_loss: f64) -> Self {
        Self::combine(label_loss, 0.0, 0.0, 0.0, 0.0)
    }

    /// Term-wise mean, with the total recombined from the averaged terms.
    pub fn mean(items: &[ObjectiveBreakdown], alpha: f64, beta: f64) -> Self {
        if items.is_empty() {
            return Self::default();
        }
        let n = items.len() as f64;
        let avg = |f: fn(&ObjectiveBreakdown) -> f64| items.iter().map(f).sum::<f64>() / n;
        Self::combine(avg(|o| o.label_loss), avg(|o| o.domain_loss), avg(|o| o.recon_loss), alpha, beta)
    }
}

/// One Adam state per parameter block.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerStates {
    pub encoder: AdamState,
    pub decoder: AdamState,
    pub label_predictor: AdamState,
    pub domain_classifier: AdamState,
}

impl OptimizerStates {
    pub fn new(model: &TransmeterModel, cfg: &TrainConfig) -> Result<Self> {
        let a = cfg.adam();
        Ok(Self {
            encoder: AdamState::new(&model.encoder, a)?,
            decoder: AdamState::new(&model.decoder, a)?,
            label_predictor: AdamState::new(&model.label_predictor, a)?,
            domain_classifier: AdamState::new(&model.domain_classifier, a)?,
        })
    }
}

fn column(v: Vec<f64>) -> Matrix {
    let n = v.len();
    Matrix::from_vec(n, 1, v).expect("n x 1 matrix")
}

/// Eval-mode objective of `model` on `batch`. Label and domain terms average
/// over every row; the reconstruction term averages over target rows and is
/// zero when the batch has none.
pub fn compute_objective(model: &TransmeterModel, batch: &Batch, cfg: &TrainConfig) -> Result<ObjectiveBreakdown> {
    if batch.is_empty() {
        return Err(Error::invalid("objective of an empty batch"));
    }
    check_widths(model, batch)?;
    let encoded = if batch.n_target() > 0 {
        model.encoder.infer(&batch.target_features)?
    } else {
        Matrix::zeros(0, model.d_s())
    };
    let ho = batch.source_features.vstack(&encoded)?;
    let y_hat = model.label_predictor.infer(&ho)?;
    let d_hat = model.domain_classifier.infer(&ho)?;
    let label = bce_loss(y_hat.as_slice(), &batch.labels())?;
    let domain = bce_loss(d_hat.as_slice(), &batch.domain_labels())?;
    let recon = if batch.n_target() > 0 {
        mse_recon_loss(&model.decoder.infer(&encoded)?, &batch.target_features)?
    } else {
        0.0
    };
    Ok(ObjectiveBreakdown::combine(label, domain, recon, cfg.alpha, cfg.effective_beta()))
}

fn check_widths(model: &TransmeterModel, batch: &Batch) -> Result<()> {
    if batch.n_source() > 0 && batch.source_features.cols() != model.d_s() {
        return Err(Error::shape(format!(
            "source rows have {} features, model expects {}",
            batch.source_features.cols(),
            model.d_s()
        )));
    }
    if batch.n_target() > 0 && batch.target_features.cols() != model.d_t() {
        return Err(Error::shape(format!(
            "target rows have {} features, model expects {}",
            batch.target_features.cols(),
            model.d_t()
        )));
    }
    Ok(())
}

/// Per-block gradients of one train-mode forward/backward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelGradients {
    /// Label gradient, plus the domain gradient reversed and scaled by `α`,
    /// plus `β` times the reconstruction gradient. `None` without target rows.
    pub encoder: Option<GradientSet>,
    /// `β` times the reconstruction gradient. `None` when reconstruction is
    /// off or the batch has no target rows.
    pub decoder: Option<GradientSet>,
    pub label_predictor: GradientSet,
    /// Gradient of the domain classifier's own BCE.
    pub domain_classifier: GradientSet,
}

/// Train-mode forward and backward pass without touching the parameters.
///
/// The homogeneous representation is built once and shared by the three
/// heads. With reconstruction switched off the decoder is not run; the
/// returned recon term is then an eval-mode reading with zero weight.
pub fn objective_gradients(
    model: &mut TransmeterModel,
    batch: &Batch,
    cfg: &TrainConfig,
) -> Result<(ObjectiveBreakdown, ModelGradients)> {
    if batch.is_empty() {
        return Err(Error::invalid("training step on an empty batch"));
    }
    check_widths(model, batch)?;
    let n_s = batch.n_source();
    let n_t = batch.n_target();
    let beta = cfg.effective_beta();
    let grl = GradientReversal::new(cfg.alpha)?;

    let encoded = if n_t > 0 {
        model.encoder.forward(&batch.target_features, Mode::Train)?
    } else {
        Matrix::zeros(0, model.d_s())
    };
    let ho = batch.source_features.vstack(&encoded)?;
    let y_hat = model.label_predictor.forward(&ho, Mode::Train)?;
    let d_hat = model.domain_classifier.forward(&grl.forward(&ho), Mode::Train)?;
    let x_hat = if cfg.use_reconstruction && n_t > 0 {
        Some(model.decoder.forward(&encoded, Mode::Train)?)
    } else {
        None
    };

    let labels = batch.labels();
    let domains = batch.domain_labels();
    let label = bce_loss(y_hat.as_slice(), &labels)?;
    let domain = bce_loss(d_hat.as_slice(), &domains)?;
    let recon = match (&x_hat, n_t) {
        (Some(xh), _) => mse_recon_loss(xh, &batch.target_features)?,
        (None, 0) => 0.0,
        (None, _) => mse_recon_loss(&model.decoder.infer(&encoded)?, &batch.target_features)?,
    };

    let (g_lp, d_ho_label) = model
        .label_predictor
        .backward(&column(bce_grad(y_hat.as_slice(), &labels)?))?;
    let (g_dc, d_ho_domain) = model
        .domain_classifier
        .backward(&column(bce_grad(d_hat.as_slice(), &domains)?))?;

    let mut g_de = None;
    let mut g_en = None;
    if n_t > 0 {
        let mut d_enc = d_ho_label.slice_rows(n_s, n_s + n_t);
        d_enc.add_assign(&grl.backward(&d_ho_domain).slice_rows(n_s, n_s + n_t))?;
        if let Some(xh) = &x_hat {
            let up = mse_recon_grad(xh, &batch.target_features)?.scale(beta);
            let (g, d_enc_recon) = model.decoder.backward(&up)?;
            d_enc.add_assign(&d_enc_recon)?;
            g_de = Some(g);
        }
        g_en = Some(model.encoder.backward(&d_enc)?.0);
    }
    Ok((
        ObjectiveBreakdown::combine(label, domain, recon, cfg.alpha, beta),
        ModelGradients {
            encoder: g_en,
            decoder: g_de,
            label_predictor: g_lp,
            domain_classifier: g_dc,
        },
    ))
}

/// One adversarial update on a train-mode batch: [`objective_gradients`]
/// followed by an Adam step on every block that received a gradient.
pub fn train_step(
    model: &mut TransmeterModel,
    batch: &Batch,
    cfg: &TrainConfig,
    opt: &mut OptimizerStates,
) -> Result<ObjectiveBreakdown> {
    let (objective, g) = objective_gradients(model, batch, cfg)?;
    if let Some(g) = &g.encoder {
        adam_step(&mut model.encoder, g, &mut opt.encoder)?;
    }
    adam_step(&mut model.label_predictor, &g.label_predictor, &mut opt.label_predictor)?;
    adam_step(&mut model.domain_classifier, &g.domain_classifier, &mut opt.domain_classifier)?;
    if let Some(g) = &g.decoder {
        adam_step(&mut model.decoder, g, &mut opt.decoder)?;
    }
    Ok(objective)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::build_transmeter;
    use crate::nn::{he_init, Mlp};
    use crate::rng::seeded;

    fn zero(net: &mut Mlp) {
        for p in net.params_mut() {
            p.iter_mut().for_each(|v| *v = 0.0);
        }
    }

    fn setup(seed: u64, alpha: f64, beta: f64) -> (TransmeterModel, Batch, TrainConfig) {
        let mut rng = seeded(seed);
        let m = build_transmeter(4, 3, &[6, 5], None, &[5, 4], alpha, beta, &mut rng).unwrap();
        let s = he_init(1, 6, 4, &mut rng).unwrap();
        let t = he_init(1, 6, 3, &mut rng).unwrap();
        let b = Batch::new(
            s,
            vec![1.0, 0.0, 1.0, 0.0, 1.0, 1.0],
            t,
            vec![0.0, 1.0, 1.0, 0.0, 0.0, 1.0],
        )
        .unwrap();
        let cfg = TrainConfig {
            alpha,
            beta,
            ..TrainConfig::default()
        };
        (m, b, cfg)
    }

    #[test]
    fn zero_weights_hand_evaluation() {
        let (mut m, _, _) = setup(1, 0.3, 0.5);
        zero(&mut m.label_predictor);
        zero(&mut m.domain_classifier);
        zero(&mut m.decoder);
        let b = Batch::new(
            Matrix::from_rows(&[[0.5, -1.0, 2.0, 0.0]]).unwrap(),
            vec![1.0],
            Matrix::from_rows(&[[1.0, -2.0, 0.5]]).unwrap(),
            vec![0.0],
        )
        .unwrap();
        let cfg = TrainConfig {
            alpha: 0.3,
            beta: 0.5,
            ..TrainConfig::default()
        };
        let o = compute_objective(&m, &b, &cfg).unwrap();
        let ln2 = std::f64::consts::LN_2;
        let norm2 = 1.0 + 4.0 + 0.25;
        assert!((o.label_loss - ln2).abs() < 1e-15);
        assert!((o.domain_loss - ln2).abs() < 1e-15);
        assert_eq!(o.recon_loss, norm2);
        assert!((o.total - (ln2 - 0.3 * ln2 + 0.5 * norm2)).abs() < 1e-12);
    }

    #[test]
    fn zero_weights_give_label_only_total() {
        let (m, b, cfg) = setup(2, 0.0, 0.0);
        let o = compute_objective(&m, &b, &cfg).unwrap();
        assert_eq!(o.total, o.label_loss);
    }

    #[test]
    fn beta_is_linear() {
        let (m, b, cfg) = setup(3, 0.3, 0.1);
        let o1 = compute_objective(&m, &b, &cfg).unwrap();
        let cfg2 = TrainConfig { beta: 0.2, ..cfg };
        let o2 = compute_objective(&m, &b, &cfg2).unwrap();
        assert!((o2.total - o1.total - o1.recon_loss * 0.1).abs() < 1e-12);
        let cfg3 = TrainConfig {
            beta: 0.2,
            use_reconstruction: false,
            ..cfg2
        };
        let o3 = compute_objective(&m, &b, &cfg3).unwrap();
        assert_eq!(o3.total, o3.label_loss - 0.3 * o3.domain_loss);
    }

    #[test]
    fn empty_and_mismatched_batches() {
        let (m, _, cfg) = setup(4, 0.1, 0.1);
        let empty = Batch::new(Matrix::zeros(0, 0), vec![], Matrix::zeros(0, 0), vec![]).unwrap();
        assert!(matches!(compute_objective(&m, &empty, &cfg), Err(Error::InvalidArgument(_))));
        let wide = Batch::new(Matrix::zeros(2, 9), vec![0.0, 1.0], Matrix::zeros(0, 0), vec![]).unwrap();
        assert!(matches!(compute_objective(&m, &wide, &cfg), Err(Error::Shape(_))));
    }

    #[test]
    fn step_is_deterministic() {
        let (m, b, cfg) = setup(5, 0.3, 0.1);
        let run = || {
            let mut m = m.clone();
            let mut opt = OptimizerStates::new(&m, &cfg).unwrap();
            let o = train_step(&mut m, &b, &cfg, &mut opt).unwrap();
            m.clear_cache();
            (m, o, opt)
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn reported_total_matches_terms() {
        let (mut m, b, cfg) = setup(6, 0.3, 0.5);
        let mut opt = OptimizerStates::new(&m, &cfg).unwrap();
        for _ in 0..5 {
            let o = train_step(&mut m, &b, &cfg, &mut opt).unwrap();
            assert!((o.total - (o.label_loss - 0.3 * o.domain_loss + 0.5 * o.recon_loss)).abs() < 1e-12);
        }
    }

    #[test]
    fn decoder_frozen_without_reconstruction() {
        let (mut m, b, mut cfg) = setup(7, 0.3, 0.5);
        cfg.use_reconstruction = false;
        let before = m.decoder.clone();
        let enc_before = m.encoder.flat_params();
        let mut opt = OptimizerStates::new(&m, &cfg).unwrap();
        for _ in 0..5 {
            train_step(&mut m, &b, &cfg, &mut opt).unwrap();
        }
        assert_eq!(m.decoder, before);
        assert_ne!(m.encoder.flat_params(), enc_before);
    }

    #[test]
    fn domain_head_descends_when_alone() {
        // Only the domain classifier moves: its full-batch loss must drop.
        let (mut m, b, cfg) = setup(8, 0.3, 0.1);
        let frozen = TrainConfig { lr: 1e-2, ..cfg };
        let mut opt = OptimizerStates::new(&m, &frozen).unwrap();
        let before = compute_objective(&m, &b, &frozen).unwrap().domain_loss;
        let (enc, dec, lp) = (m.encoder.clone(), m.decoder.clone(), m.label_predictor.clone());
        train_step(&mut m, &b, &frozen, &mut opt).unwrap();
        m.encoder = enc;
        m.decoder = dec;
        m.label_predictor = lp;
        let after = compute_objective(&m, &b, &frozen).unwrap().domain_loss;
        assert!(after < before, "{after} !< {before}");
    }
}
