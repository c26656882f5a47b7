use std::time::Instant;

use rand::seq::SliceRandom;

use super::{
    compute_objective, train_step, EarlyStopping, EpochRecord, ObjectiveBreakdown, OptimizerStates, TrainConfig,
    TrainHistory,
};
use crate::data::{balanced_batches, flip_labels, split_indices, Batch, Dataset};
use crate::error::{Error, Result};
use crate::model::{build_source_model, build_transmeter, SourceModel, TransmeterModel};
use crate::nn::{adam_step, bce_grad, bce_loss, AdamState, Matrix, Mlp, Mode};
use crate::rng::{derive_seed, seeded, tag};
use crate::transfer::evaluate_accuracy;

/// Splits `ds` into fitting and validation rows. Both sides must be usable:
/// at least two fitting rows (batch norm) and one validation row.
fn holdout(ds: &Dataset, fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    let (fit, val) = split_indices(ds.size(), 1.0 - fraction, &mut seeded(seed))?;
    if fit.len() < 2 || val.is_empty() {
        return Err(Error::DegenerateData(format!(
            "`{}` has {} rows, too few for a validation split",
            ds.name(),
            ds.size()
        )));
    }
    Ok((ds.subset(&fit)?, ds.subset(&val)?))
}

/// Trained single-network classifier and its trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierFit {
    pub net: Mlp,
    pub history: TrainHistory,
    /// Validation BCE of the restored epoch.
    pub best_validation_loss: f64,
}

/// Trains a `d → widths → 1` sigmoid classifier with Adam and BCE on
/// shuffled mini-batches of `2·per_domain_batch` rows, early stopping on a
/// held-out `validation_fraction` of `train`. Best-epoch parameters are
/// restored.
pub fn fit_classifier(train: &Dataset, cfg: &TrainConfig, widths: &[usize], seed: u64) -> Result<ClassifierFit> {
    cfg.validate()?;
    if !train.has_both_classes() {
        return Err(Error::DegenerateData(format!("`{}` holds a single class", train.name())));
    }
    let (fit, val) = holdout(train, cfg.validation_fraction, derive_seed(seed, &[tag("holdout")]))?;
    let mut net = build_source_model(train.dim(), widths, &mut seeded(derive_seed(seed, &[tag("init")])))?.net;
    let mut adam = AdamState::new(&net, cfg.adam())?;
    let mut order_rng = seeded(derive_seed(seed, &[tag("batches")]));
    let batch_size = 2 * cfg.per_domain_batch;
    let y_val = val.labels_f64();

    let mut stopper = EarlyStopping::new(cfg.patience)?;
    let mut best = (net.clone(), f64::INFINITY);
    let mut records = Vec::new();
    let mut seconds = Vec::new();
    let mut order: Vec<usize> = (0..fit.size()).collect();
    for epoch in 1..=cfg.max_epochs {
        let started = Instant::now();
        order.shuffle(&mut order_rng);
        let mut chunks: Vec<&[usize]> = order.chunks(batch_size).collect();
        // a trailing single row cannot be batch-normalized; fold it into the previous chunk
        if chunks.len() > 1 && chunks[chunks.len() - 1].len() == 1 {
            chunks.pop();
            let k = chunks.len() - 1;
            chunks[k] = &order[k * batch_size..];
        }
        let mut train_losses = Vec::with_capacity(chunks.len());
        for idx in chunks {
            let part = fit.subset(idx)?;
            let y = part.labels_f64();
            let p = net.forward(part.features(), Mode::Train)?;
            train_losses.push(ObjectiveBreakdown::label_only(bce_loss(p.as_slice(), &y)?));
            let g = bce_grad(p.as_slice(), &y)?;
            let (grads, _) = net.backward(&Matrix::from_vec(g.len(), 1, g)?)?;
            adam_step(&mut net, &grads, &mut adam)?;
        }
        let p_val = net.infer(val.features())?;
        let val_loss = bce_loss(p_val.as_slice(), &y_val)?;
        records.push(EpochRecord {
            epoch,
            train: ObjectiveBreakdown::mean(&train_losses, 0.0, 0.0),
            validation: ObjectiveBreakdown::label_only(val_loss),
            validation_accuracy: evaluate_accuracy(p_val.as_slice(), val.labels())?,
        });
        seconds.push(started.elapsed().as_secs_f64());
        let state = stopper.observe(val_loss);
        if state.improved {
            net.clear_cache();
            best = (net.clone(), val_loss);
        }
        if state.stop {
            break;
        }
    }
    let best_epoch = stopper.best().map_or(0, |b| b.0);
    if best_epoch == 0 {
        return Err(Error::DegenerateData("validation loss was never finite".into()));
    }
    Ok(ClassifierFit {
        net: best.0,
        best_validation_loss: best.1,
        history: TrainHistory {
            records,
            stopped_epoch: stopper.epoch(),
            best_epoch,
            epoch_seconds: seconds,
        },
    })
}

/// Pretrains a source classifier on a normalized training split and reports
/// its accuracy on `test`. The returned model carries no normalization
/// statistics; callers attach the ones they used.
pub fn pretrain_source(train: &Dataset, test: &Dataset, cfg: &TrainConfig) -> Result<(SourceModel, f64)> {
    if test.dim() != train.dim() {
        return Err(Error::shape("source test split width differs from the training split"));
    }
    let fit = fit_classifier(train, cfg, &cfg.arch.predictor_widths, derive_seed(cfg.seed, &[tag("pretrain")]))?;
    let acc = evaluate_accuracy(&fit.net.infer(test.features())?.into_vec(), test.labels())?;
    Ok((
        SourceModel {
            net: fit.net,
            normalization: None,
        },
        acc,
    ))
}

/// Trains the transfer network on normalized source and target training rows.
///
/// With `cfg.flip` the target labels are inverted first. The label predictor
/// starts from `source_model` when `cfg.use_pretrained_init` is set and a
/// model is given; otherwise it is He-initialized with the configured widths.
/// A `validation_fraction` of the target rows, plus as many source rows, is
/// held out; training stops once the validation total loss has risen for
/// `patience` consecutive epochs, and the best epoch's parameters are
/// restored.
pub fn train_transmeter(
    source_train: &Dataset,
    target_train: &Dataset,
    cfg: &TrainConfig,
    source_model: Option<&SourceModel>,
) -> Result<(TransmeterModel, TrainHistory)> {
    cfg.validate()?;
    let flipped;
    let target = if cfg.flip {
        flipped = flip_labels(target_train);
        &flipped
    } else {
        target_train
    };
    if !target.has_both_classes() {
        return Err(Error::DegenerateData(format!("target `{}` holds a single class", target.name())));
    }
    let seed = derive_seed(cfg.seed, &[tag("transmeter")]);
    let (t_fit, t_val) = holdout(target, cfg.validation_fraction, derive_seed(seed, &[tag("target-holdout")]))?;
    let n_src_val = t_val.size().min(source_train.size().saturating_sub(2));
    if n_src_val == 0 {
        return Err(Error::DegenerateData(format!(
            "source `{}` has {} rows, too few to train on",
            source_train.name(),
            source_train.size()
        )));
    }
    let mut src_idx: Vec<usize> = (0..source_train.size()).collect();
    src_idx.shuffle(&mut seeded(derive_seed(seed, &[tag("source-holdout")])));
    let s_val = source_train.subset(&src_idx[..n_src_val])?;
    let s_fit = source_train.subset(&src_idx[n_src_val..])?;
    let val_batch = Batch::from_datasets(Some(&s_val), Some(&t_val))?;

    let init = if cfg.use_pretrained_init { source_model } else { None };
    let mut model = build_transmeter(
        source_train.dim(),
        target.dim(),
        &cfg.arch.encoder_widths,
        init,
        &cfg.arch.predictor_widths,
        cfg.alpha,
        cfg.effective_beta(),
        &mut seeded(derive_seed(seed, &[tag("init")])),
    )?;
    let mut opt = OptimizerStates::new(&model, cfg)?;
    let per_domain = cfg.per_domain_batch.min(s_fit.size()).min(t_fit.size());
    if per_domain < 2 {
        return Err(Error::DegenerateData("fewer than two training rows in a domain".into()));
    }
    let mut batches = balanced_batches(&s_fit, &t_fit, per_domain, seeded(derive_seed(seed, &[tag("batches")])))?;

    let mut stopper = EarlyStopping::new(cfg.patience)?;
    let mut best = model.clone();
    let mut records = Vec::new();
    let mut seconds = Vec::new();
    let beta = cfg.effective_beta();
    for epoch in 1..=cfg.max_epochs {
        let started = Instant::now();
        let mut train_terms = Vec::with_capacity(batches.batches_per_epoch());
        for batch in batches.next_epoch()? {
            train_terms.push(train_step(&mut model, &batch, cfg, &mut opt)?);
        }
        model.clear_cache();
        let validation = compute_objective(&model, &val_batch, cfg)?;
        let p_val = model.predict_target(t_val.features())?;
        records.push(EpochRecord {
            epoch,
            train: ObjectiveBreakdown::mean(&train_terms, cfg.alpha, beta),
            validation,
            validation_accuracy: evaluate_accuracy(&p_val, t_val.labels())?,
        });
        seconds.push(started.elapsed().as_secs_f64());
        let state = stopper.observe(validation.total);
        if state.improved {
            best = model.clone();
        }
        if state.stop {
            break;
        }
    }
    let best_epoch = stopper.best().map_or(0, |b| b.0);
    if best_epoch == 0 {
        return Err(Error::DegenerateData("validation loss was never finite".into()));
    }
    Ok((
        best,
        TrainHistory {
            records,
            stopped_epoch: stopper.epoch(),
            best_epoch,
            epoch_seconds: seconds,
        },
    ))
}
