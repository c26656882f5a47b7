//! Baseline and transfer accuracies, the transferability score, source
//! ranking and ablation variants.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::data::{flip_labels, split, znormalize, Dataset, NormStats};
use crate::error::{Error, Result};
use crate::model::{SourceModel, TransmeterModel};
use crate::rng::{derive_seed, seeded, tag};
use crate::train::{fit_classifier, grid_search, pretrain_source, train_transmeter, GridSpec, TrainConfig, TrainHistory};

/// Fraction of rows whose thresholded prediction (`p ≥ 0.5` means class 1)
/// equals the label.
pub fn evaluate_accuracy(predictions: &[f64], labels: &[u8]) -> Result<f64> {
    if predictions.is_empty() {
        return Err(Error::invalid("accuracy of an empty prediction set"));
    }
    if predictions.len() != labels.len() {
        return Err(Error::shape(format!(
            "{} predictions for {} labels",
            predictions.len(),
            labels.len()
        )));
    }
    let hits = predictions
        .iter()
        .zip(labels)
        .filter(|(&p, &y)| u8::from(p >= 0.5) == y)
        .count();
    Ok(hits as f64 / predictions.len() as f64)
}

/// Scores are reported on a 1e-10 grid, which absorbs the binary rounding
/// of decimal inputs such as 0.77 and 0.70.
const SCORE_RESOLUTION: f64 = 1e10;

/// Relative accuracy gain in percent, `(acc_T − acc_0) / acc_0 · 100`,
/// rounded to ten decimal places. Negative values signal negative transfer.
pub fn transferability(acc_t: f64, acc_0: f64) -> Result<f64> {
    if !acc_t.is_finite() || !acc_0.is_finite() || acc_0 < 0.0 {
        return Err(Error::invalid(format!("accuracies must be finite and non-negative, got {acc_t} and {acc_0}")));
    }
    if acc_0 == 0.0 {
        return Err(Error::UndefinedScore { acc_0 });
    }
    let raw = (acc_t - acc_0) / acc_0 * 100.0;
    Ok((raw * SCORE_RESOLUTION).round() / SCORE_RESOLUTION)
}

/// Target-only reference accuracy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Baseline {
    pub acc_0: f64,
    /// Seed whose run reached the lowest validation loss.
    pub seed: u64,
    pub best_validation_loss: f64,
}

/// Trains a classifier with the label-predictor widths on target rows only,
/// once per seed, keeps the run with the lowest validation loss (earliest
/// seed on ties) and returns its accuracy on `target_test`.
pub fn train_baseline(target_train: &Dataset, target_test: &Dataset, cfg: &TrainConfig, seeds: &[u64]) -> Result<Baseline> {
    if seeds.is_empty() {
        return Err(Error::invalid("baseline needs at least one seed"));
    }
    if target_test.dim() != target_train.dim() {
        return Err(Error::shape("target test split width differs from the training split"));
    }
    let mut best: Option<(u64, f64, Vec<f64>)> = None;
    for &seed in seeds {
        let run_cfg = TrainConfig { seed, ..cfg.clone() };
        let fit = fit_classifier(target_train, &run_cfg, &cfg.arch.predictor_widths, derive_seed(seed, &[tag("baseline")]))?;
        if best.as_ref().is_none_or(|b| fit.best_validation_loss < b.1) {
            let p = fit.net.infer(target_test.features())?.into_vec();
            best = Some((seed, fit.best_validation_loss, p));
        }
    }
    let (seed, loss, p) = best.expect("seeds is non-empty");
    Ok(Baseline {
        acc_0: evaluate_accuracy(&p, target_test.labels())?,
        seed,
        best_validation_loss: loss,
    })
}

/// Settings shared by every pair measured in one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Protocol {
    /// Training fraction of each dataset's train/test split.
    pub split: f64,
    pub folds: usize,
    /// Seeds the data splits and the fold plan.
    pub split_seed: u64,
    pub base: TrainConfig,
    pub grid: GridSpec,
    #[serde(default)]
    pub record_wall_time: bool,
}

impl Default for Protocol {
    fn default() -> Self {
        Self {
            split: 0.7,
            folds: 3,
            split_seed: 0,
            base: TrainConfig::default(),
            grid: GridSpec::default(),
            record_wall_time: false,
        }
    }
}

impl Protocol {
    fn split_rng(&self, name: &str) -> crate::rng::Rng {
        seeded(derive_seed(self.split_seed, &[tag("split"), tag(name)]))
    }

    /// Splits `raw` and z-normalizes both parts with training statistics.
    pub fn prepare_target(&self, raw: &Dataset) -> Result<PreparedTarget> {
        let (train, test) = split(raw, self.split, &mut self.split_rng(raw.name()))?;
        let (train, mut rest, stats) = znormalize(&train, &[test])?;
        Ok(PreparedTarget {
            train,
            test: rest.remove(0),
            stats,
        })
    }

    /// Training split of a source dataset, normalized with the statistics
    /// stored in `model` (or fitted on the split when the model has none).
    pub fn prepare_source(&self, raw: &Dataset, model: &SourceModel) -> Result<Dataset> {
        if model.input_dim() != raw.dim() {
            return Err(Error::shape(format!(
                "source model for `{}` takes {} features but the data has {}",
                raw.name(),
                model.input_dim(),
                raw.dim()
            )));
        }
        let (train, _) = split(raw, self.split, &mut self.split_rng(raw.name()))?;
        match &model.normalization {
            Some(stats) => stats.apply(&train),
            None => Ok(NormStats::fit(&train).apply(&train)?),
        }
    }

    /// Pretrains a source classifier on the same split `prepare_source` uses
    /// and attaches the normalization statistics. Returns the held-out accuracy.
    pub fn pretrain(&self, raw: &Dataset, seed: u64) -> Result<(SourceModel, f64)> {
        let (train, test) = split(raw, self.split, &mut self.split_rng(raw.name()))?;
        let (train, rest, stats) = znormalize(&train, &[test])?;
        let cfg = TrainConfig {
            seed,
            ..self.base.clone()
        };
        let (mut model, acc) = pretrain_source(&train, &rest[0], &cfg)?;
        model.normalization = Some(stats);
        Ok((model, acc))
    }

    pub fn baseline(&self, target: &PreparedTarget) -> Result<Baseline> {
        train_baseline(&target.train, &target.test, &self.base, &self.grid.seeds)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PreparedTarget {
    pub train: Dataset,
    pub test: Dataset,
    pub stats: NormStats,
}

/// Outcome of measuring one source against one target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferReport {
    pub source: String,
    pub target: String,
    pub acc_0: f64,
    pub acc_t: f64,
    pub transferability: f64,
    pub chosen_config: TrainConfig,
    pub flip_used: bool,
    pub cv_score: f64,
    pub stopped_epoch: usize,
    pub best_epoch: usize,
    pub baseline_seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wall_time_seconds: Option<f64>,
}

/// Grid search, a final retrain with the winning config on the full target
/// training split, and the transfer accuracy on the target test split
/// (against flipped labels when the winner flips).
pub fn measure_pair(
    source_raw: &Dataset,
    source_model: &SourceModel,
    target_raw: &Dataset,
    target: &PreparedTarget,
    baseline: &Baseline,
    protocol: &Protocol,
) -> Result<TransferReport> {
    measure_pair_detailed(source_raw, source_model, target_raw, target, baseline, protocol).map(|o| o.report)
}

/// A report together with the retrained model and its training history.
#[derive(Debug, Clone)]
pub struct PairOutcome {
    pub report: TransferReport,
    pub model: TransmeterModel,
    pub history: TrainHistory,
}

/// [`measure_pair`], keeping the final model and history.
pub fn measure_pair_detailed(
    source_raw: &Dataset,
    source_model: &SourceModel,
    target_raw: &Dataset,
    target: &PreparedTarget,
    baseline: &Baseline,
    protocol: &Protocol,
) -> Result<PairOutcome> {
    let started = Instant::now();
    let source = protocol.prepare_source(source_raw, source_model)?;
    let fold_seed = derive_seed(protocol.split_seed, &[tag("folds"), tag(target_raw.name())]);
    let grid = grid_search(
        &source,
        &target.train,
        Some(source_model),
        &protocol.grid,
        &protocol.base,
        protocol.folds,
        fold_seed,
    )?;
    let best = grid.best;
    let (model, history) = train_transmeter(&source, &target.train, &best, Some(source_model))?;
    let test = if best.flip {
        flip_labels(&target.test)
    } else {
        target.test.clone()
    };
    let acc_t = evaluate_accuracy(&model.predict_target(test.features())?, test.labels())?;
    let report = TransferReport {
        source: source_raw.name().to_owned(),
        target: target_raw.name().to_owned(),
        acc_0: baseline.acc_0,
        acc_t,
        transferability: transferability(acc_t, baseline.acc_0)?,
        flip_used: best.flip,
        chosen_config: best,
        cv_score: grid.cv_score,
        stopped_epoch: history.stopped_epoch,
        best_epoch: history.best_epoch,
        baseline_seed: baseline.seed,
        wall_time_seconds: protocol.record_wall_time.then(|| started.elapsed().as_secs_f64()),
    };
    Ok(PairOutcome { report, model, history })
}

/// One JSON object per line.
pub fn reports_to_jsonl(reports: &[TransferReport]) -> Result<String> {
    let mut out = String::new();
    for r in reports {
        out.push_str(&serde_json::to_string(r)?);
        out.push('\n');
    }
    Ok(out)
}

pub fn reports_from_jsonl(text: &str) -> Result<Vec<TransferReport>> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| Ok(serde_json::from_str(l)?))
        .collect()
}

/// Comma-separated summary, one row per report.
pub fn summary_csv(reports: &[TransferReport]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "source",
        "target",
        "acc_0",
        "acc_T",
        "transferability",
        "flip",
        "alpha",
        "beta",
        "seed",
        "wall_time",
    ])?;
    for r in reports {
        w.write_record([
            r.source.clone(),
            r.target.clone(),
            r.acc_0.to_string(),
            r.acc_t.to_string(),
            r.transferability.to_string(),
            r.flip_used.to_string(),
            r.chosen_config.alpha.to_string(),
            r.chosen_config.beta.to_string(),
            r.chosen_config.seed.to_string(),
            r.wall_time_seconds.map(|t| format!("{t:.3}")).unwrap_or_default(),
        ])?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankEntry {
    pub source: String,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ranking {
    /// All sources, best first; equal scores ordered by name.
    pub entries: Vec<RankEntry>,
    pub k: usize,
    /// Top `k` plus every source tied with the `k`-th score.
    pub selected: Vec<String>,
}

impl Ranking {
    /// Whether ties pushed the selection beyond `k`.
    pub fn expanded(&self) -> bool {
        self.selected.len() > self.k
    }
}

pub fn rank_sources(reports: &[TransferReport], k: usize) -> Result<Ranking> {
    if k < 1 {
        return Err(Error::invalid("k must be >= 1"));
    }
    if reports.is_empty() {
        return Err(Error::invalid("nothing to rank"));
    }
    let mut entries: Vec<RankEntry> = reports
        .iter()
        .map(|r| RankEntry {
            source: r.source.clone(),
            score: r.transferability,
        })
        .collect();
    entries.sort_by(|a, b| b.score.total_cmp(&a.score).then_with(|| a.source.cmp(&b.source)));
    let cutoff = entries[k.min(entries.len()) - 1].score;
    let selected = entries
        .iter()
        .take_while(|e| e.score >= cutoff)
        .map(|e| e.source.clone())
        .collect();
    Ok(Ranking { entries, k, selected })
}

/// Model variants compared in the ablation study.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Full,
    /// Label predictor He-initialized instead of copied from the source model.
    NoPretrain,
    /// Reconstruction loss and decoder switched off.
    NoRecon,
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(Variant::Full),
            "no_pretrain" | "-S" => Ok(Variant::NoPretrain),
            "no_recon" | "-R" => Ok(Variant::NoRecon),
            other => Err(Error::invalid(format!(
                "unknown variant `{other}` (expected full, no_pretrain or no_recon)"
            ))),
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Variant::Full => "full",
            Variant::NoPretrain => "no_pretrain",
            Variant::NoRecon => "no_recon",
        })
    }
}

pub fn ablation_config(base: &TrainConfig, variant: Variant) -> TrainConfig {
    match variant {
        Variant::Full => base.clone(),
        Variant::NoPretrain => TrainConfig {
            use_pretrained_init: false,
            ..base.clone()
        },
        Variant::NoRecon => TrainConfig {
            use_reconstruction: false,
            ..base.clone()
        },
    }
}
