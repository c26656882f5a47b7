use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{train_transmeter, TrainConfig};
use crate::data::{flip_labels, make_folds, Dataset};
use crate::error::{Error, Result};
use crate::model::SourceModel;
use crate::rng::{derive_seed, seeded, tag};
use crate::transfer::evaluate_accuracy;

pub const DEFAULT_ALPHAS: [f64; 6] = [0.003, 0.01, 0.1, 0.3, 1.0, 10.0];
pub const DEFAULT_BETAS: [f64; 2] = [0.1, 0.5];
pub const DEFAULT_SEEDS: [u64; 5] = [1, 2, 3, 4, 5];

/// The lattice of (α, β, flip, seed) values searched by cross-validation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub alphas: Vec<f64>,
    pub betas: Vec<f64>,
    pub seeds: Vec<u64>,
    pub flips: Vec<bool>,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            alphas: DEFAULT_ALPHAS.to_vec(),
            betas: DEFAULT_BETAS.to_vec(),
            seeds: DEFAULT_SEEDS.to_vec(),
            flips: vec![false, true],
        }
    }
}

impl GridSpec {
    /// One α, one β and two seeds, both flip settings.
    pub fn fast() -> Self {
        Self {
            alphas: vec![0.1],
            betas: vec![0.1],
            seeds: vec![1, 2],
            flips: vec![false, true],
        }
    }

    /// Every combination applied to `base`, in lexicographic
    /// (α, β, flip, seed) order with duplicates removed.
    pub fn configs(&self, base: &TrainConfig) -> Result<Vec<TrainConfig>> {
        let mut alphas = self.alphas.clone();
        let mut betas = self.betas.clone();
        let mut seeds = self.seeds.clone();
        let mut flips = self.flips.clone();
        alphas.sort_by(f64::total_cmp);
        alphas.dedup();
        betas.sort_by(f64::total_cmp);
        betas.dedup();
        seeds.sort_unstable();
        seeds.dedup();
        flips.sort_unstable();
        flips.dedup();
        if alphas.is_empty() || betas.is_empty() || seeds.is_empty() || flips.is_empty() {
            return Err(Error::invalid("hyperparameter grid is empty"));
        }
        let mut out = Vec::with_capacity(alphas.len() * betas.len() * seeds.len() * flips.len());
        for &alpha in &alphas {
            for &beta in &betas {
                for &flip in &flips {
                    for &seed in &seeds {
                        let cfg = TrainConfig {
                            alpha,
                            beta,
                            flip,
                            seed,
                            ..base.clone()
                        };
                        cfg.validate()?;
                        out.push(cfg);
                    }
                }
            }
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridResult {
    pub best: TrainConfig,
    pub cv_score: f64,
    /// Every evaluated config with its mean fold accuracy, in grid order.
    pub table: Vec<(TrainConfig, f64)>,
}

/// Picks the first maximum of `scores`, so ties go to the earlier entry.
pub(crate) fn argmax_first(scores: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, &s) in scores.iter().enumerate() {
        if best.is_none_or(|b| s > scores[b]) {
            best = Some(i);
        }
    }
    best
}

/// `k`-fold cross-validation of every grid config over the target rows.
///
/// Folds are drawn once from `fold_seed` and shared by all configs; the
/// source rows join every fold whole. A config's score is the mean accuracy
/// of the encoder and label predictor on its validation folds, measured
/// against flipped labels when the config flips. Configs run in parallel on
/// the current rayon pool; the winner is the highest score, ties going to the
/// lexicographically smallest (α, β, flip, seed).
pub fn grid_search(
    source_train: &Dataset,
    target_train: &Dataset,
    source_model: Option<&SourceModel>,
    grid: &GridSpec,
    base: &TrainConfig,
    k: usize,
    fold_seed: u64,
) -> Result<GridResult> {
    let configs = grid.configs(base)?;
    if k < 2 {
        return Err(Error::invalid("cross-validation needs k >= 2"));
    }
    let folds = make_folds(target_train, k, &mut seeded(fold_seed))?;
    let tasks: Vec<(usize, usize)> = (0..configs.len()).flat_map(|c| (0..k).map(move |f| (c, f))).collect();
    let fold_scores: Vec<f64> = tasks
        .par_iter()
        .map(|&(c, f)| {
            let cfg = &configs[c];
            let fit = target_train.subset(&folds.training_indices(f))?;
            let val = target_train.subset(&folds.validation_indices(f))?;
            let run_cfg = TrainConfig {
                seed: derive_seed(cfg.seed, &[tag("fold"), f as u64]),
                ..cfg.clone()
            };
            let (model, _) = train_transmeter(source_train, &fit, &run_cfg, source_model)?;
            let val = if cfg.flip { flip_labels(&val) } else { val };
            evaluate_accuracy(&model.predict_target(val.features())?, val.labels())
        })
        .collect::<Result<_>>()?;
    let scores: Vec<f64> = fold_scores.chunks(k).map(|c| c.iter().sum::<f64>() / k as f64).collect();
    let i = argmax_first(&scores).expect("grid is non-empty");
    Ok(GridResult {
        best: configs[i].clone(),
        cv_score: scores[i],
        table: configs.into_iter().zip(scores).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_grid_has_120_configs() {
        let cs = GridSpec::default().configs(&TrainConfig::default()).unwrap();
        assert_eq!(cs.len(), 6 * 2 * 2 * 5);
        assert_eq!(GridSpec::fast().configs(&TrainConfig::default()).unwrap().len(), 4);
        // each (α, β, seed) appears once per flip setting
        for c in &cs {
            let twins = cs
                .iter()
                .filter(|o| o.alpha == c.alpha && o.beta == c.beta && o.seed == c.seed)
                .count();
            assert_eq!(twins, 2);
        }
    }

    #[test]
    fn configs_are_lexicographic() {
        let g = GridSpec {
            alphas: vec![1.0, 0.1],
            betas: vec![0.5, 0.1],
            seeds: vec![2, 1],
            flips: vec![true, false],
        };
        let cs = g.configs(&TrainConfig::default()).unwrap();
        let keys: Vec<(f64, f64, bool, u64)> = cs.iter().map(|c| (c.alpha, c.beta, c.flip, c.seed)).collect();
        let mut sorted = keys.clone();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert_eq!(keys, sorted);
        assert_eq!(keys[0], (0.1, 0.1, false, 1));
    }

    #[test]
    fn empty_grid_is_rejected() {
        let g = GridSpec {
            alphas: vec![],
            ..GridSpec::fast()
        };
        assert!(matches!(g.configs(&TrainConfig::default()), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn ties_go_to_first() {
        assert_eq!(argmax_first(&[0.5, 0.7, 0.7, 0.1]), Some(1));
        assert_eq!(argmax_first(&[0.5, 0.5]), Some(0));
        assert_eq!(argmax_first(&[]), None);
    }
}
