use serde::{Deserialize, Serialize};

use super::ObjectiveBreakdown;
use crate::error::{Error, Result};

/// Stops once the monitored loss has risen `patience` epochs in a row.
/// Epochs are numbered from 1; the best epoch is the first one reaching the
/// minimum loss.
#[derive(Debug, Clone, PartialEq)]
pub struct EarlyStopping {
    patience: usize,
    epoch: usize,
    previous: Option<f64>,
    rising: usize,
    best: Option<(usize, f64)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StopState {
    pub improved: bool,
    pub stop: bool,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Result<Self> {
        if patience == 0 {
            return Err(Error::invalid("patience must be >= 1"));
        }
        Ok(Self {
            patience,
            epoch: 0,
            previous: None,
            rising: 0,
            best: None,
        })
    }

    /// Records the loss of the next epoch. A non-finite loss counts as a rise
    /// and never becomes the best.
    pub fn observe(&mut self, loss: f64) -> StopState {
        self.epoch += 1;
        let rose = match self.previous {
            _ if !loss.is_finite() => true,
            Some(prev) => loss > prev,
            None => false,
        };
        self.rising = if rose { self.rising + 1 } else { 0 };
        self.previous = Some(loss);
        let improved = loss.is_finite() && self.best.is_none_or(|(_, b)| loss < b);
        if improved {
            self.best = Some((self.epoch, loss));
        }
        StopState {
            improved,
            stop: self.rising >= self.patience,
        }
    }

    pub fn epoch(&self) -> usize {
        self.epoch
    }

    /// `(epoch, loss)` of the best epoch so far.
    pub fn best(&self) -> Option<(usize, f64)> {
        self.best
    }
}

/// Runs the stopping rule over a fixed loss sequence, truncated at
/// `max_epochs`. Returns `(stopped_epoch, best_epoch)`.
pub fn simulate_stopping(losses: &[f64], patience: usize, max_epochs: usize) -> Result<(usize, usize)> {
    if max_epochs == 0 {
        return Err(Error::invalid("max_epochs must be >= 1"));
    }
    let mut es = EarlyStopping::new(patience)?;
    for &l in losses.iter().take(max_epochs) {
        if es.observe(l).stop {
            break;
        }
    }
    let best = es.best().map_or(0, |b| b.0);
    Ok((es.epoch(), best))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train: ObjectiveBreakdown,
    pub validation: ObjectiveBreakdown,
    pub validation_accuracy: f64,
}

/// Per-epoch trajectory of a run. Wall-clock durations are kept apart from
/// the records so that two runs can be compared for exact equality.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub records: Vec<EpochRecord>,
    pub stopped_epoch: usize,
    pub best_epoch: usize,
    #[serde(skip)]
    pub epoch_seconds: Vec<f64>,
}

impl TrainHistory {
    pub fn best_record(&self) -> Option<&EpochRecord> {
        self.records.get(self.best_epoch.checked_sub(1)?)
    }

    pub fn validation_losses(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.validation.total).collect()
    }

    /// Same records and stopping point, ignoring timings.
    pub fn same_trajectory(&self, other: &TrainHistory) -> bool {
        self.records == other.records
            && self.stopped_epoch == other.stopped_epoch
            && self.best_epoch == other.best_epoch
    }
}
