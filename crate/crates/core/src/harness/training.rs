//! SGD training with validation-based early stopping.

use std::io::Write;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use super::data::Splits;
use super::derive_seed;
use crate::error::Result;
use crate::nn::{initialize, mean_loss, Backprop, Model, Real};
use crate::sampling::rng_from_seed;

/// Minimum drop in validation loss that counts as an improvement.
pub const MIN_IMPROVEMENT: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopDecision {
    Improved,
    Continue,
    Stop,
}

/// Tracks the best validation loss and stops once `patience` iterations have
/// passed without a drop of more than [`MIN_IMPROVEMENT`].
#[derive(Debug, Clone)]
pub struct EarlyStopping {
    patience: usize,
    best_loss: f64,
    best_iter: usize,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        EarlyStopping {
            patience,
            best_loss: f64::INFINITY,
            best_iter: 0,
        }
    }

    pub fn best_loss(&self) -> f64 {
        self.best_loss
    }

    pub fn best_iter(&self) -> usize {
        self.best_iter
    }

    pub fn observe(&mut self, iter: usize, loss: f64) -> StopDecision {
        if loss < self.best_loss - MIN_IMPROVEMENT {
            self.best_loss = loss;
            self.best_iter = iter;
            StopDecision::Improved
        } else if iter - self.best_iter >= self.patience {
            StopDecision::Stop
        } else {
            StopDecision::Continue
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogRow {
    pub iter: usize,
    /// Mean training batch loss since the previous row.
    pub train_loss: f64,
    pub val_loss: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StopReason {
    MaxIters,
    Patience,
    Diverged,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingLog {
    pub rows: Vec<LogRow>,
    pub stopped_at: usize,
    pub best_iter: usize,
    pub best_val_loss: f64,
    pub reason: StopReason,
}

impl TrainingLog {
    pub fn diverged(&self) -> bool {
        self.reason == StopReason::Diverged
    }

    /// CSV with header `iter,train_loss,val_loss`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["iter", "train_loss", "val_loss"])?;
        for r in &self.rows {
            w.write_record([r.iter.to_string(), r.train_loss.to_string(), r.val_loss.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct TrainedModel<F> {
    /// Checkpoint with the lowest validation loss seen.
    pub model: Model<F>,
    pub initial: Model<F>,
    pub log: TrainingLog,
}

/// Trains one model on `data.train`, validating on `data.val`.
pub fn run_training<F: Real>(cfg: &ExperimentConfig, seed: u64, data: &Splits) -> Result<TrainedModel<F>> {
    cfg.validate()?;
    let initial: Model<F> = initialize(
        cfg.cell,
        cfg.hidden(),
        cfg.grammar.alphabet_size(),
        cfg.init,
        derive_seed(seed, "init"),
    )?;
    let mut model = initial.clone();
    let mut best = model.clone();
    let mut bp = Backprop::new(&model);
    let mut rng = rng_from_seed(derive_seed(seed, "batches"));
    let mut order: Vec<usize> = (0..data.train.len()).collect();
    order.shuffle(&mut rng);
    let mut cursor = 0;
    let mut batch = Vec::with_capacity(cfg.batch_size);
    let lr = F::from_f64(cfg.lr);

    let mut stopper = EarlyStopping::new(cfg.patience_iters);
    let mut rows = Vec::new();
    let mut window_loss = 0.0;
    let mut window_len = 0usize;
    let mut reason = StopReason::MaxIters;
    let mut stopped_at = cfg.max_iters;

    for iter in 1..=cfg.max_iters {
        batch.clear();
        for _ in 0..cfg.batch_size.min(order.len()) {
            if cursor == order.len() {
                order.shuffle(&mut rng);
                cursor = 0;
            }
            batch.push(&data.train[order[cursor]]);
            cursor += 1;
        }
        let loss = bp.batch(&model, batch.iter().copied(), cfg.freeze)?;
        if !loss.is_finite() {
            reason = StopReason::Diverged;
            stopped_at = iter;
            break;
        }
        model.sgd_step(&bp.grads, lr, cfg.freeze);
        if !model.is_finite() {
            reason = StopReason::Diverged;
            stopped_at = iter;
            break;
        }
        window_loss += loss;
        window_len += 1;

        if iter % cfg.val_every == 0 {
            let val_loss = mean_loss(&model, &data.val)?;
            rows.push(LogRow {
                iter,
                train_loss: window_loss / window_len as f64,
                val_loss,
            });
            window_loss = 0.0;
            window_len = 0;
            if !val_loss.is_finite() {
                reason = StopReason::Diverged;
                stopped_at = iter;
                break;
            }
            match stopper.observe(iter, val_loss) {
                StopDecision::Improved => best = model.clone(),
                StopDecision::Continue => {}
                StopDecision::Stop => {
                    reason = StopReason::Patience;
                    stopped_at = iter;
                    break;
                }
            }
        }
    }

    // no validation ever ran: the final weights are the only candidate
    if rows.is_empty() && reason != StopReason::Diverged {
        best = model;
    }
    Ok(TrainedModel {
        model: best,
        initial,
        log: TrainingLog {
            rows,
            stopped_at,
            best_iter: stopper.best_iter(),
            best_val_loss: stopper.best_loss(),
            reason,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn patience_on_synthetic_trace() {
        let mut es = EarlyStopping::new(7000);
        let mut stop = None;
        for iter in (100..=100_000).step_by(100) {
            // first reading at 100 is the best one, flat afterwards
            if es.observe(iter, 0.5) == StopDecision::Stop {
                stop = Some(iter);
                break;
            }
        }
        assert_eq!(stop, Some(7100));
        assert_eq!(es.best_iter(), 100);
    }

    #[test]
    fn tiny_improvements_do_not_count() {
        let mut es = EarlyStopping::new(300);
        assert_eq!(es.observe(100, 1.0), StopDecision::Improved);
        assert_eq!(es.observe(200, 1.0 - 5e-7), StopDecision::Continue);
        assert_eq!(es.observe(300, 0.9), StopDecision::Improved);
        assert_eq!(es.observe(400, 0.95), StopDecision::Continue);
        assert_eq!(es.observe(500, 0.9), StopDecision::Continue);
        assert_eq!(es.observe(600, 0.9), StopDecision::Stop);
    }

    #[test]
    fn never_stops_early_on_improving_trace() {
        let mut es = EarlyStopping::new(700);
        for (i, iter) in (100..=5000).step_by(100).enumerate() {
            assert_eq!(es.observe(iter, 1.0 / (i + 1) as f64), StopDecision::Improved);
        }
    }
}
