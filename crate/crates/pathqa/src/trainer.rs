//! Epoch loop with dev-accuracy model selection and early stopping.

use pathqa_core::autograd::AdamState;
use pathqa_core::embedding::EmbeddingTable;
use pathqa_core::rng::Rng;
use pathqa_core::scorer::Model;
use pathqa_core::train::{train_step, Prepared};
use serde::{Deserialize, Serialize};

use crate::config::TrainConfig;
use crate::error::Result;
use crate::evaluate::evaluate;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    /// 0 is the initial model, before any step.
    pub epoch: usize,
    /// Mean over the epoch's batches; `None` for epoch 0.
    pub train_loss: Option<f64>,
    pub steps: usize,
    pub dev_accuracy: Option<f64>,
    pub dev_loss: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Best model on dev, or the last model when there is no dev set.
    pub best: Model,
    pub best_epoch: usize,
    pub best_dev_accuracy: Option<f64>,
    pub history: Vec<EpochRecord>,
    /// Set when training stopped on a non-finite loss or gradient. `best`
    /// still holds the last model selected before the failure.
    pub aborted: Option<String>,
}

/// Trains from a fresh initialisation seeded by `config.seed`.
///
/// `on_improve` is called with every new best model (including the initial
/// one), so callers can write checkpoints as training goes.
pub fn train(
    config: &TrainConfig,
    table: &EmbeddingTable,
    train: &[Prepared],
    dev: &[Prepared],
    mut on_improve: impl FnMut(&Model, &EpochRecord) -> Result<()>,
) -> Result<TrainOutcome> {
    config.validate()?;
    if !train.iter().any(Prepared::trainable) {
        return Err(pathqa_core::Error::NothingToTrain.into());
    }
    let mut model = Model::new(config.model, config.seed)?;
    let mut adam = AdamState::new(&model.store);
    let mut shuffle_rng = Rng::derived(config.seed, "shuffle");
    let mut dropout_rng = Rng::derived(config.seed, "dropout");

    let dev_eval = |m: &Model| -> Result<(Option<f64>, Option<f64>)> {
        if dev.is_empty() {
            return Ok((None, None));
        }
        let r = evaluate(m, table, dev)?;
        Ok((Some(r.accuracy), Some(r.mean_loss)))
    };

    let (acc, loss) = dev_eval(&model)?;
    let first = EpochRecord {
        epoch: 0,
        train_loss: None,
        steps: 0,
        dev_accuracy: acc,
        dev_loss: loss,
    };
    on_improve(&model, &first)?;
    let mut outcome = TrainOutcome {
        best: model.clone(),
        best_epoch: 0,
        best_dev_accuracy: acc,
        history: vec![first],
        aborted: None,
    };

    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut stale = 0;
    'epochs: for epoch in 1..=config.epochs {
        shuffle_rng.shuffle(&mut order);
        let mut loss_sum = 0.0;
        let mut steps = 0;
        for chunk in order.chunks(config.batch_size) {
            let batch: Vec<&Prepared> = chunk.iter().map(|&i| &train[i]).collect();
            let stats = match train_step(&mut model, &mut adam, table, &batch, &config.optim, Some(&mut dropout_rng)) {
                Ok(s) => s,
                Err(e @ pathqa_core::Error::NonFiniteGradient(_)) => {
                    outcome.aborted = Some(format!("epoch {epoch}: {e}"));
                    break 'epochs;
                }
                Err(e) => return Err(e.into()),
            };
            if !stats.loss.is_finite() {
                outcome.aborted = Some(format!("epoch {epoch}: non-finite loss {}", stats.loss));
                break 'epochs;
            }
            if stats.instances > 0 {
                loss_sum += stats.loss;
                steps += 1;
            }
        }
        let (acc, dev_loss) = dev_eval(&model)?;
        let record = EpochRecord {
            epoch,
            train_loss: Some(if steps == 0 { 0.0 } else { loss_sum / steps as f64 }),
            steps,
            dev_accuracy: acc,
            dev_loss,
        };
        log::info!(
            "epoch {epoch}: train loss {:.4}, dev accuracy {}",
            record.train_loss.unwrap_or(0.0),
            acc.map_or("-".to_string(), |a| format!("{a:.4}"))
        );
        let improved = match (acc, outcome.best_dev_accuracy) {
            (Some(a), Some(b)) => a > b,
            _ => true,
        };
        outcome.history.push(record.clone());
        if improved {
            on_improve(&model, &record)?;
            outcome.best = model.clone();
            outcome.best_epoch = epoch;
            outcome.best_dev_accuracy = acc;
            stale = 0;
        } else {
            stale += 1;
            if stale >= config.patience {
                log::info!("no dev improvement for {stale} epochs; stopping");
                break;
            }
        }
    }
    Ok(outcome)
}
