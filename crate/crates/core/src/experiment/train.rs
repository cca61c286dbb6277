use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::encoder::Mode;
use crate::error::{Error, Result};
use crate::exec::Executor;
use crate::model::{argmax, PreparedEvent, RdmModel};
use crate::numerics::{adam_step, AdamConfig, AdamState, Gradients, ModelParams};

use super::metrics::{compute_metrics, Metrics};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainOptions {
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Stop after this many epochs without a new best validation score.
    pub patience: usize,
    pub seed: u64,
    pub adam: AdamConfig,
}

impl Default for TrainOptions {
    fn default() -> Self {
        Self {
            batch_size: 64,
            max_epochs: 100,
            patience: 10,
            seed: 7,
            adam: AdamConfig::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    /// Mean training-mode cross-entropy over the epoch's events.
    pub train_loss: f64,
    pub val_accuracy: Option<f64>,
    /// Mean eval-mode cross-entropy on the validation events.
    pub val_loss: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    /// Parameters after the best validation epoch (the last epoch when
    /// there is no validation set).
    pub params: ModelParams,
    pub adam: AdamState,
    pub best_epoch: usize,
    pub log: Vec<EpochLog>,
}

pub fn predict_all(
    model: &RdmModel,
    params: &ModelParams,
    events: &[PreparedEvent],
    exec: &Executor,
) -> Result<Vec<Vec<f64>>> {
    exec.try_map(events, |e| model.predict(params, e))
}

pub fn evaluate(model: &RdmModel, params: &ModelParams, events: &[PreparedEvent], exec: &Executor) -> Result<Metrics> {
    Ok(evaluate_with_loss(model, params, events, exec)?.0)
}

/// Metrics and mean cross-entropy of the predicted probabilities.
pub fn evaluate_with_loss(
    model: &RdmModel,
    params: &ModelParams,
    events: &[PreparedEvent],
    exec: &Executor,
) -> Result<(Metrics, f64)> {
    let probs = predict_all(model, params, events, exec)?;
    let preds: Vec<usize> = probs.iter().map(|p| argmax(p)).collect();
    let labels: Vec<usize> = events.iter().map(|e| e.label).collect();
    let metrics = compute_metrics(&preds, &labels)?;
    let loss = probs.iter().zip(&labels).map(|(p, &y)| -p[y].max(f64::MIN_POSITIVE).ln()).sum::<f64>();
    Ok((metrics, loss / events.len() as f64))
}

/// Mean gradient of one mini-batch. Each event's dropout masks come from
/// its own seed, and per-event gradients are summed in batch order, so the
/// result does not depend on the worker count.
fn batch_gradient(
    model: &RdmModel,
    params: &ModelParams,
    batch: &[(&PreparedEvent, u64)],
    exec: &Executor,
) -> Result<(Gradients, f64)> {
    let results = exec.try_map(batch, |(event, seed)| {
        let mut rng = ChaCha8Rng::seed_from_u64(*seed);
        model.loss_and_grads(params, event, &mut Mode::Train(&mut rng))
    })?;
    let mut total = Gradients::new();
    let mut loss = 0.0;
    for r in &results {
        total.merge(&r.grads)?;
        loss += r.loss;
    }
    total.scale(1.0 / batch.len() as f64);
    Ok((total, loss))
}

/// Mini-batch Adam on cross-entropy with early stopping on validation
/// accuracy. An epoch that ties the best accuracy counts as better when its
/// validation loss is strictly lower; small validation sets saturate in
/// accuracy long before the model stops improving.
pub fn train(
    model: &RdmModel,
    init: ModelParams,
    train_set: &[PreparedEvent],
    val_set: &[PreparedEvent],
    opts: &TrainOptions,
    exec: &Executor,
) -> Result<TrainOutcome> {
    if train_set.is_empty() {
        return Err(Error::InvalidData("empty training split".into()));
    }
    if opts.batch_size == 0 || opts.max_epochs == 0 {
        return Err(Error::Config("batch size and epoch budget must be > 0".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut params = init;
    let mut adam = AdamState::new(opts.adam);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut log = Vec::new();
    let mut best: Option<((f64, f64), usize, ModelParams, AdamState)> = None;
    let mut stale = 0;

    for epoch in 1..=opts.max_epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for chunk in order.chunks(opts.batch_size) {
            let batch: Vec<(&PreparedEvent, u64)> = chunk.iter().map(|&i| (&train_set[i], rng.random())).collect();
            let (grads, loss) = batch_gradient(model, &params, &batch, exec)?;
            loss_sum += loss;
            params.accumulate(&grads)?;
            adam_step(&mut params, &mut adam)?;
        }
        let train_loss = loss_sum / train_set.len() as f64;
        if !train_loss.is_finite() {
            return Err(Error::NonFinite("training loss"));
        }
        let val = if val_set.is_empty() {
            None
        } else {
            let (m, loss) = evaluate_with_loss(model, &params, val_set, exec)?;
            Some((m.accuracy, loss))
        };
        log.push(EpochLog {
            epoch,
            train_loss,
            val_accuracy: val.map(|v| v.0),
            val_loss: val.map(|v| v.1),
        });

        match val {
            Some((acc, loss)) => {
                let better = best
                    .as_ref()
                    .is_none_or(|b| acc > b.0 .0 || (acc == b.0 .0 && loss < b.0 .1));
                if better {
                    best = Some(((acc, loss), epoch, params.clone(), adam.clone()));
                    stale = 0;
                } else {
                    stale += 1;
                    if stale >= opts.patience {
                        break;
                    }
                }
            }
            None => best = Some(((f64::NAN, f64::NAN), epoch, params.clone(), adam.clone())),
        }
    }

    let (_, best_epoch, params, adam) = best.expect("at least one epoch ran");
    Ok(TrainOutcome {
        params,
        adam,
        best_epoch,
        log,
    })
}
