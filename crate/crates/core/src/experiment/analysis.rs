use serde::{Deserialize, Serialize};

use crate::corpus::{Event, Relation, RumorLabel};
use crate::error::{Error, Result};
use crate::exec::Executor;
use crate::model::{prepare_event, PrepareOptions, PreparedEvent, RdmModel};
use crate::numerics::ModelParams;
use crate::text::Vocab;

use super::metrics::Metrics;
use super::train::{evaluate, train, TrainOptions};

/// Reply counts of the early-detection curve.
pub const EARLY_COUNTS: [usize; 9] = [5, 10, 15, 20, 25, 30, 35, 40, 45];

pub fn prepare_all(events: &[&Event], vocab: &Vocab, opts: &PrepareOptions, exec: &Executor) -> Result<Vec<PreparedEvent>> {
    exec.try_map(events, |e| prepare_event(e, vocab, opts))
}

/// Metrics with each event's conversation cut to its earliest `n` replies,
/// for every `n` in `counts`. Evidence graphs are unchanged.
pub fn early_detection_curve(
    model: &RdmModel,
    params: &ModelParams,
    events: &[&Event],
    vocab: &Vocab,
    base: &PrepareOptions,
    counts: &[usize],
    exec: &Executor,
) -> Result<Vec<(usize, Metrics)>> {
    let mut out = Vec::with_capacity(counts.len());
    for &n in counts {
        let opts = PrepareOptions {
            max_replies: Some(n),
            ..*base
        };
        let prepared = prepare_all(events, vocab, &opts, exec)?;
        out.push((n, evaluate(model, params, &prepared, exec)?));
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvidenceDistribution {
    pub total: usize,
    /// SUPPORTED, REFUTED, NEI.
    pub counts: [usize; 3],
    pub fractions: [f64; 3],
}

/// Relation shares over the events that have an evidence record.
pub fn evidence_distribution(events: &[Event]) -> Result<EvidenceDistribution> {
    let mut counts = [0usize; 3];
    for rec in events.iter().filter_map(|e| e.evidence.as_ref()) {
        counts[rec.relation.class_index()] += 1;
    }
    let total: usize = counts.iter().sum();
    if total == 0 {
        return Err(Error::InvalidData("no evidence attached".into()));
    }
    Ok(EvidenceDistribution {
        total,
        counts,
        fractions: counts.map(|c| c as f64 / total as f64),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RefutesReport {
    pub n_events: usize,
    pub n_rumor: usize,
    pub n_refuted: usize,
    pub n_refuted_rumor: usize,
    pub p_rumor: f64,
    /// Undefined when no event has REFUTED evidence.
    pub p_rumor_given_refuted: Option<f64>,
    /// `p_rumor_given_refuted - p_rumor`, as a fraction.
    pub increment: Option<f64>,
}

pub fn refutes_probability(events: &[Event]) -> Result<RefutesReport> {
    if events.is_empty() {
        return Err(Error::InvalidData("no events".into()));
    }
    let is_rumor = |e: &Event| e.label == RumorLabel::Rumor;
    let refuted: Vec<&Event> = events
        .iter()
        .filter(|e| e.evidence.as_ref().is_some_and(|r| r.relation == Relation::Refuted))
        .collect();
    let n_rumor = events.iter().filter(|e| is_rumor(e)).count();
    let n_refuted_rumor = refuted.iter().filter(|e| is_rumor(e)).count();
    let p_rumor = n_rumor as f64 / events.len() as f64;
    let p_cond = (!refuted.is_empty()).then(|| n_refuted_rumor as f64 / refuted.len() as f64);
    Ok(RefutesReport {
        n_events: events.len(),
        n_rumor,
        n_refuted: refuted.len(),
        n_refuted_rumor,
        p_rumor,
        p_rumor_given_refuted: p_cond,
        increment: p_cond.map(|p| p - p_rumor),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub n_evidence: usize,
    pub screened: bool,
    pub accuracy: f64,
    pub best_epoch: usize,
}

/// Retrain and evaluate with the evidence star capped at each `n`, with and
/// without NEI screening. Every run starts from the same initial parameters.
#[allow(clippy::too_many_arguments)]
pub fn evidence_count_sweep(
    model: &RdmModel,
    init: &ModelParams,
    train_events: &[&Event],
    val_events: &[&Event],
    test_events: &[&Event],
    vocab: &Vocab,
    base: &PrepareOptions,
    counts: &[usize],
    train_opts: &TrainOptions,
    exec: &Executor,
) -> Result<Vec<SweepPoint>> {
    let mut out = Vec::new();
    for screened in [false, true] {
        for &n in counts {
            let opts = PrepareOptions {
                max_evidence: n,
                screen_nei: screened,
                ..*base
            };
            let tr = prepare_all(train_events, vocab, &opts, exec)?;
            let va = prepare_all(val_events, vocab, &opts, exec)?;
            let te = prepare_all(test_events, vocab, &opts, exec)?;
            let outcome = train(model, init.clone(), &tr, &va, train_opts, exec)?;
            let m = evaluate(model, &outcome.params, &te, exec)?;
            out.push(SweepPoint {
                n_evidence: n,
                screened,
                accuracy: m.accuracy,
                best_epoch: outcome.best_epoch,
            });
        }
    }
    Ok(out)
}
