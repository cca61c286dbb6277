//! A complete training run and its on-disk artifacts.

use std::collections::BTreeMap;
use std::path::Path;

use crate::config::RunConfig;
use crate::corpus::Event;
use crate::error::{Error, Result};
use crate::exec::Executor;
use crate::model::{RdmModel, EMBEDDING_PARAM};
use crate::numerics::{Checkpoint, CheckpointHeader, ModelParams};
use crate::text::{build_vocab, clean_tokens, EmbeddingTable, Vocab};

use super::analysis::prepare_all;
use super::metrics::Metrics;
use super::report::{metric_records, metrics_table, write_jsonl, write_text};
use super::split::{split_dataset, Split};
use super::train::{evaluate, train, TrainOptions, TrainOutcome};

pub const CHECKPOINT_FILE: &str = "checkpoint.bin";
pub const CONFIG_FILE: &str = "config.toml";
pub const VOCAB_FILE: &str = "vocab.txt";
pub const SPLIT_FILE: &str = "split.json";
pub const LOG_FILE: &str = "train_log.jsonl";
pub const METRICS_FILE: &str = "metrics.jsonl";
pub const METRICS_TABLE_FILE: &str = "metrics.txt";

/// Every text the model reads for one event.
pub fn event_texts(event: &Event) -> Vec<&str> {
    let mut texts = vec![event.source.text.as_str()];
    texts.extend(event.replies.iter().map(|p| p.text.as_str()));
    if let Some(rec) = &event.evidence {
        texts.extend(rec.sentences.iter().map(|s| s.text.as_str()));
    }
    texts
}

pub fn vocab_from_events(events: &[&Event], max_size: usize) -> Result<Vocab> {
    build_vocab(
        events.iter().flat_map(|e| event_texts(e)).map(clean_tokens),
        max_size,
    )
}

/// Events of each split part, in split order.
pub fn split_events<'e>(events: &'e [Event], ids: &[String]) -> Result<Vec<&'e Event>> {
    let by_id: BTreeMap<&str, &Event> = events.iter().map(|e| (e.event_id.as_str(), e)).collect();
    ids.iter()
        .map(|id| {
            by_id
                .get(id.as_str())
                .copied()
                .ok_or_else(|| Error::InvalidData(format!("split references unknown event {id}")))
        })
        .collect()
}

pub fn train_options(config: &RunConfig) -> TrainOptions {
    TrainOptions {
        batch_size: config.batch_size,
        max_epochs: config.max_epochs,
        patience: config.patience,
        seed: config.seed,
        adam: config.adam_config(),
    }
}

#[derive(Clone, Debug)]
pub struct TrainedRun {
    pub config: RunConfig,
    pub split: Split,
    pub vocab: Vocab,
    pub model: RdmModel,
    pub outcome: TrainOutcome,
    pub test_metrics: Metrics,
}

/// Split, build the vocabulary from the training events (unless given),
/// train, and evaluate on the test part. Embeddings default to a seeded
/// random table.
pub fn train_run(
    events: &[Event],
    config: &RunConfig,
    vocab: Option<Vocab>,
    embeddings: Option<EmbeddingTable>,
    exec: &Executor,
) -> Result<TrainedRun> {
    config.validate()?;
    let ids: Vec<String> = events.iter().map(|e| e.event_id.clone()).collect();
    let split = split_dataset(&ids, config.seed)?;
    let train_events = split_events(events, &split.train)?;
    let val_events = split_events(events, &split.val)?;
    let test_events = split_events(events, &split.test)?;

    let vocab = match vocab {
        Some(v) => v,
        None => vocab_from_events(&train_events, config.vocab_size)?,
    };
    let mut embeddings = embeddings.unwrap_or_else(|| EmbeddingTable::random(&vocab, config.embed_dim, config.seed));
    embeddings.frozen = config.freeze_embeddings;
    if embeddings.matrix.rows() != vocab.len() {
        return Err(Error::Config(format!(
            "embedding table has {} rows for {} vocabulary entries",
            embeddings.matrix.rows(),
            vocab.len()
        )));
    }
    let model = RdmModel::new(config.rdm_config(), embeddings)?;
    let prep = config.prepare_options();
    let tr = prepare_all(&train_events, &vocab, &prep, exec)?;
    let va = prepare_all(&val_events, &vocab, &prep, exec)?;
    let te = prepare_all(&test_events, &vocab, &prep, exec)?;

    let init = model.init_params(config.seed);
    let outcome = train(&model, init, &tr, &va, &train_options(config), exec)?;
    let test_metrics = evaluate(&model, &outcome.params, &te, exec)?;
    Ok(TrainedRun {
        config: config.clone(),
        split,
        vocab,
        model,
        outcome,
        test_metrics,
    })
}

pub fn make_checkpoint(config: &RunConfig, model: &RdmModel, outcome: &TrainOutcome) -> Checkpoint {
    let mut constants = BTreeMap::new();
    if model.config().freeze_embeddings {
        constants.insert(EMBEDDING_PARAM.to_string(), model.embeddings().matrix.clone());
    }
    Checkpoint {
        header: CheckpointHeader {
            kind: "rdm".into(),
            seed: config.seed,
            activation: config.activation.to_string(),
            config_fingerprint: config.fingerprint(),
            config: config.to_toml(),
        },
        params: outcome.params.clone(),
        adam: outcome.adam.clone(),
        constants,
    }
}

/// Rebuild the model from a checkpoint, refusing a config whose
/// fingerprint differs from the one recorded at training time.
pub fn model_from_checkpoint(ckpt: &Checkpoint, config: &RunConfig) -> Result<(RdmModel, ModelParams)> {
    let fp = config.fingerprint();
    if ckpt.header.config_fingerprint != fp {
        return Err(Error::Config(format!(
            "config fingerprint {fp} does not match checkpoint fingerprint {}",
            ckpt.header.config_fingerprint
        )));
    }
    if ckpt.header.kind != "rdm" {
        return Err(Error::Checkpoint(format!("expected an rdm checkpoint, found {}", ckpt.header.kind)));
    }
    let rdm = config.rdm_config();
    let matrix = if rdm.freeze_embeddings {
        ckpt.constants.get(EMBEDDING_PARAM).cloned()
    } else {
        ckpt.params.value(EMBEDDING_PARAM).ok().cloned()
    }
    .ok_or_else(|| Error::Checkpoint("checkpoint has no embedding table".into()))?;
    let model = RdmModel::new(
        rdm,
        EmbeddingTable {
            matrix,
            frozen: config.freeze_embeddings,
        },
    )?;
    Ok((model, ckpt.params.clone()))
}

impl TrainedRun {
    pub fn checkpoint(&self) -> Checkpoint {
        make_checkpoint(&self.config, &self.model, &self.outcome)
    }

    /// Config, vocabulary, split, checkpoint, training log and test metrics.
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        self.config.save(&dir.join(CONFIG_FILE))?;
        self.vocab.save(&dir.join(VOCAB_FILE))?;
        let split = serde_json::to_string_pretty(&self.split).map_err(|e| Error::InvalidData(e.to_string()))?;
        write_text(&dir.join(SPLIT_FILE), &split)?;
        self.checkpoint().save(&dir.join(CHECKPOINT_FILE))?;
        write_jsonl(&dir.join(LOG_FILE), &self.outcome.log)?;
        let fp = self.config.fingerprint();
        write_jsonl(&dir.join(METRICS_FILE), &metric_records(&self.test_metrics, &fp, None, Some("test")))?;
        write_text(&dir.join(METRICS_TABLE_FILE), &metrics_table("test", &self.test_metrics))
    }
}
