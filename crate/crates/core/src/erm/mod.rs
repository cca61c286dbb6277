//! Evidence retrieval: entity extraction, TF-IDF document and sentence
//! ranking, and claim verification.

mod entities;
mod tfidf;
mod verifier;

pub use entities::extract_entities;
pub use tfidf::{doc_terms, idf, index_terms, Query, ScoredDoc, ScoredSentence, SparseVec, TfIdfIndex};
pub use verifier::{combine_pairs, LabeledPair, Verdict, Verifier, VerifierConfig, VerifierTraining};

use std::collections::BTreeMap;

use crate::config::RunConfig;
use crate::corpus::{Event, EvidenceRecord, EvidenceSentence, PairRecord, Relation};
use crate::error::{Error, Result};
use crate::exec::Executor;
use crate::numerics::{AdamState, Checkpoint, CheckpointHeader, ModelParams};
use crate::text::{build_vocab, clean_tokens, encode_sentence, EmbeddingTable, EncodedSentence, Vocab, UNK_TOKEN};

pub const VERIFIER_KIND: &str = "verifier";
const VERIFIER_EMBEDDING: &str = "verifier.embedding";

fn encode_text(text: &str, vocab: &Vocab, max_len: usize) -> EncodedSentence {
    let mut tokens = clean_tokens(text);
    if tokens.is_empty() {
        tokens.push(UNK_TOKEN.to_string());
    }
    encode_sentence(&tokens, vocab, max_len.max(1))
}

pub fn pair_vocab(pairs: &[PairRecord], max_size: usize) -> Result<Vocab> {
    build_vocab(
        pairs.iter().flat_map(|p| [clean_tokens(&p.claim), clean_tokens(&p.sentence)]),
        max_size,
    )
}

pub fn encode_pairs(pairs: &[PairRecord], vocab: &Vocab, max_len: usize) -> Vec<LabeledPair> {
    pairs
        .iter()
        .map(|p| LabeledPair {
            claim: encode_text(&p.claim, vocab, max_len),
            sentence: encode_text(&p.sentence, vocab, max_len),
            relation: p.relation,
        })
        .collect()
}

/// Verifier weights with its embedding table stored as a constant.
pub fn verifier_checkpoint(config: &RunConfig, verifier: &Verifier, params: &ModelParams, adam: AdamState) -> Checkpoint {
    Checkpoint {
        header: CheckpointHeader {
            kind: VERIFIER_KIND.into(),
            seed: config.seed,
            activation: config.activation.to_string(),
            config_fingerprint: config.fingerprint(),
            config: config.to_toml(),
        },
        params: params.clone(),
        adam,
        constants: BTreeMap::from([(VERIFIER_EMBEDDING.to_string(), verifier.embeddings().matrix.clone())]),
    }
}

/// Rebuild a verifier from the configuration recorded in its checkpoint.
pub fn verifier_from_checkpoint(ckpt: &Checkpoint) -> Result<(RunConfig, Verifier, ModelParams)> {
    if ckpt.header.kind != VERIFIER_KIND {
        return Err(Error::Checkpoint(format!("expected a verifier checkpoint, found {}", ckpt.header.kind)));
    }
    let config = RunConfig::from_toml_str(&ckpt.header.config)?;
    if config.fingerprint() != ckpt.header.config_fingerprint {
        return Err(Error::Checkpoint("embedded config does not match its fingerprint".into()));
    }
    let matrix = ckpt
        .constants
        .get(VERIFIER_EMBEDDING)
        .cloned()
        .ok_or_else(|| Error::Checkpoint("checkpoint has no verifier embedding table".into()))?;
    let verifier = Verifier::new(config.verifier_config(), EmbeddingTable { matrix, frozen: true })?;
    Ok((config, verifier, ckpt.params.clone()))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ErmOptions {
    pub k_docs: usize,
    pub k_evidence: usize,
}

impl Default for ErmOptions {
    fn default() -> Self {
        Self { k_docs: 5, k_evidence: 5 }
    }
}

/// A trained verifier with the vocabulary it reads.
#[derive(Clone, Copy)]
pub struct VerifierBundle<'a> {
    pub verifier: &'a Verifier,
    pub params: &'a ModelParams,
    pub vocab: &'a Vocab,
    pub max_len: usize,
}

impl VerifierBundle<'_> {
    fn encode(&self, text: &str) -> EncodedSentence {
        encode_text(text, self.vocab, self.max_len)
    }

    pub fn verify(&self, claim: &str, sentences: &[EvidenceSentence]) -> Result<Verdict> {
        let claim = self.encode(claim);
        let sents: Vec<EncodedSentence> = sentences.iter().map(|s| self.encode(&s.text)).collect();
        self.verifier.verify(self.params, &claim, &sents)
    }
}

/// Sentences with positive score from documents with positive score.
pub fn retrieve_evidence(index: &TfIdfIndex, claim: &str, opts: &ErmOptions) -> Vec<EvidenceSentence> {
    let query = Query::new(claim);
    let docs: Vec<ScoredDoc> = index
        .retrieve_documents(&query, opts.k_docs)
        .into_iter()
        .filter(|d| d.score > 0.0)
        .collect();
    index
        .select_sentences(&query, &docs, opts.k_evidence)
        .into_iter()
        .filter(|s| s.score > 0.0)
        .map(|s| EvidenceSentence {
            title: s.title,
            index: s.index,
            text: s.text,
        })
        .collect()
}

/// Evidence record for every event, in event order. Without a verifier the
/// relation is NEI.
pub fn run_erm(
    events: &[Event],
    index: &TfIdfIndex,
    opts: &ErmOptions,
    verifier: Option<VerifierBundle<'_>>,
    exec: &Executor,
) -> Result<Vec<EvidenceRecord>> {
    exec.try_map(events, |event| {
        let sentences = retrieve_evidence(index, &event.source.text, opts);
        let relation = match (&verifier, sentences.is_empty()) {
            (Some(v), false) => v.verify(&event.source.text, &sentences)?.relation,
            _ => Relation::Nei,
        };
        Ok(EvidenceRecord { sentences, relation })
    })
}
