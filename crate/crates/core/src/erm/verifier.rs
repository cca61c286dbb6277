//! Claim/sentence relation classifier.
//!
//! A claim and a sentence are encoded by a BiLSTM into `u` and `v`; the pair
//! feature `[u, v, |u - v|, u * v]` goes through one affine layer and a
//! softmax over (SUPPORTED, REFUTED, NEI).

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::Relation;
use crate::encoder::{BiLstm, BiLstmConfig, EmbeddingSource, Mode};
use crate::error::{Error, Result};
use crate::numerics::{adam_step, AdamConfig, AdamState, ModelParams, Tape, Tensor, Var};
use crate::text::{EmbeddingTable, EncodedSentence};

const HEAD_W: &str = "verifier.head.w";
const HEAD_B: &str = "verifier.head.b";

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerifierConfig {
    pub encoder: BiLstmConfig,
    /// A verdict other than NEI needs some pair's SUPPORTED or REFUTED
    /// probability strictly above this.
    pub threshold: f64,
}

impl Default for VerifierConfig {
    fn default() -> Self {
        Self {
            encoder: BiLstmConfig::default(),
            threshold: 0.5,
        }
    }
}

/// Combined decision over all evidence sentences of a claim.
#[derive(Clone, Debug, PartialEq)]
pub struct Verdict {
    pub relation: Relation,
    /// Per-class maxima over pairs, renormalized to sum to one.
    pub probs: [f64; 3],
}

impl Verdict {
    pub fn empty() -> Self {
        Self {
            relation: Relation::Nei,
            probs: [0.0, 0.0, 1.0],
        }
    }
}

/// Combine pair probabilities: per-class max, renormalized; NEI unless some
/// pair puts more than `threshold` on SUPPORTED or REFUTED, otherwise the
/// larger of the two combined values (ties to SUPPORTED).
pub fn combine_pairs(pairs: &[[f64; 3]], threshold: f64) -> Verdict {
    if pairs.is_empty() {
        return Verdict::empty();
    }
    let mut max = [0.0f64; 3];
    for p in pairs {
        for c in 0..3 {
            max[c] = max[c].max(p[c]);
        }
    }
    let total: f64 = max.iter().sum();
    let probs = max.map(|m| m / total);
    let relation = if max[0] <= threshold && max[1] <= threshold {
        Relation::Nei
    } else if probs[1] > probs[0] {
        Relation::Refuted
    } else {
        Relation::Supported
    };
    Verdict { relation, probs }
}

/// One labelled training pair.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledPair {
    pub claim: EncodedSentence,
    pub sentence: EncodedSentence,
    pub relation: Relation,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct VerifierTraining {
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub adam: AdamConfig,
}

impl Default for VerifierTraining {
    fn default() -> Self {
        Self {
            epochs: 20,
            batch_size: 32,
            seed: 7,
            adam: AdamConfig::default(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct Verifier {
    config: VerifierConfig,
    encoder: BiLstm,
    embeddings: EmbeddingTable,
}

impl Verifier {
    pub fn new(config: VerifierConfig, embeddings: EmbeddingTable) -> Result<Self> {
        config.encoder.validate()?;
        if !(0.0..=1.0).contains(&config.threshold) {
            return Err(Error::Config(format!("verifier threshold {} outside [0, 1]", config.threshold)));
        }
        if embeddings.dim() != config.encoder.input_dim {
            return Err(Error::Config(format!(
                "embedding dim {} does not match verifier input dim {}",
                embeddings.dim(),
                config.encoder.input_dim
            )));
        }
        Ok(Self {
            encoder: BiLstm::new(config.encoder, "verifier.encoder"),
            config,
            embeddings,
        })
    }

    pub fn config(&self) -> &VerifierConfig {
        &self.config
    }

    pub fn embeddings(&self) -> &EmbeddingTable {
        &self.embeddings
    }

    pub fn init_params(&self, seed: u64) -> ModelParams {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ModelParams::new();
        self.encoder.init_params(&mut params, &mut rng);
        let d = 4 * self.encoder.output_dim();
        let bound = (6.0 / (d + 3) as f64).sqrt();
        params.insert(HEAD_W, Tensor::uniform(&[d, 3], bound, &mut rng));
        params.insert(HEAD_B, Tensor::zeros(&[1, 3]));
        params
    }

    /// `n x 3` pair probabilities for `n` (claim, sentence) pairs.
    fn pair_probs_var(
        &self,
        tape: &mut Tape<'_>,
        claims: &[&EncodedSentence],
        sentences: &[&EncodedSentence],
        mode: &mut Mode<'_>,
    ) -> Result<Var> {
        let n = claims.len();
        let batch: Vec<&EncodedSentence> = claims.iter().chain(sentences).copied().collect();
        let enc = self
            .encoder
            .encode_batch(tape, EmbeddingSource::Frozen(&self.embeddings.matrix), &batch, mode)?;
        let u = tape.gather_rows(enc, &(0..n).collect::<Vec<_>>())?;
        let v = tape.gather_rows(enc, &(n..2 * n).collect::<Vec<_>>())?;
        let diff = tape.sub(u, v)?;
        let diff = tape.abs(diff)?;
        let prod = tape.mul(u, v)?;
        let feat = tape.concat_cols(&[u, v, diff, prod])?;
        let w = tape.param(HEAD_W)?;
        let b = tape.param(HEAD_B)?;
        let logits = tape.matmul(feat, w)?;
        let logits = tape.add_row(logits, b)?;
        tape.softmax(logits)
    }

    /// Probabilities for each sentence paired with `claim`.
    pub fn pair_probs(&self, params: &ModelParams, claim: &EncodedSentence, sentences: &[EncodedSentence]) -> Result<Vec<[f64; 3]>> {
        if sentences.is_empty() {
            return Ok(Vec::new());
        }
        let mut tape = Tape::with_params(params);
        let claims = vec![claim; sentences.len()];
        let refs: Vec<&EncodedSentence> = sentences.iter().collect();
        let probs = self.pair_probs_var(&mut tape, &claims, &refs, &mut Mode::Eval)?;
        let pv = tape.value(probs);
        Ok((0..pv.rows()).map(|r| [pv.get(r, 0), pv.get(r, 1), pv.get(r, 2)]).collect())
    }

    pub fn verify(&self, params: &ModelParams, claim: &EncodedSentence, sentences: &[EncodedSentence]) -> Result<Verdict> {
        Ok(combine_pairs(&self.pair_probs(params, claim, sentences)?, self.config.threshold))
    }

    /// Argmax pair accuracy.
    pub fn pair_accuracy(&self, params: &ModelParams, pairs: &[LabeledPair]) -> Result<f64> {
        if pairs.is_empty() {
            return Err(Error::InvalidData("no verifier pairs".into()));
        }
        let mut tape = Tape::with_params(params);
        let claims: Vec<&EncodedSentence> = pairs.iter().map(|p| &p.claim).collect();
        let sents: Vec<&EncodedSentence> = pairs.iter().map(|p| &p.sentence).collect();
        let probs = self.pair_probs_var(&mut tape, &claims, &sents, &mut Mode::Eval)?;
        let pv = tape.value(probs);
        let correct = pairs
            .iter()
            .enumerate()
            .filter(|(r, p)| crate::model::argmax(pv.row_slice(*r)) == p.relation.class_index())
            .count();
        Ok(correct as f64 / pairs.len() as f64)
    }

    /// Mini-batch Adam on mean pair cross-entropy; returns the mean loss of
    /// every epoch and the final optimizer state.
    pub fn train(&self, params: &mut ModelParams, pairs: &[LabeledPair], opts: &VerifierTraining) -> Result<(Vec<f64>, AdamState)> {
        if pairs.is_empty() {
            return Err(Error::InvalidData("no verifier pairs".into()));
        }
        if opts.batch_size == 0 {
            return Err(Error::Config("verifier batch size must be > 0".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
        let mut adam = AdamState::new(opts.adam);
        let mut order: Vec<usize> = (0..pairs.len()).collect();
        let mut losses = Vec::with_capacity(opts.epochs);
        for _ in 0..opts.epochs {
            order.shuffle(&mut rng);
            let mut total = 0.0;
            for chunk in order.chunks(opts.batch_size) {
                let claims: Vec<&EncodedSentence> = chunk.iter().map(|&i| &pairs[i].claim).collect();
                let sents: Vec<&EncodedSentence> = chunk.iter().map(|&i| &pairs[i].sentence).collect();
                let labels: Vec<usize> = chunk.iter().map(|&i| pairs[i].relation.class_index()).collect();
                let grads = {
                    let mut tape = Tape::with_params(params);
                    let probs = self.pair_probs_var(&mut tape, &claims, &sents, &mut Mode::Train(&mut rng))?;
                    let loss = tape.cross_entropy(probs, &labels)?;
                    let loss = tape.scale(loss, 1.0 / chunk.len() as f64)?;
                    total += tape.value(loss).data()[0] * chunk.len() as f64;
                    tape.backward(loss)?.param_grads(&tape)?
                };
                params.accumulate(&grads)?;
                adam_step(params, &mut adam)?;
            }
            losses.push(total / pairs.len() as f64);
        }
        Ok((losses, adam))
    }
}
