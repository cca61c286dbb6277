//! The rumor detection network: shared sentence encoder, one GraphSAGE
//! tower per graph kind, max readouts and the fused classifier.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{Event, Relation};
use crate::encoder::{BiLstm, BiLstmConfig, EmbeddingSource, Mode};
use crate::error::{Error, Result};
use crate::graph::{conversation_topology, evidence_topology, Topology};
use crate::numerics::{Gradients, ModelParams, Tape, Tensor, Var};
use crate::sage::{classify, readout, ClassifierVars, SageConfig, SageTower};
use crate::text::{clean_tokens, encode_sentence, EmbeddingTable, EncodedSentence, Vocab, UNK_TOKEN};

pub const EMBEDDING_PARAM: &str = "embedding";
pub const NUM_CLASSES: usize = 2;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RdmConfig {
    pub encoder: BiLstmConfig,
    pub sage: SageConfig,
    /// Hidden width of an optional ReLU layer in front of the output layer.
    pub mlp_hidden: Option<usize>,
    /// Append a one-hot of the evidence relation to the classifier input.
    pub use_evidence_label: bool,
    /// Read out the root state only instead of the max over all nodes.
    pub root_readout: bool,
    pub freeze_embeddings: bool,
}

impl Default for RdmConfig {
    fn default() -> Self {
        Self {
            encoder: BiLstmConfig::default(),
            sage: SageConfig::default(),
            mlp_hidden: None,
            use_evidence_label: false,
            root_readout: false,
            freeze_embeddings: true,
        }
    }
}

impl RdmConfig {
    pub fn validate(&self) -> Result<()> {
        self.encoder.validate()?;
        self.sage.validate()?;
        if self.mlp_hidden == Some(0) {
            return Err(Error::Config("classifier hidden width must be > 0".into()));
        }
        Ok(())
    }
}

/// How an [`Event`] is turned into model input.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PrepareOptions {
    pub max_len: usize,
    /// Keep only the earliest replies.
    pub max_replies: Option<usize>,
    /// Evidence star size cap.
    pub max_evidence: usize,
    /// Drop the evidence of records whose relation is NEI.
    pub screen_nei: bool,
}

impl Default for PrepareOptions {
    fn default() -> Self {
        Self {
            max_len: crate::text::DEFAULT_MAX_LEN,
            max_replies: None,
            max_evidence: 5,
            screen_nei: false,
        }
    }
}

/// Encoded sentences and topologies of one event. Sentence order is the
/// source, the kept replies in `(timestamp, id)` order, then the kept
/// evidence sentences in record order.
#[derive(Clone, Debug, PartialEq)]
pub struct PreparedEvent {
    pub event_id: String,
    pub sentences: Vec<EncodedSentence>,
    pub conversation: Topology,
    pub evidence: Topology,
    pub label: usize,
    /// Relation of the attached record; NEI when none is attached.
    pub relation: Relation,
}

impl PreparedEvent {
    pub fn n_replies(&self) -> usize {
        self.conversation.n_nodes - 1
    }

    pub fn n_evidence(&self) -> usize {
        self.evidence.n_nodes - 1
    }

    fn conversation_rows(&self) -> Vec<usize> {
        (0..self.conversation.n_nodes).collect()
    }

    fn evidence_rows(&self) -> Vec<usize> {
        let start = self.conversation.n_nodes;
        std::iter::once(0).chain(start..start + self.n_evidence()).collect()
    }
}

fn encode_text(text: &str, vocab: &Vocab, max_len: usize) -> EncodedSentence {
    let mut tokens = clean_tokens(text);
    if tokens.is_empty() {
        tokens.push(UNK_TOKEN.to_string());
    }
    encode_sentence(&tokens, vocab, max_len.max(1))
}

pub fn prepare_event(event: &Event, vocab: &Vocab, opts: &PrepareOptions) -> Result<PreparedEvent> {
    let replies = match opts.max_replies {
        Some(n) => event.earliest_replies(n),
        None => event.sorted_replies(),
    };
    let conversation = conversation_topology(&event.source, &replies)?;

    let relation = event.evidence.as_ref().map_or(Relation::Nei, |r| r.relation);
    let evidence_texts: Vec<&str> = match &event.evidence {
        Some(rec) if !(opts.screen_nei && rec.relation == Relation::Nei) => rec
            .sentences
            .iter()
            .take(opts.max_evidence)
            .map(|s| s.text.as_str())
            .collect(),
        _ => Vec::new(),
    };

    let mut sentences = Vec::with_capacity(1 + replies.len() + evidence_texts.len());
    sentences.push(encode_text(&event.source.text, vocab, opts.max_len));
    sentences.extend(replies.iter().map(|p| encode_text(&p.text, vocab, opts.max_len)));
    sentences.extend(evidence_texts.iter().map(|t| encode_text(t, vocab, opts.max_len)));

    Ok(PreparedEvent {
        event_id: event.event_id.clone(),
        sentences,
        conversation,
        evidence: evidence_topology(evidence_texts.len()),
        label: event.label.class_index(),
        relation,
    })
}

/// Output of one event's forward and backward pass.
#[derive(Clone, Debug)]
pub struct EventGrad {
    pub loss: f64,
    pub probs: Vec<f64>,
    pub grads: Gradients,
}

#[derive(Clone, Debug)]
pub struct RdmModel {
    config: RdmConfig,
    embeddings: EmbeddingTable,
    encoder: BiLstm,
    conversation: SageTower,
    evidence: SageTower,
}

impl RdmModel {
    pub fn new(config: RdmConfig, embeddings: EmbeddingTable) -> Result<Self> {
        config.validate()?;
        if embeddings.dim() != config.encoder.input_dim {
            return Err(Error::Config(format!(
                "embedding dim {} does not match encoder input dim {}",
                embeddings.dim(),
                config.encoder.input_dim
            )));
        }
        let encoder = BiLstm::new(config.encoder, "encoder");
        let d = encoder.output_dim();
        Ok(Self {
            conversation: SageTower::new("sage.conversation", d, config.sage.clone()),
            evidence: SageTower::new("sage.evidence", d, config.sage.clone()),
            encoder,
            embeddings,
            config,
        })
    }

    pub fn config(&self) -> &RdmConfig {
        &self.config
    }

    pub fn embeddings(&self) -> &EmbeddingTable {
        &self.embeddings
    }

    fn classifier_input_dim(&self) -> usize {
        let extra = if self.config.use_evidence_label { Relation::ALL.len() } else { 0 };
        self.conversation.output_dim() + self.evidence.output_dim() + extra
    }

    /// Fresh parameters drawn from `seed`.
    pub fn init_params(&self, seed: u64) -> ModelParams {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ModelParams::new();
        if !self.config.freeze_embeddings {
            params.insert(EMBEDDING_PARAM, self.embeddings.matrix.clone());
        }
        self.encoder.init_params(&mut params, &mut rng);
        self.conversation.init_params(&mut params, &mut rng);
        self.evidence.init_params(&mut params, &mut rng);
        let mut d_in = self.classifier_input_dim();
        if let Some(h) = self.config.mlp_hidden {
            let bound = (6.0 / (d_in + h) as f64).sqrt();
            params.insert("classifier.hidden_w", Tensor::uniform(&[d_in, h], bound, &mut rng));
            params.insert("classifier.hidden_b", Tensor::zeros(&[1, h]));
            d_in = h;
        }
        let bound = (6.0 / (d_in + NUM_CLASSES) as f64).sqrt();
        params.insert("classifier.v", Tensor::uniform(&[d_in, NUM_CLASSES], bound, &mut rng));
        params.insert("classifier.b", Tensor::zeros(&[1, NUM_CLASSES]));
        params
    }

    fn classifier_vars(&self, tape: &mut Tape<'_>) -> Result<ClassifierVars> {
        let hidden = match self.config.mlp_hidden {
            Some(_) => Some((tape.param("classifier.hidden_w")?, tape.param("classifier.hidden_b")?)),
            None => None,
        };
        Ok(ClassifierVars {
            v: tape.param("classifier.v")?,
            b: tape.param("classifier.b")?,
            hidden,
        })
    }

    /// Class probabilities (`1 x 2`) for one event.
    pub fn forward(&self, tape: &mut Tape<'_>, event: &PreparedEvent, mode: &mut Mode<'_>) -> Result<Var> {
        let source = if self.config.freeze_embeddings {
            EmbeddingSource::Frozen(&self.embeddings.matrix)
        } else {
            EmbeddingSource::Trainable(EMBEDDING_PARAM)
        };
        let refs: Vec<&EncodedSentence> = event.sentences.iter().collect();
        let encoded = self.encoder.encode_batch(tape, source, &refs, mode)?;

        let h_conv = tape.gather_rows(encoded, &event.conversation_rows())?;
        let h_conv = self.conversation.forward(tape, h_conv, &event.conversation)?;
        let p = readout(tape, h_conv, self.config.root_readout)?;

        let h_evid = tape.gather_rows(encoded, &event.evidence_rows())?;
        let h_evid = self.evidence.forward(tape, h_evid, &event.evidence)?;
        let e = readout(tape, h_evid, self.config.root_readout)?;

        let extra = if self.config.use_evidence_label {
            let mut onehot = vec![0.0; Relation::ALL.len()];
            onehot[event.relation.class_index()] = 1.0;
            Some(tape.constant(Tensor::row(onehot)))
        } else {
            None
        };
        let cls = self.classifier_vars(tape)?;
        classify(tape, p, e, extra, cls)
    }

    pub fn predict(&self, params: &ModelParams, event: &PreparedEvent) -> Result<Vec<f64>> {
        let mut tape = Tape::with_params(params);
        let probs = self.forward(&mut tape, event, &mut Mode::Eval)?;
        Ok(tape.value(probs).data().to_vec())
    }

    /// Cross-entropy of the event's label and its parameter gradients.
    pub fn loss_and_grads(&self, params: &ModelParams, event: &PreparedEvent, mode: &mut Mode<'_>) -> Result<EventGrad> {
        let mut tape = Tape::with_params(params);
        let probs = self.forward(&mut tape, event, mode)?;
        let loss = tape.cross_entropy(probs, &[event.label])?;
        let back = tape.backward(loss)?;
        Ok(EventGrad {
            loss: tape.value(loss).data()[0],
            probs: tape.value(probs).data().to_vec(),
            grads: back.param_grads(&tape)?,
        })
    }
}

/// Index of the larger probability; ties go to class 0.
pub fn argmax(probs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &p) in probs.iter().enumerate() {
        if p > probs[best] {
            best = i;
        }
    }
    best
}
