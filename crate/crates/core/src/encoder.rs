//! Bidirectional LSTM sentence encoder.
//!
//! Sentences are encoded as a batch: row `i` of every per-step tensor belongs
//! to sentence `i`. A row stops updating once its sentence has ended, so the
//! result for a sentence never depends on its padding or on the other rows.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{ModelParams, Tape, Tensor, Var};
use crate::text::EncodedSentence;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BiLstmConfig {
    pub input_dim: usize,
    pub hidden: usize,
    pub layers: usize,
    /// Applied to the outputs between stacked layers in training mode.
    pub dropout: f64,
}

impl Default for BiLstmConfig {
    fn default() -> Self {
        Self {
            input_dim: 200,
            hidden: 128,
            layers: 2,
            dropout: 0.5,
        }
    }
}

impl BiLstmConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hidden == 0 {
            return Err(Error::Config("encoder hidden size must be > 0".into()));
        }
        if self.layers == 0 {
            return Err(Error::Config("encoder needs at least one layer".into()));
        }
        if self.input_dim == 0 {
            return Err(Error::Config("encoder input dim must be > 0".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!("dropout {} outside [0, 1)", self.dropout)));
        }
        Ok(())
    }
}

/// Forward-pass mode. Training mode carries the RNG that draws dropout masks.
pub enum Mode<'r> {
    Eval,
    Train(&'r mut ChaCha8Rng),
}

impl Mode<'_> {
    pub fn is_train(&self) -> bool {
        matches!(self, Mode::Train(_))
    }
}

/// Where token vectors come from.
#[derive(Clone, Copy)]
pub enum EmbeddingSource<'e> {
    /// Fixed table, not part of the parameters.
    Frozen(&'e Tensor),
    /// A trainable parameter of the given name.
    Trainable(&'e str),
}

/// Parameter handles of one LSTM cell.
#[derive(Clone, Copy, Debug)]
pub struct CellWeights {
    /// `input x 4H`, gate order input, forget, candidate, output.
    pub wx: Var,
    /// `H x 4H`.
    pub wh: Var,
    /// `1 x 4H`.
    pub b: Var,
}

/// One LSTM step on a batch of rows.
pub fn lstm_cell(
    tape: &mut Tape<'_>,
    x: Var,
    h_prev: Var,
    c_prev: Var,
    w: CellWeights,
    hidden: usize,
) -> Result<(Var, Var)> {
    let zx = tape.matmul(x, w.wx)?;
    let zh = tape.matmul(h_prev, w.wh)?;
    let z = tape.add(zx, zh)?;
    let z = tape.add_row(z, w.b)?;
    let i = tape.slice_cols(z, 0, hidden)?;
    let f = tape.slice_cols(z, hidden, hidden)?;
    let g = tape.slice_cols(z, 2 * hidden, hidden)?;
    let o = tape.slice_cols(z, 3 * hidden, hidden)?;
    let i = tape.sigmoid(i)?;
    let f = tape.sigmoid(f)?;
    let g = tape.tanh(g)?;
    let o = tape.sigmoid(o)?;
    let keep = tape.mul(f, c_prev)?;
    let write = tape.mul(i, g)?;
    let c = tape.add(keep, write)?;
    let tc = tape.tanh(c)?;
    let h = tape.mul(o, tc)?;
    Ok((h, c))
}

#[derive(Clone, Debug)]
pub struct BiLstm {
    pub config: BiLstmConfig,
    prefix: String,
}

#[derive(Clone, Copy)]
enum Direction {
    Forward,
    Backward,
}

impl Direction {
    fn tag(self) -> &'static str {
        match self {
            Direction::Forward => "fwd",
            Direction::Backward => "bwd",
        }
    }
}

impl BiLstm {
    pub fn new(config: BiLstmConfig, prefix: impl Into<String>) -> Self {
        Self {
            config,
            prefix: prefix.into(),
        }
    }

    pub fn output_dim(&self) -> usize {
        2 * self.config.hidden
    }

    fn name(&self, layer: usize, dir: Direction, part: &str) -> String {
        format!("{}.l{layer}.{}.{part}", self.prefix, dir.tag())
    }

    fn layer_input_dim(&self, layer: usize) -> usize {
        if layer == 0 {
            self.config.input_dim
        } else {
            2 * self.config.hidden
        }
    }

    /// Uniform ±1/√H weights, zero biases except the forget gate at +1.
    pub fn init_params<R: Rng + ?Sized>(&self, params: &mut ModelParams, rng: &mut R) {
        let h = self.config.hidden;
        let bound = 1.0 / (h as f64).sqrt();
        for layer in 0..self.config.layers {
            for dir in [Direction::Forward, Direction::Backward] {
                let input = self.layer_input_dim(layer);
                params.insert(self.name(layer, dir, "wx"), Tensor::uniform(&[input, 4 * h], bound, rng));
                params.insert(self.name(layer, dir, "wh"), Tensor::uniform(&[h, 4 * h], bound, rng));
                let mut b = Tensor::zeros(&[1, 4 * h]);
                b.data_mut()[h..2 * h].fill(1.0);
                params.insert(self.name(layer, dir, "b"), b);
            }
        }
    }

    fn cell_weights(&self, tape: &mut Tape<'_>, layer: usize, dir: Direction) -> Result<CellWeights> {
        Ok(CellWeights {
            wx: tape.param(&self.name(layer, dir, "wx"))?,
            wh: tape.param(&self.name(layer, dir, "wh"))?,
            b: tape.param(&self.name(layer, dir, "b"))?,
        })
    }

    fn step_inputs(
        &self,
        tape: &mut Tape<'_>,
        embeddings: EmbeddingSource<'_>,
        sentences: &[&EncodedSentence],
        steps: usize,
    ) -> Result<Vec<Var>> {
        let table_var = match embeddings {
            EmbeddingSource::Trainable(name) => Some(tape.param(name)?),
            EmbeddingSource::Frozen(_) => None,
        };
        let dim = self.config.input_dim;
        let mut inputs = Vec::with_capacity(steps);
        for t in 0..steps {
            let ids: Vec<usize> = sentences
                .iter()
                .map(|s| if t < s.len { s.indices[t] } else { crate::text::PAD })
                .collect();
            let x = match (embeddings, table_var) {
                (EmbeddingSource::Frozen(table), _) => {
                    if table.cols() != dim {
                        return Err(Error::ShapeMismatch {
                            op: "embedding",
                            left: table.shape().to_vec(),
                            right: vec![dim],
                        });
                    }
                    let mut data = Vec::with_capacity(ids.len() * dim);
                    for &id in &ids {
                        if id >= table.rows() {
                            return Err(Error::InvalidData(format!("token index {id} outside embedding table")));
                        }
                        data.extend_from_slice(table.row_slice(id));
                    }
                    tape.constant(Tensor::matrix(ids.len(), dim, data)?)
                }
                (EmbeddingSource::Trainable(_), Some(var)) => tape.gather_rows(var, &ids)?,
                (EmbeddingSource::Trainable(_), None) => unreachable!(),
            };
            inputs.push(x);
        }
        Ok(inputs)
    }

    fn run_direction(
        &self,
        tape: &mut Tape<'_>,
        inputs: &[Var],
        active: &[Vec<bool>],
        w: CellWeights,
        dir: Direction,
    ) -> Result<Vec<Var>> {
        let n = active.first().map_or(0, Vec::len);
        let h_dim = self.config.hidden;
        let mut h = tape.constant(Tensor::zeros(&[n, h_dim]));
        let mut c = tape.constant(Tensor::zeros(&[n, h_dim]));
        let steps = inputs.len();
        let mut outputs = vec![h; steps];
        let order: Box<dyn Iterator<Item = usize>> = match dir {
            Direction::Forward => Box::new(0..steps),
            Direction::Backward => Box::new((0..steps).rev()),
        };
        for t in order {
            let (h_new, c_new) = lstm_cell(tape, inputs[t], h, c, w, h_dim)?;
            h = tape.blend_rows(h_new, h, &active[t])?;
            c = tape.blend_rows(c_new, c, &active[t])?;
            outputs[t] = h;
        }
        Ok(outputs)
    }

    /// Encode a batch of sentences into an `n x 2H` matrix: row `i` is the
    /// top layer's forward state at the last real token of sentence `i`
    /// concatenated with its backward state at the first token.
    pub fn encode_batch(
        &self,
        tape: &mut Tape<'_>,
        embeddings: EmbeddingSource<'_>,
        sentences: &[&EncodedSentence],
        mode: &mut Mode<'_>,
    ) -> Result<Var> {
        if sentences.iter().any(|s| s.len == 0 || s.len > s.indices.len()) {
            return Err(Error::EmptySentence);
        }
        let steps = sentences.iter().map(|s| s.len).max().unwrap_or(0);
        let active: Vec<Vec<bool>> = (0..steps)
            .map(|t| sentences.iter().map(|s| t < s.len).collect())
            .collect();

        let mut inputs = self.step_inputs(tape, embeddings, sentences, steps)?;
        let mut last_fwd = None;
        let mut first_bwd = None;
        for layer in 0..self.config.layers {
            let wf = self.cell_weights(tape, layer, Direction::Forward)?;
            let wb = self.cell_weights(tape, layer, Direction::Backward)?;
            let fwd = self.run_direction(tape, &inputs, &active, wf, Direction::Forward)?;
            let bwd = self.run_direction(tape, &inputs, &active, wb, Direction::Backward)?;
            last_fwd = fwd.last().copied();
            first_bwd = bwd.first().copied();
            if layer + 1 < self.config.layers {
                let mut next = Vec::with_capacity(steps);
                for t in 0..steps {
                    let out = tape.concat_cols(&[fwd[t], bwd[t]])?;
                    let out = match mode {
                        Mode::Train(rng) => tape.dropout(out, self.config.dropout, true, &mut **rng)?,
                        Mode::Eval => out,
                    };
                    next.push(out);
                }
                inputs = next;
            }
        }
        match (last_fwd, first_bwd) {
            (Some(f), Some(b)) => tape.concat_cols(&[f, b]),
            _ => Err(Error::EmptySentence),
        }
    }

    /// Encode one sentence outside of any larger computation.
    pub fn encode_sentence(
        &self,
        params: &ModelParams,
        embeddings: EmbeddingSource<'_>,
        sentence: &EncodedSentence,
        mode: &mut Mode<'_>,
    ) -> Result<Tensor> {
        let mut tape = Tape::with_params(params);
        let v = self.encode_batch(&mut tape, embeddings, &[sentence], mode)?;
        Ok(tape.value(v).clone())
    }
}
