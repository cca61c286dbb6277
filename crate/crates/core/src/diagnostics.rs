//! Gradient-check suite over every tape operation, the LSTM cell, a
//! GraphSAGE layer and the full model loss on a toy event.
//!
//! Each op case feeds randomly shaped (at most 8 x 8) parameters through the
//! op, then reduces with a fixed random weighting so that no gradient is
//! trivially zero.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::{Event, EvidenceRecord, EvidenceSentence, Post, Relation, RumorLabel};
use crate::encoder::{lstm_cell, BiLstmConfig, CellWeights, Mode};
use crate::error::Result;
use crate::graph::evidence_topology;
use crate::model::{prepare_event, PrepareOptions, RdmConfig, RdmModel};
use crate::numerics::{grad_check, Activation, GradCheckReport, Gradients, ModelParams, Tape, Tensor, Var, DEFAULT_EPS};
use crate::sage::{sage_layer, SageConfig, SageLayerVars};
use crate::text::{build_vocab, clean_tokens, EmbeddingTable};

pub const SUITE_TOLERANCE: f64 = 1e-4;

#[derive(Clone, Debug)]
pub struct SuiteEntry {
    pub name: &'static str,
    pub report: GradCheckReport,
}

type Build = fn(&mut Tape<'_>, &[Var], &mut ChaCha8Rng) -> Result<Var>;

struct OpCase {
    name: &'static str,
    /// Shapes of the inputs given the sampled `(rows, cols, inner)`.
    shapes: fn(usize, usize, usize) -> Vec<[usize; 2]>,
    build: Build,
}

fn same2(r: usize, c: usize, _: usize) -> Vec<[usize; 2]> {
    vec![[r, c], [r, c]]
}

fn one(r: usize, c: usize, _: usize) -> Vec<[usize; 2]> {
    vec![[r, c]]
}

fn op_cases() -> Vec<OpCase> {
    vec![
        OpCase {
            name: "matmul",
            shapes: |r, c, k| vec![[r, k], [k, c]],
            build: |t, v, _| t.matmul(v[0], v[1]),
        },
        OpCase { name: "add", shapes: same2, build: |t, v, _| t.add(v[0], v[1]) },
        OpCase { name: "sub", shapes: same2, build: |t, v, _| t.sub(v[0], v[1]) },
        OpCase { name: "mul", shapes: same2, build: |t, v, _| t.mul(v[0], v[1]) },
        OpCase {
            name: "add_row",
            shapes: |r, c, _| vec![[r, c], [1, c]],
            build: |t, v, _| t.add_row(v[0], v[1]),
        },
        OpCase { name: "scale", shapes: one, build: |t, v, _| t.scale(v[0], -1.7) },
        OpCase { name: "abs", shapes: one, build: |t, v, _| t.abs(v[0]) },
        OpCase { name: "sigmoid", shapes: one, build: |t, v, _| t.sigmoid(v[0]) },
        OpCase { name: "tanh", shapes: one, build: |t, v, _| t.tanh(v[0]) },
        OpCase { name: "relu", shapes: one, build: |t, v, _| t.relu(v[0]) },
        OpCase {
            name: "concat_cols",
            shapes: |r, c, k| vec![[r, c], [r, k]],
            build: |t, v, _| t.concat_cols(&[v[0], v[1]]),
        },
        OpCase {
            name: "slice_cols",
            shapes: |r, c, _| vec![[r, c + 1]],
            build: |t, v, rng| {
                let cols = t.value(v[0]).cols();
                let start = rng.random_range(0..cols);
                let len = rng.random_range(1..=cols - start);
                t.slice_cols(v[0], start, len)
            },
        },
        OpCase {
            name: "gather_rows",
            shapes: one,
            build: |t, v, rng| {
                let rows = t.value(v[0]).rows();
                let idx: Vec<usize> = (0..rng.random_range(1..=8)).map(|_| rng.random_range(0..rows)).collect();
                t.gather_rows(v[0], &idx)
            },
        },
        OpCase {
            name: "blend_rows",
            shapes: same2,
            build: |t, v, rng| {
                let rows = t.value(v[0]).rows();
                let mask: Vec<bool> = (0..rows).map(|_| rng.random_bool(0.5)).collect();
                t.blend_rows(v[0], v[1], &mask)
            },
        },
        OpCase {
            name: "max_rows",
            shapes: one,
            build: |t, v, rng| {
                let rows = t.value(v[0]).rows();
                let groups: Vec<Vec<usize>> = (0..rng.random_range(1..=4))
                    .map(|_| (0..rows).filter(|_| rng.random_bool(0.6)).collect())
                    .collect();
                t.max_rows(v[0], &groups)
            },
        },
        OpCase { name: "softmax", shapes: one, build: |t, v, _| t.softmax(v[0]) },
        OpCase {
            name: "cross_entropy",
            shapes: one,
            build: |t, v, rng| {
                let (rows, cols) = (t.value(v[0]).rows(), t.value(v[0]).cols());
                let labels: Vec<usize> = (0..rows).map(|_| rng.random_range(0..cols)).collect();
                let p = t.softmax(v[0])?;
                t.cross_entropy(p, &labels)
            },
        },
        OpCase {
            name: "dropout",
            shapes: one,
            build: |t, v, rng| t.dropout(v[0], 0.3, true, rng),
        },
        OpCase { name: "normalize_rows", shapes: one, build: |t, v, _| t.normalize_rows(v[0]) },
        OpCase { name: "sum_all", shapes: one, build: |t, v, _| t.sum_all(v[0]) },
    ]
}

/// Values bounded away from zero so `abs` and `relu` stay differentiable at
/// the finite-difference step.
fn random_input(shape: [usize; 2], rng: &mut ChaCha8Rng) -> Tensor {
    let data = (0..shape[0] * shape[1])
        .map(|_| {
            let m = rng.random_range(0.1..1.5);
            if rng.random_bool(0.5) { m } else { -m }
        })
        .collect();
    Tensor::new(shape.to_vec(), data).expect("shape matches data")
}

fn weighted_sum(tape: &mut Tape<'_>, out: Var, weights: &Tensor) -> Result<Var> {
    let w = tape.constant(weights.clone());
    let prod = tape.mul(out, w)?;
    tape.sum_all(prod)
}

fn op_entry(case: &OpCase, seed: u64) -> Result<SuiteEntry> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (r, c, k) = (rng.random_range(1..=8), rng.random_range(1..=7), rng.random_range(1..=8));
    let mut params = ModelParams::new();
    for (i, s) in (case.shapes)(r, c, k).into_iter().enumerate() {
        params.insert(format!("x{i}"), random_input(s, &mut rng));
    }
    let build_seed: u64 = rng.random();
    // The op's output shape fixes the weighting; probe it once.
    let out_shape = {
        let mut tape = Tape::with_params(&params);
        let vars = inputs(&mut tape, &params)?;
        let out = (case.build)(&mut tape, &vars, &mut ChaCha8Rng::seed_from_u64(build_seed))?;
        tape.value(out).shape().to_vec()
    };
    let weights = Tensor::uniform(&out_shape, 1.0, &mut rng);
    let f = |p: &ModelParams| -> Result<(f64, Gradients)> {
        let mut tape = Tape::with_params(p);
        let vars = inputs(&mut tape, p)?;
        let out = (case.build)(&mut tape, &vars, &mut ChaCha8Rng::seed_from_u64(build_seed))?;
        let loss = weighted_sum(&mut tape, out, &weights)?;
        let back = tape.backward(loss)?;
        Ok((tape.value(loss).data()[0], back.param_grads(&tape)?))
    };
    Ok(SuiteEntry {
        name: case.name,
        report: grad_check(f, &params, DEFAULT_EPS, 200, seed)?,
    })
}

fn inputs(tape: &mut Tape<'_>, params: &ModelParams) -> Result<Vec<Var>> {
    params.names().map(|n| tape.param(n)).collect()
}

fn lstm_entry(seed: u64) -> Result<SuiteEntry> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (n, d, h) = (3, 4, 5);
    let mut params = ModelParams::new();
    params.insert("wx", Tensor::uniform(&[d, 4 * h], 0.5, &mut rng));
    params.insert("wh", Tensor::uniform(&[h, 4 * h], 0.5, &mut rng));
    params.insert("b", Tensor::uniform(&[1, 4 * h], 0.5, &mut rng));
    let xs: Vec<Tensor> = (0..3).map(|_| Tensor::uniform(&[n, d], 1.0, &mut rng)).collect();
    let weights = Tensor::uniform(&[n, h], 1.0, &mut rng);
    let f = |p: &ModelParams| -> Result<(f64, Gradients)> {
        let mut tape = Tape::with_params(p);
        let w = CellWeights {
            wx: tape.param("wx")?,
            wh: tape.param("wh")?,
            b: tape.param("b")?,
        };
        let mut hs = tape.constant(Tensor::zeros(&[n, h]));
        let mut cs = tape.constant(Tensor::zeros(&[n, h]));
        for x in &xs {
            let x = tape.constant(x.clone());
            (hs, cs) = lstm_cell(&mut tape, x, hs, cs, w, h)?;
        }
        let loss = weighted_sum(&mut tape, hs, &weights)?;
        let back = tape.backward(loss)?;
        Ok((tape.value(loss).data()[0], back.param_grads(&tape)?))
    };
    Ok(SuiteEntry {
        name: "lstm_cell_unrolled",
        report: grad_check(f, &params, DEFAULT_EPS, 200, seed)?,
    })
}

fn sage_entry(seed: u64) -> Result<SuiteEntry> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = 4;
    let mut params = ModelParams::new();
    params.insert("h", random_input([4, d], &mut rng));
    params.insert("pool_w", Tensor::uniform(&[d, d], 0.8, &mut rng));
    params.insert("pool_b", Tensor::uniform(&[1, d], 0.2, &mut rng));
    params.insert("w", Tensor::uniform(&[2 * d, 3], 0.8, &mut rng));
    let neighbors = evidence_topology(3).neighbors();
    let weights = Tensor::uniform(&[4, 3], 1.0, &mut rng);
    let f = |p: &ModelParams| -> Result<(f64, Gradients)> {
        let mut tape = Tape::with_params(p);
        let h = tape.param("h")?;
        let layer = SageLayerVars {
            pool_w: tape.param("pool_w")?,
            pool_b: tape.param("pool_b")?,
            w: tape.param("w")?,
        };
        let out = sage_layer(&mut tape, h, &neighbors, layer, Activation::Tanh, false)?;
        let loss = weighted_sum(&mut tape, out, &weights)?;
        let back = tape.backward(loss)?;
        Ok((tape.value(loss).data()[0], back.param_grads(&tape)?))
    };
    Ok(SuiteEntry {
        name: "sage_layer",
        report: grad_check(f, &params, DEFAULT_EPS, 200, seed)?,
    })
}

fn post(id: &str, text: &str, t: i64, parent: Option<&str>) -> Post {
    Post {
        id: id.into(),
        text: text.into(),
        timestamp: t,
        parent_id: parent.map(str::to_string),
    }
}

/// Source with 3 replies and 2 evidence sentences.
pub fn toy_event() -> Event {
    Event {
        event_id: "toy".into(),
        source: post("s", "Breaking: the old bridge collapsed this morning", 0, None),
        replies: vec![
            post("r1", "is this confirmed?", 5, Some("s")),
            post("r2", "police say the bridge is fine", 9, Some("r1")),
            post("r3", "photos look fake", 12, Some("s")),
        ],
        label: RumorLabel::Rumor,
        evidence: Some(EvidenceRecord {
            sentences: vec![
                EvidenceSentence {
                    title: "Old Bridge".into(),
                    index: 0,
                    text: "The old bridge was renovated in 2015.".into(),
                },
                EvidenceSentence {
                    title: "Old Bridge".into(),
                    index: 3,
                    text: "It remains open to traffic.".into(),
                },
            ],
            relation: Relation::Refuted,
        }),
    }
}

/// Full loss on [`toy_event`] with embedding dim 8, hidden 8 and K = 2.
/// Smooth graph activations keep the finite differences free of kinks; the
/// relu op is covered by its own case.
pub fn end_to_end_entry(seed: u64, activation: Activation) -> Result<SuiteEntry> {
    let event = toy_event();
    let texts = crate::experiment::event_texts(&event);
    let vocab = build_vocab(texts.iter().map(|t| clean_tokens(t)), 100)?;
    let config = RdmConfig {
        encoder: BiLstmConfig {
            input_dim: 8,
            hidden: 8,
            layers: 2,
            dropout: 0.5,
        },
        sage: SageConfig {
            layer_dims: vec![8, 8],
            activation,
            normalize: false,
        },
        mlp_hidden: None,
        use_evidence_label: false,
        root_readout: false,
        freeze_embeddings: false,
    };
    let model = RdmModel::new(config, EmbeddingTable::random(&vocab, 8, seed))?;
    let params = model.init_params(seed);
    let prepared = prepare_event(&event, &vocab, &PrepareOptions::default())?;
    let f = |p: &ModelParams| -> Result<(f64, Gradients)> {
        let g = model.loss_and_grads(p, &prepared, &mut Mode::Eval)?;
        Ok((g.loss, g.grads))
    };
    Ok(SuiteEntry {
        name: "rdm_end_to_end",
        report: grad_check(f, &params, DEFAULT_EPS, 400, seed)?,
    })
}

/// Every case of the suite, in a fixed order.
pub fn grad_check_suite(seed: u64) -> Result<Vec<SuiteEntry>> {
    let mut out = Vec::new();
    for (i, case) in op_cases().iter().enumerate() {
        out.push(op_entry(case, seed.wrapping_add(i as u64))?);
    }
    out.push(lstm_entry(seed)?);
    out.push(sage_entry(seed)?);
    out.push(end_to_end_entry(seed, Activation::Tanh)?);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn suite_passes() {
        for seed in [1, 2, 3] {
            for e in grad_check_suite(seed).unwrap() {
                assert!(e.report.max_rel_error < SUITE_TOLERANCE, "{seed} {}: {:?}", e.name, e.report);
                assert!(e.report.coords_checked > 0, "{}", e.name);
            }
        }
    }

    #[test]
    fn end_to_end_many_seeds() {
        for seed in 10..20 {
            let e = end_to_end_entry(seed, Activation::Tanh).unwrap();
            assert!(e.report.max_rel_error < SUITE_TOLERANCE, "{seed}: {:?}", e.report);
        }
    }
}
