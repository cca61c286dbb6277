//! GraphSAGE message passing with max-pooling aggregation, max readout and
//! the softmax classifier.
//!
//! For every node `v` at depth `k`:
//!
//! ```text
//! agg_v = max_{u in N(v)} act(h_u W_pool + b_pool)
//! h_v   = act([h_v, agg_v] W)
//! ```
//!
//! A node without neighbors (the single-node graph) aggregates to the zero
//! vector.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::Topology;
use crate::numerics::{Activation, ModelParams, Tape, Tensor, Var};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SageConfig {
    /// Output width of each layer; its length is the depth `K`.
    pub layer_dims: Vec<usize>,
    pub activation: Activation,
    /// Scale node states to unit norm after every layer.
    pub normalize: bool,
}

impl Default for SageConfig {
    fn default() -> Self {
        Self {
            layer_dims: vec![256, 256],
            activation: Activation::Relu,
            normalize: false,
        }
    }
}

impl SageConfig {
    pub fn depth(&self) -> usize {
        self.layer_dims.len()
    }

    pub fn output_dim(&self, input_dim: usize) -> usize {
        self.layer_dims.last().copied().unwrap_or(input_dim)
    }

    pub fn validate(&self) -> Result<()> {
        if self.layer_dims.is_empty() {
            return Err(Error::Config("graph depth K must be >= 1".into()));
        }
        if self.layer_dims.contains(&0) {
            return Err(Error::Config("graph layer width must be > 0".into()));
        }
        Ok(())
    }
}

/// Handles for one layer's weights.
#[derive(Clone, Copy, Debug)]
pub struct SageLayerVars {
    pub pool_w: Var,
    pub pool_b: Var,
    pub w: Var,
}

/// Max-pooling aggregation for all nodes at once: row `v` of the result is
/// the elementwise max of `act(h_u W_pool + b_pool)` over `u` in
/// `neighbors[v]`, or zeros when `neighbors[v]` is empty.
pub fn aggregate_pool(
    tape: &mut Tape<'_>,
    h: Var,
    neighbors: &[Vec<usize>],
    pool_w: Var,
    pool_b: Var,
    act: Activation,
) -> Result<Var> {
    let z = tape.matmul(h, pool_w)?;
    let z = tape.add_row(z, pool_b)?;
    let pooled = tape.activate(z, act)?;
    tape.max_rows(pooled, neighbors)
}

/// One synchronous update of every node from the previous states.
pub fn sage_layer(
    tape: &mut Tape<'_>,
    h: Var,
    neighbors: &[Vec<usize>],
    layer: SageLayerVars,
    act: Activation,
    normalize: bool,
) -> Result<Var> {
    if tape.value(h).rows() != neighbors.len() {
        return Err(Error::ShapeMismatch {
            op: "sage_layer",
            left: tape.value(h).shape().to_vec(),
            right: vec![neighbors.len()],
        });
    }
    let agg = aggregate_pool(tape, h, neighbors, layer.pool_w, layer.pool_b, act)?;
    let joined = tape.concat_cols(&[h, agg])?;
    let z = tape.matmul(joined, layer.w)?;
    let out = tape.activate(z, act)?;
    if normalize {
        tape.normalize_rows(out)
    } else {
        Ok(out)
    }
}

/// Elementwise max over all node states, or just the root's state when
/// `root_only` is set (a diagnostic mode).
pub fn readout(tape: &mut Tape<'_>, h: Var, root_only: bool) -> Result<Var> {
    let n = tape.value(h).rows();
    if root_only {
        tape.gather_rows(h, &[0])
    } else {
        tape.max_rows(h, &[(0..n).collect()])
    }
}

/// Classifier weights; `hidden` adds one ReLU layer before the output.
#[derive(Clone, Copy, Debug)]
pub struct ClassifierVars {
    pub v: Var,
    pub b: Var,
    pub hidden: Option<(Var, Var)>,
}

/// `softmax([p, e, extra] V + b)`.
pub fn classify(
    tape: &mut Tape<'_>,
    p: Var,
    e: Var,
    extra: Option<Var>,
    cls: ClassifierVars,
) -> Result<Var> {
    let mut parts = vec![p, e];
    parts.extend(extra);
    let mut x = tape.concat_cols(&parts)?;
    if let Some((w, b)) = cls.hidden {
        let z = tape.matmul(x, w)?;
        let z = tape.add_row(z, b)?;
        x = tape.relu(z)?;
    }
    let logits = tape.matmul(x, cls.v)?;
    let logits = tape.add_row(logits, cls.b)?;
    tape.softmax(logits)
}

/// Parameter set for one graph kind.
#[derive(Clone, Debug)]
pub struct SageTower {
    prefix: String,
    input_dim: usize,
    config: SageConfig,
}

impl SageTower {
    pub fn new(prefix: impl Into<String>, input_dim: usize, config: SageConfig) -> Self {
        Self {
            prefix: prefix.into(),
            input_dim,
            config,
        }
    }

    pub fn output_dim(&self) -> usize {
        self.config.output_dim(self.input_dim)
    }

    fn dims(&self, layer: usize) -> (usize, usize) {
        let d_in = if layer == 0 {
            self.input_dim
        } else {
            self.config.layer_dims[layer - 1]
        };
        (d_in, self.config.layer_dims[layer])
    }

    fn name(&self, layer: usize, part: &str) -> String {
        format!("{}.l{layer}.{part}", self.prefix)
    }

    pub fn init_params<R: Rng + ?Sized>(&self, params: &mut ModelParams, rng: &mut R) {
        for layer in 0..self.config.depth() {
            let (d_in, d_out) = self.dims(layer);
            let pool_bound = (6.0 / (2 * d_in) as f64).sqrt();
            let w_bound = (6.0 / (2 * d_in + d_out) as f64).sqrt();
            params.insert(self.name(layer, "pool_w"), Tensor::uniform(&[d_in, d_in], pool_bound, rng));
            params.insert(self.name(layer, "pool_b"), Tensor::zeros(&[1, d_in]));
            params.insert(self.name(layer, "w"), Tensor::uniform(&[2 * d_in, d_out], w_bound, rng));
        }
    }

    pub fn layer_vars(&self, tape: &mut Tape<'_>, layer: usize) -> Result<SageLayerVars> {
        Ok(SageLayerVars {
            pool_w: tape.param(&self.name(layer, "pool_w"))?,
            pool_b: tape.param(&self.name(layer, "pool_b"))?,
            w: tape.param(&self.name(layer, "w"))?,
        })
    }

    /// Run all `K` layers from the initial states `h0`.
    pub fn forward(&self, tape: &mut Tape<'_>, h0: Var, topology: &Topology) -> Result<Var> {
        let neighbors = topology.neighbors();
        let mut h = h0;
        for layer in 0..self.config.depth() {
            let vars = self.layer_vars(tape, layer)?;
            h = sage_layer(tape, h, &neighbors, vars, self.config.activation, self.config.normalize)?;
        }
        Ok(h)
    }
}

/// Value-level max-pooling aggregate of a non-empty neighbor set.
pub fn aggregate_pool_values(
    neighbor_states: &[Vec<f64>],
    w_pool: &Tensor,
    b_pool: &Tensor,
    act: Activation,
) -> Result<Vec<f64>> {
    if neighbor_states.is_empty() {
        return Err(Error::InvalidData("empty neighbor set in a multi-node graph".into()));
    }
    let mut tape = Tape::new();
    let h = tape.constant(Tensor::from_rows(neighbor_states)?);
    let w = tape.constant(w_pool.clone());
    let b = tape.constant(b_pool.clone());
    let out = aggregate_pool(&mut tape, h, &[(0..neighbor_states.len()).collect()], w, b, act)?;
    Ok(tape.value(out).data().to_vec())
}

/// Value-level readout over all rows of `states`.
pub fn readout_values(states: &Tensor) -> Result<Vec<f64>> {
    let mut tape = Tape::new();
    let h = tape.constant(states.clone());
    let out = readout(&mut tape, h, false)?;
    Ok(tape.value(out).data().to_vec())
}

/// Value-level classifier over `[p, e]`.
pub fn classify_values(p: &[f64], e: &[f64], v: &Tensor, b: &Tensor) -> Result<Vec<f64>> {
    let mut tape = Tape::new();
    let p = tape.constant(Tensor::row(p.to_vec()));
    let e = tape.constant(Tensor::row(e.to_vec()));
    let cls = ClassifierVars {
        v: tape.constant(v.clone()),
        b: tape.constant(b.clone()),
        hidden: None,
    };
    let out = classify(&mut tape, p, e, None, cls)?;
    Ok(tape.value(out).data().to_vec())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{evidence_topology, GraphKind};
    use crate::numerics::{grad_check, Gradients, DEFAULT_EPS};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn eye(n: usize) -> Tensor {
        let mut t = Tensor::zeros(&[n, n]);
        for i in 0..n {
            t.data_mut()[i * n + i] = 1.0;
        }
        t
    }

    #[test]
    fn single_nonnegative_neighbor_with_identity_passes_through() {
        let out = aggregate_pool_values(&[vec![0.5, 2.0]], &eye(2), &Tensor::zeros(&[1, 2]), Activation::Relu).unwrap();
        assert_eq!(out, vec![0.5, 2.0]);
    }

    #[test]
    fn pool_of_two_neighbors() {
        // relu((1,-2)) = (1,0), relu((0,3)) = (0,3); max = (1,3)
        let n = vec![vec![1.0, -2.0], vec![0.0, 3.0]];
        let out = aggregate_pool_values(&n, &eye(2), &Tensor::zeros(&[1, 2]), Activation::Relu).unwrap();
        assert_eq!(out, vec![1.0, 3.0]);
        let rev: Vec<_> = n.iter().rev().cloned().collect();
        let out2 = aggregate_pool_values(&rev, &eye(2), &Tensor::zeros(&[1, 2]), Activation::Relu).unwrap();
        assert_eq!(out, out2);
    }

    #[test]
    fn empty_neighbors_value_api_errors() {
        assert!(aggregate_pool_values(&[], &eye(2), &Tensor::zeros(&[1, 2]), Activation::Relu).is_err());
    }

    #[test]
    fn readout_examples() {
        assert_eq!(readout_values(&Tensor::row(vec![0.3, -0.2])).unwrap(), vec![0.3, -0.2]);
        let s = Tensor::matrix(2, 2, vec![1.0, -1.0, 0.0, 2.0]).unwrap();
        assert_eq!(readout_values(&s).unwrap(), vec![1.0, 2.0]);
        let swapped = Tensor::matrix(2, 2, vec![0.0, 2.0, 1.0, -1.0]).unwrap();
        assert_eq!(readout_values(&swapped).unwrap(), vec![1.0, 2.0]);
    }

    #[test]
    fn classify_examples() {
        let v = Tensor::zeros(&[4, 2]);
        let out = classify_values(&[1.0, 2.0], &[3.0, 4.0], &v, &Tensor::zeros(&[1, 2])).unwrap();
        assert_eq!(out, vec![0.5, 0.5]);
        let out = classify_values(&[1.0, 2.0], &[3.0, 4.0], &v, &Tensor::row(vec![10.0, -10.0])).unwrap();
        assert!(out[0] > 0.9999);

        // Hand evaluation: logits = [p, e] V + b.
        let v = Tensor::matrix(4, 2, vec![1.0, 0.0, 0.0, 1.0, 0.5, 0.5, -1.0, 2.0]).unwrap();
        let b = Tensor::row(vec![0.1, -0.1]);
        let (p, e) = ([0.2, -0.4], [1.0, 0.3]);
        let l0: f64 = 0.2 * 1.0 + -0.4 * 0.0 + 1.0 * 0.5 - 0.3 + 0.1;
        let l1: f64 = 0.2 * 0.0 + -0.4 * 1.0 + 1.0 * 0.5 + 0.3 * 2.0 - 0.1;
        let z = l0.exp() + l1.exp();
        let out = classify_values(&p, &e, &v, &b).unwrap();
        assert!((out[0] - l0.exp() / z).abs() < 1e-15);
        assert!((out[1] - l1.exp() / z).abs() < 1e-15);
        assert!((out.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    fn const_layer(tape: &mut Tape<'_>, pool_w: &Tensor, pool_b: &Tensor, w: &Tensor) -> SageLayerVars {
        SageLayerVars {
            pool_w: tape.constant(pool_w.clone()),
            pool_b: tape.constant(pool_b.clone()),
            w: tape.constant(w.clone()),
        }
    }

    #[test]
    fn single_node_layer_uses_zero_aggregate() {
        let pool_w = Tensor::matrix(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let pool_b = Tensor::row(vec![1.0, 1.0]);
        let w = Tensor::matrix(4, 2, vec![1.0, -1.0, 0.5, 0.5, 7.0, 7.0, 7.0, 7.0]).unwrap();
        let mut tape = Tape::new();
        let h = tape.constant(Tensor::row(vec![1.0, 2.0]));
        let layer = const_layer(&mut tape, &pool_w, &pool_b, &w);
        let out = sage_layer(&mut tape, h, &[vec![]], layer, Activation::Relu, false).unwrap();
        // [1, 2, 0, 0] W = (1*1 + 2*0.5, -1 + 1) = (2, 0)
        assert_eq!(tape.value(out).data(), &[2.0, 0.0]);
    }

    #[test]
    fn two_node_path_matches_hand_oracle() {
        let pool_w = Tensor::matrix(2, 2, vec![0.5, -1.0, 1.0, 0.25]).unwrap();
        let pool_b = Tensor::row(vec![0.1, 0.0]);
        let w = Tensor::matrix(4, 2, vec![1.0, 0.0, 0.0, 1.0, 0.5, -0.5, -0.25, 1.0]).unwrap();
        let h0 = [[1.0, 2.0], [-1.0, 0.5]];

        // Oracle: direct evaluation per node.
        let relu = |x: f64| x.max(0.0);
        let pool = |h: [f64; 2]| {
            [
                relu(h[0] * 0.5 + h[1] * 1.0 + 0.1),
                relu(-h[0] + h[1] * 0.25 + 0.0),
            ]
        };
        let update = |h: [f64; 2], a: [f64; 2]| {
            let x = [h[0], h[1], a[0], a[1]];
            let col = |c: usize| (0..4).map(|r| x[r] * w.get(r, c)).sum::<f64>();
            [relu(col(0)), relu(col(1))]
        };
        let expected0 = update(h0[0], pool(h0[1]));
        let expected1 = update(h0[1], pool(h0[0]));

        let mut tape = Tape::new();
        let h = tape.constant(Tensor::matrix(2, 2, vec![1.0, 2.0, -1.0, 0.5]).unwrap());
        let layer = const_layer(&mut tape, &pool_w, &pool_b, &w);
        let topo = Topology {
            kind: GraphKind::Conversation,
            n_nodes: 2,
            edges: vec![(0, 1)],
        };
        let out = sage_layer(&mut tape, h, &topo.neighbors(), layer, Activation::Relu, false).unwrap();
        let got = tape.value(out);
        for c in 0..2 {
            assert!((got.get(0, c) - expected0[c]).abs() < 1e-15);
            assert!((got.get(1, c) - expected1[c]).abs() < 1e-15);
        }
    }

    #[test]
    fn two_layer_gradient_matches_finite_differences() {
        let tower = SageTower::new(
            "t",
            3,
            SageConfig {
                layer_dims: vec![4, 3],
                activation: Activation::Tanh,
                normalize: false,
            },
        );
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut params = ModelParams::new();
        tower.init_params(&mut params, &mut rng);
        params.insert("h0", Tensor::uniform(&[4, 3], 1.0, &mut rng));
        let topo = evidence_topology(3);
        let f = |p: &ModelParams| -> Result<(f64, Gradients)> {
            let mut tape = Tape::with_params(p);
            let h0 = tape.param("h0")?;
            let h = tower.forward(&mut tape, h0, &topo)?;
            let r = readout(&mut tape, h, false)?;
            let s = tape.sum_all(r)?;
            let back = tape.backward(s)?;
            Ok((tape.value(s).data()[0], back.param_grads(&tape)?))
        };
        let r = grad_check(f, &params, DEFAULT_EPS, 200, 4).unwrap();
        assert!(r.max_rel_error < 1e-4, "{r:?}");
    }
}
