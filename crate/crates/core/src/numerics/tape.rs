//! Recorded computation tape with reverse-mode gradients.
//!
//! Every op appends a node holding its forward value. [`Tape::backward`]
//! walks the nodes in reverse and accumulates `d loss / d node` into each
//! parent. Parameter leaves borrow their values from a [`ModelParams`], so a
//! tape is cheap to build per example and many tapes may read the same
//! parameters concurrently.

use std::borrow::Cow;
use std::collections::HashMap;

use rand::Rng;

use crate::error::{Error, Result};
use crate::numerics::tensor::matmul_into;
use crate::numerics::{Gradients, ModelParams, Tensor};

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    Param(String),
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    AddRow(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Abs(Var),
    Sigmoid(Var),
    Tanh(Var),
    Relu(Var),
    ConcatCols(Vec<Var>),
    SliceCols(Var, usize),
    GatherRows(Var, Vec<usize>),
    Blend {
        new: Var,
        old: Var,
        take_new: Vec<bool>,
    },
    MaxRows {
        src: Var,
        argmax: Vec<Option<usize>>,
    },
    Softmax(Var),
    CrossEntropy {
        probs: Var,
        labels: Vec<usize>,
    },
    Dropout {
        x: Var,
        mask: Vec<f64>,
    },
    NormalizeRows(Var),
    SumAll(Var),
}

struct Node<'a> {
    value: Cow<'a, Tensor>,
    op: Op,
}

/// Elementwise nonlinearity selector.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Tanh,
    Sigmoid,
}

impl std::fmt::Display for Activation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Activation::Relu => "relu",
            Activation::Tanh => "tanh",
            Activation::Sigmoid => "sigmoid",
        };
        f.write_str(s)
    }
}

pub struct Tape<'a> {
    nodes: Vec<Node<'a>>,
    params: Option<&'a ModelParams>,
    param_vars: HashMap<String, Var>,
}

/// Result of [`Tape::backward`]: the gradient of the loss with respect to
/// every node that the loss depends on.
pub struct Backward {
    per_node: Vec<Option<Tensor>>,
    params: Vec<(String, usize)>,
}

impl Backward {
    pub fn wrt(&self, var: Var) -> Option<&Tensor> {
        self.per_node.get(var.0).and_then(Option::as_ref)
    }

    /// Parameter gradients; parameters the loss does not touch get zeros.
    pub fn param_grads(&self, tape: &Tape<'_>) -> Result<Gradients> {
        let mut grads = Gradients::new();
        for (name, idx) in &self.params {
            match &self.per_node[*idx] {
                Some(g) => grads.add(name, g)?,
                None => grads.add(name, &Tensor::zeros(tape.nodes[*idx].value.shape()))?,
            }
        }
        Ok(grads)
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

const NORM_FLOOR: f64 = 1e-12;

impl<'a> Tape<'a> {
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            params: None,
            param_vars: HashMap::new(),
        }
    }

    /// A tape whose [`Tape::param`] leaves read from `params`.
    pub fn with_params(params: &'a ModelParams) -> Self {
        Self {
            nodes: Vec::new(),
            params: Some(params),
            param_vars: HashMap::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, var: Var) -> &Tensor {
        &self.nodes[var.0].value
    }

    fn push(&mut self, value: Tensor, op: Op, name: &'static str) -> Result<Var> {
        if !value.is_finite() {
            return Err(Error::NonFinite(name));
        }
        self.nodes.push(Node {
            value: Cow::Owned(value),
            op,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    pub fn constant(&mut self, value: Tensor) -> Var {
        self.nodes.push(Node {
            value: Cow::Owned(value),
            op: Op::Leaf,
        });
        Var(self.nodes.len() - 1)
    }

    /// Leaf bound to a named parameter. Repeated calls return the same node.
    pub fn param(&mut self, name: &str) -> Result<Var> {
        if let Some(v) = self.param_vars.get(name) {
            return Ok(*v);
        }
        let params = self
            .params
            .ok_or_else(|| Error::UnknownParam(name.to_string()))?;
        let value = params.value(name)?;
        self.nodes.push(Node {
            value: Cow::Borrowed(value),
            op: Op::Param(name.to_string()),
        });
        let var = Var(self.nodes.len() - 1);
        self.param_vars.insert(name.to_string(), var);
        Ok(var)
    }

    fn shape_err(&self, op: &'static str, a: Var, b: Var) -> Error {
        Error::ShapeMismatch {
            op,
            left: self.value(a).shape().to_vec(),
            right: self.value(b).shape().to_vec(),
        }
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        let (m, k, n) = (av.rows(), av.cols(), bv.cols());
        if bv.rows() != k {
            return Err(self.shape_err("matmul", a, b));
        }
        let mut out = vec![0.0; m * n];
        matmul_into(av.data(), bv.data(), &mut out, m, k, n);
        self.push(Tensor::matrix(m, n, out)?, Op::MatMul(a, b), "matmul")
    }

    fn zip_same(
        &mut self,
        a: Var,
        b: Var,
        name: &'static str,
        f: impl Fn(f64, f64) -> f64,
        op: Op,
    ) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.shape() != bv.shape() {
            return Err(self.shape_err(name, a, b));
        }
        let data = av.data().iter().zip(bv.data()).map(|(x, y)| f(*x, *y)).collect();
        let t = Tensor::new(av.shape().to_vec(), data)?;
        self.push(t, op, name)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_same(a, b, "add", |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_same(a, b, "sub", |x, y| x - y, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_same(a, b, "mul", |x, y| x * y, Op::Mul(a, b))
    }

    /// Broadcast-add a `1 x n` row to every row of `a`.
    pub fn add_row(&mut self, a: Var, row: Var) -> Result<Var> {
        let (av, rv) = (self.value(a), self.value(row));
        if rv.rows() != 1 || rv.cols() != av.cols() {
            return Err(self.shape_err("add_row", a, row));
        }
        let n = av.cols();
        let mut data = av.data().to_vec();
        for r in 0..av.rows() {
            for (x, b) in data[r * n..(r + 1) * n].iter_mut().zip(rv.data()) {
                *x += b;
            }
        }
        let t = Tensor::matrix(av.rows(), n, data)?;
        self.push(t, Op::AddRow(a, row), "add_row")
    }

    fn map(&mut self, a: Var, name: &'static str, f: impl Fn(f64) -> f64, op: Op) -> Result<Var> {
        let av = self.value(a);
        let data = av.data().iter().map(|x| f(*x)).collect();
        let t = Tensor::new(av.shape().to_vec(), data)?;
        self.push(t, op, name)
    }

    pub fn scale(&mut self, a: Var, factor: f64) -> Result<Var> {
        self.map(a, "scale", |x| x * factor, Op::Scale(a, factor))
    }

    pub fn abs(&mut self, a: Var) -> Result<Var> {
        self.map(a, "abs", f64::abs, Op::Abs(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var> {
        self.map(a, "sigmoid", sigmoid, Op::Sigmoid(a))
    }

    pub fn tanh(&mut self, a: Var) -> Result<Var> {
        self.map(a, "tanh", f64::tanh, Op::Tanh(a))
    }

    pub fn relu(&mut self, a: Var) -> Result<Var> {
        self.map(a, "relu", |x| if x > 0.0 { x } else { 0.0 }, Op::Relu(a))
    }

    pub fn activate(&mut self, a: Var, act: Activation) -> Result<Var> {
        match act {
            Activation::Relu => self.relu(a),
            Activation::Tanh => self.tanh(a),
            Activation::Sigmoid => self.sigmoid(a),
        }
    }

    /// Concatenate along columns; all parts need the same row count.
    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let first = *parts
            .first()
            .ok_or_else(|| Error::InvalidData("concat of zero tensors".into()))?;
        let rows = self.value(first).rows();
        for &p in parts {
            if self.value(p).rows() != rows {
                return Err(self.shape_err("concat", first, p));
            }
        }
        let total: usize = parts.iter().map(|p| self.value(*p).cols()).sum();
        let mut data = Vec::with_capacity(rows * total);
        for r in 0..rows {
            for &p in parts {
                data.extend_from_slice(self.value(p).row_slice(r));
            }
        }
        let t = Tensor::matrix(rows, total, data)?;
        self.push(t, Op::ConcatCols(parts.to_vec()), "concat")
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        let av = self.value(a);
        if start + len > av.cols() {
            return Err(Error::ShapeMismatch {
                op: "slice_cols",
                left: av.shape().to_vec(),
                right: vec![start, len],
            });
        }
        let mut data = Vec::with_capacity(av.rows() * len);
        for r in 0..av.rows() {
            data.extend_from_slice(&av.row_slice(r)[start..start + len]);
        }
        let t = Tensor::matrix(av.rows(), len, data)?;
        self.push(t, Op::SliceCols(a, start), "slice_cols")
    }

    /// Select rows by index (repeats allowed).
    pub fn gather_rows(&mut self, a: Var, rows: &[usize]) -> Result<Var> {
        let av = self.value(a);
        let n = av.cols();
        let mut data = Vec::with_capacity(rows.len() * n);
        for &r in rows {
            if r >= av.rows() {
                return Err(Error::ShapeMismatch {
                    op: "gather_rows",
                    left: av.shape().to_vec(),
                    right: vec![r],
                });
            }
            data.extend_from_slice(av.row_slice(r));
        }
        let t = Tensor::matrix(rows.len(), n, data)?;
        self.push(t, Op::GatherRows(a, rows.to_vec()), "gather_rows")
    }

    /// Row `i` of the output is row `i` of `new` when `take_new[i]`, else row
    /// `i` of `old`. Used to hold recurrent state past a sequence's end.
    pub fn blend_rows(&mut self, new: Var, old: Var, take_new: &[bool]) -> Result<Var> {
        let (nv, ov) = (self.value(new), self.value(old));
        if nv.shape() != ov.shape() || take_new.len() != nv.rows() {
            return Err(self.shape_err("blend_rows", new, old));
        }
        let mut data = Vec::with_capacity(nv.len());
        for (r, &take) in take_new.iter().enumerate() {
            let src = if take { nv } else { ov };
            data.extend_from_slice(src.row_slice(r));
        }
        let t = Tensor::new(nv.shape().to_vec(), data)?;
        self.push(
            t,
            Op::Blend {
                new,
                old,
                take_new: take_new.to_vec(),
            },
            "blend_rows",
        )
    }

    /// Elementwise max over groups of rows: output row `g` holds, for every
    /// column, the maximum over the rows listed in `groups[g]`. Empty groups
    /// yield a zero row. On ties the first listed row wins, and the backward
    /// pass routes the gradient to that row only.
    pub fn max_rows(&mut self, a: Var, groups: &[Vec<usize>]) -> Result<Var> {
        let av = self.value(a);
        let n = av.cols();
        let mut data = vec![0.0; groups.len() * n];
        let mut argmax = vec![None; groups.len() * n];
        for (g, rows) in groups.iter().enumerate() {
            for &r in rows {
                if r >= av.rows() {
                    return Err(Error::ShapeMismatch {
                        op: "max_rows",
                        left: av.shape().to_vec(),
                        right: vec![r],
                    });
                }
            }
            for c in 0..n {
                let mut best: Option<(usize, f64)> = None;
                for &r in rows {
                    let v = av.get(r, c);
                    match best {
                        Some((_, bv)) if v <= bv => {}
                        _ => best = Some((r, v)),
                    }
                }
                if let Some((r, v)) = best {
                    data[g * n + c] = v;
                    argmax[g * n + c] = Some(r);
                }
            }
        }
        let t = Tensor::matrix(groups.len(), n, data)?;
        self.push(t, Op::MaxRows { src: a, argmax }, "max_rows")
    }

    /// Numerically stable row-wise softmax.
    pub fn softmax(&mut self, a: Var) -> Result<Var> {
        let av = self.value(a);
        let n = av.cols();
        let mut data = Vec::with_capacity(av.len());
        for r in 0..av.rows() {
            let row = av.row_slice(r);
            let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let exps: Vec<f64> = row.iter().map(|x| (x - m).exp()).collect();
            let s: f64 = exps.iter().sum();
            data.extend(exps.iter().map(|e| e / s));
        }
        let t = Tensor::matrix(av.rows(), n, data)?;
        self.push(t, Op::Softmax(a), "softmax")
    }

    /// Sum over rows of `-ln p[row, label[row]]`, a `1 x 1` tensor.
    pub fn cross_entropy(&mut self, probs: Var, labels: &[usize]) -> Result<Var> {
        let pv = self.value(probs);
        if labels.len() != pv.rows() || labels.iter().any(|&l| l >= pv.cols()) {
            return Err(Error::ShapeMismatch {
                op: "cross_entropy",
                left: pv.shape().to_vec(),
                right: vec![labels.len()],
            });
        }
        let loss: f64 = labels
            .iter()
            .enumerate()
            .map(|(r, &l)| -pv.get(r, l).ln())
            .sum();
        self.push(
            Tensor::scalar(loss),
            Op::CrossEntropy {
                probs,
                labels: labels.to_vec(),
            },
            "cross_entropy",
        )
    }

    /// Inverted dropout. Identity when `train` is false or `rate` is zero;
    /// otherwise each element is kept with probability `1 - rate` and scaled
    /// by `1 / (1 - rate)`. The mask is drawn from `rng`.
    pub fn dropout<R: Rng + ?Sized>(
        &mut self,
        x: Var,
        rate: f64,
        train: bool,
        rng: &mut R,
    ) -> Result<Var> {
        if !train || rate <= 0.0 {
            return Ok(x);
        }
        if rate >= 1.0 {
            return Err(Error::Config(format!("dropout rate {rate} must be < 1")));
        }
        let keep = 1.0 - rate;
        let xv = self.value(x);
        let mask: Vec<f64> = (0..xv.len())
            .map(|_| if rng.random::<f64>() < keep { 1.0 / keep } else { 0.0 })
            .collect();
        let data = xv.data().iter().zip(&mask).map(|(a, m)| a * m).collect();
        let t = Tensor::new(xv.shape().to_vec(), data)?;
        self.push(t, Op::Dropout { x, mask }, "dropout")
    }

    /// Scale every row to unit Euclidean norm.
    pub fn normalize_rows(&mut self, a: Var) -> Result<Var> {
        let av = self.value(a);
        let n = av.cols();
        let mut data = Vec::with_capacity(av.len());
        for r in 0..av.rows() {
            let row = av.row_slice(r);
            let norm = row.iter().map(|x| x * x).sum::<f64>().sqrt().max(NORM_FLOOR);
            data.extend(row.iter().map(|x| x / norm));
        }
        let t = Tensor::matrix(av.rows(), n, data)?;
        self.push(t, Op::NormalizeRows(a), "normalize_rows")
    }

    pub fn sum_all(&mut self, a: Var) -> Result<Var> {
        let s = self.value(a).data().iter().sum();
        self.push(Tensor::scalar(s), Op::SumAll(a), "sum_all")
    }

    /// Reverse sweep from `loss`, seeded with ones.
    pub fn backward(&self, loss: Var) -> Result<Backward> {
        let mut grads: Vec<Option<Tensor>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(Tensor::full(self.value(loss).shape(), 1.0));

        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            self.propagate(&node.op, &node.value, &g, &mut grads)?;
            grads[i] = Some(g);
        }

        for (i, g) in grads.iter().enumerate() {
            if let Some(g) = g {
                if !g.is_finite() {
                    return Err(match &self.nodes[i].op {
                        Op::Param(name) => Error::NonFiniteGradient(name.clone()),
                        _ => Error::NonFinite("backward"),
                    });
                }
            }
        }

        let params = self
            .nodes
            .iter()
            .enumerate()
            .filter_map(|(i, n)| match &n.op {
                Op::Param(name) => Some((name.clone(), i)),
                _ => None,
            })
            .collect();
        Ok(Backward {
            per_node: grads,
            params,
        })
    }

    fn propagate(
        &self,
        op: &Op,
        out: &Tensor,
        g: &Tensor,
        grads: &mut [Option<Tensor>],
    ) -> Result<()> {
        let gd = g.data();
        match op {
            Op::Leaf | Op::Param(_) => {}
            Op::MatMul(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                let (m, k, n) = (av.rows(), av.cols(), bv.cols());
                // dA = G * B^T
                let mut da = vec![0.0; m * k];
                for i in 0..m {
                    for p in 0..k {
                        let mut s = 0.0;
                        for j in 0..n {
                            s += gd[i * n + j] * bv.data()[p * n + j];
                        }
                        da[i * k + p] = s;
                    }
                }
                // dB = A^T * G
                let mut db = vec![0.0; k * n];
                for i in 0..m {
                    for p in 0..k {
                        let x = av.data()[i * k + p];
                        if x == 0.0 {
                            continue;
                        }
                        for j in 0..n {
                            db[p * n + j] += x * gd[i * n + j];
                        }
                    }
                }
                accumulate(grads, *a, Tensor::new(av.shape().to_vec(), da)?)?;
                accumulate(grads, *b, Tensor::new(bv.shape().to_vec(), db)?)?;
            }
            Op::Add(a, b) => {
                accumulate(grads, *a, g.clone())?;
                accumulate(grads, *b, g.clone())?;
            }
            Op::Sub(a, b) => {
                accumulate(grads, *a, g.clone())?;
                let mut neg = g.clone();
                neg.scale_in_place(-1.0);
                accumulate(grads, *b, neg)?;
            }
            Op::AddRow(a, row) => {
                accumulate(grads, *a, g.clone())?;
                let n = g.cols();
                let mut dr = vec![0.0; n];
                for r in 0..g.rows() {
                    for (d, x) in dr.iter_mut().zip(g.row_slice(r)) {
                        *d += x;
                    }
                }
                accumulate(grads, *row, Tensor::row(dr))?;
            }
            Op::Mul(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                let da = gd.iter().zip(bv.data()).map(|(g, y)| g * y).collect();
                let db = gd.iter().zip(av.data()).map(|(g, x)| g * x).collect();
                accumulate(grads, *a, Tensor::new(av.shape().to_vec(), da)?)?;
                accumulate(grads, *b, Tensor::new(bv.shape().to_vec(), db)?)?;
            }
            Op::Scale(a, f) => {
                let mut d = g.clone();
                d.scale_in_place(*f);
                accumulate(grads, *a, d)?;
            }
            Op::Abs(a) => {
                let av = self.value(*a);
                let d = gd
                    .iter()
                    .zip(av.data())
                    .map(|(g, x)| if *x > 0.0 { *g } else if *x < 0.0 { -g } else { 0.0 })
                    .collect();
                accumulate(grads, *a, Tensor::new(av.shape().to_vec(), d)?)?;
            }
            Op::Sigmoid(a) => {
                let d = gd
                    .iter()
                    .zip(out.data())
                    .map(|(g, y)| g * y * (1.0 - y))
                    .collect();
                accumulate(grads, *a, Tensor::new(out.shape().to_vec(), d)?)?;
            }
            Op::Tanh(a) => {
                let d = gd
                    .iter()
                    .zip(out.data())
                    .map(|(g, y)| g * (1.0 - y * y))
                    .collect();
                accumulate(grads, *a, Tensor::new(out.shape().to_vec(), d)?)?;
            }
            Op::Relu(a) => {
                let av = self.value(*a);
                let d = gd
                    .iter()
                    .zip(av.data())
                    .map(|(g, x)| if *x > 0.0 { *g } else { 0.0 })
                    .collect();
                accumulate(grads, *a, Tensor::new(av.shape().to_vec(), d)?)?;
            }
            Op::ConcatCols(parts) => {
                let rows = g.rows();
                let mut offset = 0;
                for &p in parts {
                    let pc = self.value(p).cols();
                    let mut d = Vec::with_capacity(rows * pc);
                    for r in 0..rows {
                        d.extend_from_slice(&g.row_slice(r)[offset..offset + pc]);
                    }
                    accumulate(grads, p, Tensor::new(self.value(p).shape().to_vec(), d)?)?;
                    offset += pc;
                }
            }
            Op::SliceCols(a, start) => {
                let av = self.value(*a);
                let len = g.cols();
                let mut d = Tensor::zeros(av.shape());
                for r in 0..g.rows() {
                    d.row_slice_mut(r)[*start..*start + len].copy_from_slice(g.row_slice(r));
                }
                accumulate(grads, *a, d)?;
            }
            Op::GatherRows(a, rows) => {
                let av = self.value(*a);
                let mut d = Tensor::zeros(av.shape());
                for (i, &r) in rows.iter().enumerate() {
                    for (x, y) in d.row_slice_mut(r).iter_mut().zip(g.row_slice(i)) {
                        *x += y;
                    }
                }
                accumulate(grads, *a, d)?;
            }
            Op::Blend { new, old, take_new } => {
                let mut dn = Tensor::zeros(g.shape());
                let mut dold = Tensor::zeros(g.shape());
                for (r, &take) in take_new.iter().enumerate() {
                    let dst = if take { &mut dn } else { &mut dold };
                    dst.row_slice_mut(r).copy_from_slice(g.row_slice(r));
                }
                accumulate(grads, *new, dn)?;
                accumulate(grads, *old, dold)?;
            }
            Op::MaxRows { src, argmax } => {
                let sv = self.value(*src);
                let n = sv.cols();
                let mut d = Tensor::zeros(sv.shape());
                for (i, am) in argmax.iter().enumerate() {
                    if let Some(r) = am {
                        d.data_mut()[r * n + i % n] += gd[i];
                    }
                }
                accumulate(grads, *src, d)?;
            }
            Op::Softmax(a) => {
                let n = out.cols();
                let mut d = Vec::with_capacity(out.len());
                for r in 0..out.rows() {
                    let y = out.row_slice(r);
                    let gr = &gd[r * n..(r + 1) * n];
                    let dot: f64 = y.iter().zip(gr).map(|(a, b)| a * b).sum();
                    d.extend(y.iter().zip(gr).map(|(yi, gi)| yi * (gi - dot)));
                }
                accumulate(grads, *a, Tensor::new(out.shape().to_vec(), d)?)?;
            }
            Op::CrossEntropy { probs, labels } => {
                let pv = self.value(*probs);
                let mut d = Tensor::zeros(pv.shape());
                let n = pv.cols();
                for (r, &l) in labels.iter().enumerate() {
                    d.data_mut()[r * n + l] = -gd[0] / pv.get(r, l);
                }
                accumulate(grads, *probs, d)?;
            }
            Op::Dropout { x, mask } => {
                let d = gd.iter().zip(mask).map(|(g, m)| g * m).collect();
                accumulate(grads, *x, Tensor::new(g.shape().to_vec(), d)?)?;
            }
            Op::NormalizeRows(a) => {
                let av = self.value(*a);
                let n = av.cols();
                let mut d = Vec::with_capacity(av.len());
                for r in 0..av.rows() {
                    let x = av.row_slice(r);
                    let y = out.row_slice(r);
                    let gr = &gd[r * n..(r + 1) * n];
                    let raw = x.iter().map(|v| v * v).sum::<f64>().sqrt();
                    if raw < NORM_FLOOR {
                        d.extend(gr.iter().map(|gi| gi / NORM_FLOOR));
                    } else {
                        let dot: f64 = y.iter().zip(gr).map(|(a, b)| a * b).sum();
                        d.extend(y.iter().zip(gr).map(|(yi, gi)| (gi - yi * dot) / raw));
                    }
                }
                accumulate(grads, *a, Tensor::new(av.shape().to_vec(), d)?)?;
            }
            Op::SumAll(a) => {
                let av = self.value(*a);
                accumulate(grads, *a, Tensor::full(av.shape(), gd[0]))?;
            }
        }
        Ok(())
    }
}

impl Default for Tape<'_> {
    fn default() -> Self {
        Self::new()
    }
}

fn accumulate(grads: &mut [Option<Tensor>], var: Var, g: Tensor) -> Result<()> {
    match &mut grads[var.0] {
        Some(existing) => existing.add_assign(&g),
        slot @ None => {
            *slot = Some(g);
            Ok(())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn softmax_of_zeros_is_uniform() {
        let mut t = Tape::new();
        let x = t.constant(Tensor::row(vec![0.0, 0.0]));
        let p = t.softmax(x).unwrap();
        assert_eq!(t.value(p).data(), &[0.5, 0.5]);
    }

    #[test]
    fn relu_value_and_gradient() {
        let mut t = Tape::new();
        let x = t.constant(Tensor::row(vec![-2.0, 3.0]));
        let y = t.relu(x).unwrap();
        let s = t.sum_all(y).unwrap();
        assert_eq!(t.value(y).data(), &[0.0, 3.0]);
        let b = t.backward(s).unwrap();
        assert_eq!(b.wrt(x).unwrap().data(), &[0.0, 1.0]);
    }

    #[test]
    fn max_rows_first_index_wins_ties() {
        let mut t = Tape::new();
        let x = t.constant(Tensor::matrix(2, 1, vec![1.0, 1.0]).unwrap());
        let m = t.max_rows(x, &[vec![0, 1]]).unwrap();
        let b = t.backward(m).unwrap();
        assert_eq!(b.wrt(x).unwrap().data(), &[1.0, 0.0]);
    }

    #[test]
    fn max_rows_empty_group_is_zero() {
        let mut t = Tape::new();
        let x = t.constant(Tensor::row(vec![-1.0, -5.0]));
        let m = t.max_rows(x, &[vec![], vec![0]]).unwrap();
        assert_eq!(t.value(m).data(), &[0.0, 0.0, -1.0, -5.0]);
    }

    #[test]
    fn shape_mismatch_names_op() {
        let mut t = Tape::new();
        let a = t.constant(Tensor::zeros(&[2, 3]));
        let b = t.constant(Tensor::zeros(&[2, 3]));
        let err = t.matmul(a, b).unwrap_err();
        assert!(err.to_string().contains("matmul"), "{err}");
    }

    #[test]
    fn non_finite_output_is_rejected() {
        let mut t = Tape::new();
        let a = t.constant(Tensor::row(vec![0.0, 1.0]));
        let err = t.cross_entropy(a, &[0]).unwrap_err();
        assert!(matches!(err, Error::NonFinite("cross_entropy")));
    }

    #[test]
    fn dropout_eval_is_identity() {
        let mut rng = rand::rng();
        let mut t = Tape::new();
        let a = t.constant(Tensor::row(vec![1.0, 2.0, 3.0]));
        let b = t.dropout(a, 0.5, false, &mut rng).unwrap();
        assert_eq!(a, b);
    }
}
