//! Tape-based reverse-mode differentiation over batched matrices.
//!
//! Nodes are appended in evaluation order, so reverse insertion order is a valid
//! topological order for the backward sweep. Rows are batch items, columns features.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::matrix::Matrix;
use super::params::{ParamId, ParameterStore};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

/// Dropout behaviour. `Mc` keeps sampling masks at inference for MC-dropout.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DropoutMode {
    Train,
    Eval,
    Mc,
}

#[derive(Debug)]
enum Op {
    Input,
    Param(ParamId),
    MatMul(Var, Var),
    AddBias(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Relu(Var),
    Tanh(Var),
    Sigmoid(Var),
    Concat(Vec<Var>),
    Slice(Var, usize),
    Dropout(Var, Matrix),
    Softmax(Var),
    Sum(Var),
    L2Loss(Var, Var),
    CrossEntropy {
        logits: Var,
        probs: Matrix,
        labels: Vec<usize>,
        weights: Vec<f64>,
    },
}

impl Op {
    fn name(&self) -> &'static str {
        match self {
            Op::Input => "input",
            Op::Param(_) => "param",
            Op::MatMul(..) => "matmul",
            Op::AddBias(..) => "add_bias",
            Op::Add(..) => "add",
            Op::Sub(..) => "sub",
            Op::Mul(..) => "mul",
            Op::Scale(..) => "scale",
            Op::Relu(_) => "relu",
            Op::Tanh(_) => "tanh",
            Op::Sigmoid(_) => "sigmoid",
            Op::Concat(_) => "concat",
            Op::Slice(..) => "slice",
            Op::Dropout(..) => "dropout",
            Op::Softmax(_) => "softmax",
            Op::Sum(_) => "sum",
            Op::L2Loss(..) => "l2_loss",
            Op::CrossEntropy { .. } => "cross_entropy_loss",
        }
    }
}

struct Node {
    value: Matrix,
    op: Op,
}

/// Gradients of a scalar loss with respect to every node of a graph.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Matrix>>,
}

impl Gradients {
    /// Gradient of `v`; zeros of the right shape if the loss does not depend on it.
    pub fn get(&self, graph: &Graph, v: Var) -> Matrix {
        self.grads[v.0].clone().unwrap_or_else(|| {
            let (r, c) = graph.value(v).shape();
            Matrix::zeros(r, c)
        })
    }
}

pub struct Graph {
    nodes: Vec<Node>,
    param_vars: Vec<Option<Var>>,
    rng: ChaCha8Rng,
    sign_flip: Option<&'static str>,
}

fn shape_err(op: &'static str, a: &Matrix, b: &Matrix) -> Error {
    Error::Shape {
        op,
        lhs: a.shape(),
        rhs: b.shape(),
    }
}

impl Graph {
    /// New graph whose dropout masks are drawn from a stream seeded by `seed`.
    pub fn new(seed: u64) -> Self {
        Graph {
            nodes: Vec::new(),
            param_vars: Vec::new(),
            rng: ChaCha8Rng::seed_from_u64(seed),
            sign_flip: None,
        }
    }

    /// Test hook: negates the backward contribution of every op named `op`.
    #[doc(hidden)]
    pub fn inject_sign_flip(&mut self, op: &'static str) {
        self.sign_flip = Some(op);
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Matrix, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Matrix {
        &self.nodes[v.0].value
    }

    pub fn scalar(&self, v: Var) -> f64 {
        self.value(v).get(0, 0)
    }

    pub fn input(&mut self, m: Matrix) -> Var {
        self.push(m, Op::Input)
    }

    /// Leaf for a stored parameter. Repeated calls return the same node.
    pub fn param(&mut self, store: &ParameterStore, id: ParamId) -> Var {
        if self.param_vars.len() <= id.index() {
            self.param_vars.resize(id.index() + 1, None);
        }
        if let Some(v) = self.param_vars[id.index()] {
            return v;
        }
        let v = self.push(store.value(id).clone(), Op::Param(id));
        self.param_vars[id.index()] = Some(v);
        v
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (x, w) = (self.value(a), self.value(b));
        if x.cols() != w.rows() {
            return Err(shape_err("matmul", x, w));
        }
        let out = x.matmul(w);
        Ok(self.push(out, Op::MatMul(a, b)))
    }

    /// `x + b` with the 1×n bias broadcast over rows.
    pub fn add_bias(&mut self, x: Var, b: Var) -> Result<Var> {
        let (xv, bv) = (self.value(x), self.value(b));
        if bv.rows() != 1 || bv.cols() != xv.cols() {
            return Err(shape_err("add_bias", xv, bv));
        }
        let mut out = xv.clone();
        for r in 0..out.rows() {
            for (o, &bb) in out.row_mut(r).iter_mut().zip(bv.data()) {
                *o += bb;
            }
        }
        Ok(self.push(out, Op::AddBias(x, b)))
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.shape() != bv.shape() {
            return Err(shape_err(op, av, bv));
        }
        Ok(())
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("add", a, b)?;
        let out = self.value(a).zip_map(self.value(b), |x, y| x + y);
        Ok(self.push(out, Op::Add(a, b)))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("sub", a, b)?;
        let out = self.value(a).zip_map(self.value(b), |x, y| x - y);
        Ok(self.push(out, Op::Sub(a, b)))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("mul", a, b)?;
        let out = self.value(a).zip_map(self.value(b), |x, y| x * y);
        Ok(self.push(out, Op::Mul(a, b)))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let out = self.value(a).map(|x| c * x);
        self.push(out, Op::Scale(a, c))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let out = self.value(a).map(|x| x.max(0.0));
        self.push(out, Op::Relu(a))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let out = self.value(a).map(f64::tanh);
        self.push(out, Op::Tanh(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let out = self.value(a).map(sigmoid);
        self.push(out, Op::Sigmoid(a))
    }

    /// Column-wise concatenation.
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var> {
        let first = *parts
            .first()
            .ok_or_else(|| Error::validation("concat of zero inputs"))?;
        let rows = self.value(first).rows();
        let mut cols = 0;
        for &p in parts {
            let v = self.value(p);
            if v.rows() != rows {
                return Err(shape_err("concat", self.value(first), v));
            }
            cols += v.cols();
        }
        let mut out = Matrix::zeros(rows, cols);
        for r in 0..rows {
            let mut off = 0;
            for &p in parts {
                let src = self.value(p).row(r);
                out.row_mut(r)[off..off + src.len()].copy_from_slice(src);
                off += src.len();
            }
        }
        Ok(self.push(out, Op::Concat(parts.to_vec())))
    }

    /// Columns `start..end` of `a`.
    pub fn slice(&mut self, a: Var, start: usize, end: usize) -> Result<Var> {
        let av = self.value(a);
        if start >= end || end > av.cols() {
            return Err(Error::Shape {
                op: "slice",
                lhs: av.shape(),
                rhs: (start, end),
            });
        }
        let rows = av.rows();
        let mut out = Matrix::zeros(rows, end - start);
        for r in 0..rows {
            out.row_mut(r).copy_from_slice(&av.row(r)[start..end]);
        }
        Ok(self.push(out, Op::Slice(a, start)))
    }

    /// Inverted dropout with drop probability `p`; identity in eval mode or when p = 0.
    pub fn dropout(&mut self, a: Var, p: f64, mode: DropoutMode) -> Result<Var> {
        if !(0.0..1.0).contains(&p) {
            return Err(Error::validation(format!("dropout probability {p} outside [0, 1)")));
        }
        if mode == DropoutMode::Eval || p == 0.0 {
            return Ok(a);
        }
        let (r, c) = self.value(a).shape();
        let keep = 1.0 - p;
        let scale = 1.0 / keep;
        let mask: Vec<f64> = (0..r * c)
            .map(|_| if self.rng.random::<f64>() < keep { scale } else { 0.0 })
            .collect();
        let mask = Matrix::from_vec(r, c, mask);
        let out = self.value(a).zip_map(&mask, |x, m| x * m);
        Ok(self.push(out, Op::Dropout(a, mask)))
    }

    /// Row-wise softmax.
    pub fn softmax(&mut self, a: Var) -> Var {
        let out = softmax_rows(self.value(a));
        self.push(out, Op::Softmax(a))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).sum();
        self.push(Matrix::scalar(s), Op::Sum(a))
    }

    /// Mean squared error over all elements.
    pub fn l2_loss(&mut self, pred: Var, target: Var) -> Result<Var> {
        self.same_shape("l2_loss", pred, target)?;
        let (p, t) = (self.value(pred), self.value(target));
        let n = p.data().len() as f64;
        let loss = p
            .data()
            .iter()
            .zip(t.data())
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            / n;
        Ok(self.push(Matrix::scalar(loss), Op::L2Loss(pred, target)))
    }

    /// Weighted cross-entropy over rows of `logits`, averaged over the batch.
    /// `class_weights` is indexed by label; pass `None` for uniform weights.
    pub fn cross_entropy_loss(&mut self, logits: Var, labels: &[usize], class_weights: Option<&[f64]>) -> Result<Var> {
        let lv = self.value(logits);
        if labels.len() != lv.rows() {
            return Err(Error::Shape {
                op: "cross_entropy_loss",
                lhs: lv.shape(),
                rhs: (labels.len(), 1),
            });
        }
        if let Some(&bad) = labels.iter().find(|&&y| y >= lv.cols()) {
            return Err(Error::validation(format!(
                "cross_entropy_loss: label {bad} out of range for {} classes",
                lv.cols()
            )));
        }
        let probs = softmax_rows(lv);
        let weights: Vec<f64> = labels.iter().map(|&y| class_weights.map_or(1.0, |w| w[y])).collect();
        let b = labels.len() as f64;
        let mut loss = 0.0;
        for (r, (&y, &w)) in labels.iter().zip(&weights).enumerate() {
            let row = lv.row(r);
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
            loss += w * (lse - row[y]);
        }
        loss /= b;
        Ok(self.push(
            Matrix::scalar(loss),
            Op::CrossEntropy {
                logits,
                probs,
                labels: labels.to_vec(),
                weights,
            },
        ))
    }

    /// Backpropagates from the scalar `loss`, adding parameter gradients into `store`.
    pub fn backward(&self, loss: Var, store: &mut ParameterStore) -> Result<Gradients> {
        let lv = self.value(loss);
        if lv.shape() != (1, 1) {
            return Err(Error::Shape {
                op: "backward",
                lhs: lv.shape(),
                rhs: (1, 1),
            });
        }
        if !lv.get(0, 0).is_finite() {
            return Err(Error::NonFinite);
        }
        let mut grads: Vec<Option<Matrix>> = Vec::with_capacity(self.nodes.len());
        grads.resize_with(self.nodes.len(), || None);
        grads[loss.0] = Some(Matrix::scalar(1.0));

        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            let sign = if self.sign_flip == Some(node.op.name()) {
                -1.0
            } else {
                1.0
            };
            self.propagate(node, &g, sign, &mut grads);
            if let Op::Param(id) = node.op {
                store.accumulate_grad(id, &g);
            }
            grads[idx] = Some(g);
        }
        Ok(Gradients { grads })
    }

    fn propagate(&self, node: &Node, g: &Matrix, sign: f64, grads: &mut [Option<Matrix>]) {
        let mut acc = |v: Var, delta: Matrix| {
            let slot = &mut grads[v.0];
            match slot {
                Some(existing) => existing.add_scaled(&delta, sign),
                None => {
                    *slot = Some(if sign == 1.0 { delta } else { delta.map(|x| -x) });
                }
            }
        };
        let val = |v: Var| &self.nodes[v.0].value;
        match &node.op {
            Op::Input | Op::Param(_) => {}
            Op::MatMul(a, b) => {
                let (av, bv) = (val(*a), val(*b));
                let mut da = Matrix::zeros(av.rows(), av.cols());
                g.matmul_transposed_into(bv, &mut da);
                let mut db = Matrix::zeros(bv.rows(), bv.cols());
                av.transposed_matmul_into(g, &mut db);
                acc(*a, da);
                acc(*b, db);
            }
            Op::AddBias(x, b) => {
                let mut db = Matrix::zeros(1, g.cols());
                for r in 0..g.rows() {
                    for (o, &v) in db.data_mut().iter_mut().zip(g.row(r)) {
                        *o += v;
                    }
                }
                acc(*x, g.clone());
                acc(*b, db);
            }
            Op::Add(a, b) => {
                acc(*a, g.clone());
                acc(*b, g.clone());
            }
            Op::Sub(a, b) => {
                acc(*a, g.clone());
                acc(*b, g.map(|x| -x));
            }
            Op::Mul(a, b) => {
                let da = g.zip_map(val(*b), |x, y| x * y);
                let db = g.zip_map(val(*a), |x, y| x * y);
                acc(*a, da);
                acc(*b, db);
            }
            Op::Scale(a, c) => acc(*a, g.map(|x| c * x)),
            Op::Relu(a) => acc(*a, g.zip_map(val(*a), |x, y| if y > 0.0 { x } else { 0.0 })),
            Op::Tanh(a) => acc(*a, g.zip_map(&node.value, |x, y| x * (1.0 - y * y))),
            Op::Sigmoid(a) => acc(*a, g.zip_map(&node.value, |x, y| x * y * (1.0 - y))),
            Op::Concat(parts) => {
                let mut off = 0;
                for p in parts {
                    let cols = val(*p).cols();
                    let mut d = Matrix::zeros(g.rows(), cols);
                    for r in 0..g.rows() {
                        d.row_mut(r).copy_from_slice(&g.row(r)[off..off + cols]);
                    }
                    off += cols;
                    acc(*p, d);
                }
            }
            Op::Slice(a, start) => {
                let av = val(*a);
                let mut d = Matrix::zeros(av.rows(), av.cols());
                for r in 0..g.rows() {
                    d.row_mut(r)[*start..*start + g.cols()].copy_from_slice(g.row(r));
                }
                acc(*a, d);
            }
            Op::Dropout(a, mask) => acc(*a, g.zip_map(mask, |x, m| x * m)),
            Op::Softmax(a) => {
                let y = &node.value;
                let mut d = Matrix::zeros(y.rows(), y.cols());
                for r in 0..y.rows() {
                    let dot: f64 = g.row(r).iter().zip(y.row(r)).map(|(a, b)| a * b).sum();
                    for ((o, &gy), &yy) in d.row_mut(r).iter_mut().zip(g.row(r)).zip(y.row(r)) {
                        *o = yy * (gy - dot);
                    }
                }
                acc(*a, d);
            }
            Op::Sum(a) => {
                let (r, c) = val(*a).shape();
                acc(*a, Matrix::filled(r, c, g.get(0, 0)));
            }
            Op::L2Loss(p, t) => {
                let (pv, tv) = (val(*p), val(*t));
                let scale = 2.0 * g.get(0, 0) / pv.data().len() as f64;
                let d = pv.zip_map(tv, |a, b| scale * (a - b));
                acc(*t, d.map(|x| -x));
                acc(*p, d);
            }
            Op::CrossEntropy {
                logits,
                probs,
                labels,
                weights,
            } => {
                let b = labels.len() as f64;
                let g0 = g.get(0, 0);
                let mut d = probs.clone();
                for (r, (&y, &w)) in labels.iter().zip(weights).enumerate() {
                    let row = d.row_mut(r);
                    row[y] -= 1.0;
                    for v in row.iter_mut() {
                        *v *= g0 * w / b;
                    }
                }
                acc(*logits, d);
            }
        }
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn softmax_rows(m: &Matrix) -> Matrix {
    let mut out = m.clone();
    for r in 0..out.rows() {
        let row = out.row_mut(r);
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut z = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            z += *v;
        }
        for v in row.iter_mut() {
            *v /= z;
        }
    }
    out
}
