//! Batched reverse-mode tape with forward spatial tangents.
//!
//! Each node holds a matrix whose rows are sample points. Nodes marked as
//! *jets* additionally carry the derivative of every entry with respect to
//! the three spatial input coordinates, stacked as four row blocks:
//! `[value; d/dx; d/dy; d/dz]`, each block `rows` high. The spatial gradient
//! of an SDF is then an ordinary forward quantity, and a single reverse pass
//! yields parameter gradients of losses that depend on it (the Eikonal term,
//! normal supervision, normal-conditioned color).
//!
//! Reverse replay visits nodes strictly in reverse recording order, which is
//! a valid reverse topological order because a node can only reference
//! previously recorded nodes.

use ndarray::linalg::general_mat_mul;
use ndarray::{s, Array2, ArrayView2, ArrayViewMut2, Axis, Zip};
use serde::{Deserialize, Serialize};

use super::params::{GradSink, ParamSlice, ParamStore};
use crate::error::{Error, Result};

/// Number of spatial tangent directions carried by jet nodes.
pub const TANGENTS: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Activation {
    /// `ln(1 + exp(beta x)) / beta`
    Softplus { beta: f64 },
    Relu,
    Sigmoid,
    Identity,
}

impl Activation {
    pub fn eval(&self, x: f64) -> f64 {
        match *self {
            Activation::Softplus { beta } => {
                let z = beta * x;
                (z.max(0.0) + ln_1p_small((-z.abs()).exp())) / beta
            }
            Activation::Relu => x.max(0.0),
            Activation::Sigmoid => sigmoid(x),
            Activation::Identity => x,
        }
    }

    pub fn deriv(&self, x: f64) -> f64 {
        match *self {
            Activation::Softplus { beta } => sigmoid(beta * x),
            Activation::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Sigmoid => {
                let s = sigmoid(x);
                s * (1.0 - s)
            }
            Activation::Identity => 1.0,
        }
    }

    pub fn second_deriv(&self, x: f64) -> f64 {
        match *self {
            Activation::Softplus { beta } => {
                let s = sigmoid(beta * x);
                beta * s * (1.0 - s)
            }
            Activation::Relu | Activation::Identity => 0.0,
            Activation::Sigmoid => {
                let s = sigmoid(x);
                s * (1.0 - s) * (1.0 - 2.0 * s)
            }
        }
    }
}

impl Activation {
    /// Value with first and second derivatives, sharing one exponential.
    pub fn eval_all(&self, x: f64) -> (f64, f64, f64) {
        match *self {
            Activation::Softplus { beta } => {
                let z = beta * x;
                let e = (-z.abs()).exp();
                let s = if z >= 0.0 { 1.0 / (1.0 + e) } else { e / (1.0 + e) };
                ((z.max(0.0) + ln_1p_small(e)) / beta, s, beta * s * (1.0 - s))
            }
            Activation::Sigmoid => {
                let s = sigmoid(x);
                (s, s * (1.0 - s), s * (1.0 - s) * (1.0 - 2.0 * s))
            }
            _ => (self.eval(x), self.deriv(x), self.second_deriv(x)),
        }
    }
}

/// `ln(1 + e)` for `e` in `[0, 1]`; the series is exact to double
/// precision below `1e-5`.
fn ln_1p_small(e: f64) -> f64 {
    if e < 1e-5 {
        e * (1.0 - e * (0.5 - e / 3.0))
    } else {
        e.ln_1p()
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

/// Trilinear (or any fixed-stencil) gather from a parameter table.
///
/// `corners[i][c]` is the entry index of corner `c` for row `i`, each entry
/// holding `channels` consecutive scalars. `dweights` holds the spatial
/// derivative of every corner weight and is only filled for jet outputs.
#[derive(Debug, Clone)]
pub struct GatherRecord {
    pub table: ParamSlice,
    pub channels: usize,
    pub corners: Vec<[u32; 8]>,
    pub weights: Vec<[f64; 8]>,
    pub dweights: Vec<[[f64; 8]; TANGENTS]>,
}

/// A tape primitive defined outside this module. The caller computes the
/// forward value; the op provides the adjoint rule.
pub trait CustomOp: Send + Sync {
    fn name(&self) -> &'static str;

    /// Returns one adjoint per input (same shape as the input value), or
    /// `None` when the input receives no gradient. Parameter gradients go
    /// straight into `sink`.
    fn backward(
        &self,
        inputs: &[&Array2<f64>],
        grad_out: &Array2<f64>,
        store: &ParamStore,
        sink: &mut GradSink,
    ) -> Vec<Option<Array2<f64>>>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

enum Op<'p> {
    Leaf,
    Affine {
        input: Var,
        weight: ParamSlice,
        bias: ParamSlice,
    },
    Act {
        input: Var,
        /// First and second derivatives at the primal pre-activations.
        d1: Array2<f64>,
        d2: Option<Array2<f64>>,
    },
    Scale {
        input: Var,
        factor: f64,
    },
    Concat {
        inputs: Vec<Var>,
    },
    Columns {
        input: Var,
        start: usize,
    },
    Encode {
        input: Var,
        octaves: usize,
    },
    Gather(Box<GatherRecord>),
    SpatialGrad {
        input: Var,
        col: usize,
    },
    JetValue {
        input: Var,
    },
    Custom {
        inputs: Vec<Var>,
        op: Box<dyn CustomOp + 'p>,
    },
}

struct Node<'p> {
    op: Op<'p>,
    value: Array2<f64>,
    rows: usize,
    jets: bool,
    needs_grad: bool,
}

pub struct Tape<'p> {
    store: &'p ParamStore,
    nodes: Vec<Node<'p>>,
}

fn block(a: &Array2<f64>, rows: usize, k: usize) -> ArrayView2<'_, f64> {
    a.slice(s![k * rows..(k + 1) * rows, ..])
}

fn block_mut(a: &mut Array2<f64>, rows: usize, k: usize) -> ArrayViewMut2<'_, f64> {
    a.slice_mut(s![k * rows..(k + 1) * rows, ..])
}

impl<'p> Tape<'p> {
    pub fn new(store: &'p ParamStore) -> Self {
        Self {
            store,
            nodes: Vec::new(),
        }
    }

    pub fn store(&self) -> &'p ParamStore {
        self.store
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Array2<f64> {
        &self.nodes[v.0].value
    }

    /// Value block only (drops tangent rows of jet nodes).
    pub fn primal(&self, v: Var) -> ArrayView2<'_, f64> {
        let n = &self.nodes[v.0];
        block(&n.value, n.rows, 0)
    }

    pub fn rows(&self, v: Var) -> usize {
        self.nodes[v.0].rows
    }

    pub fn width(&self, v: Var) -> usize {
        self.nodes[v.0].value.ncols()
    }

    pub fn is_jet(&self, v: Var) -> bool {
        self.nodes[v.0].jets
    }

    pub fn needs_grad(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    fn push(&mut self, op: Op<'p>, value: Array2<f64>, rows: usize, jets: bool, needs_grad: bool) -> Var {
        debug_assert_eq!(value.nrows(), if jets { rows * (TANGENTS + 1) } else { rows });
        self.nodes.push(Node {
            op,
            value,
            rows,
            jets,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    /// Constant input. For jet leaves `value` must already contain the
    /// tangent blocks.
    pub fn leaf(&mut self, value: Array2<f64>, jets: bool) -> Var {
        let rows = if jets {
            value.nrows() / (TANGENTS + 1)
        } else {
            value.nrows()
        };
        self.push(Op::Leaf, value, rows, jets, false)
    }

    /// 3D points as a leaf. With `jets`, the tangent blocks are the identity
    /// so downstream tangents are derivatives with respect to the point.
    pub fn points(&mut self, pts: &[[f64; 3]], jets: bool) -> Var {
        let n = pts.len();
        let blocks = if jets { TANGENTS + 1 } else { 1 };
        let mut v = Array2::zeros((n * blocks, 3));
        for (i, p) in pts.iter().enumerate() {
            for c in 0..3 {
                v[[i, c]] = p[c];
            }
            if jets {
                for k in 0..TANGENTS {
                    v[[(k + 1) * n + i, k]] = 1.0;
                }
            }
        }
        self.push(Op::Leaf, v, n, jets, false)
    }

    /// `y = x Wᵀ + b` with `W` stored row-major as `(out, in)`.
    pub fn affine(&mut self, input: Var, weight: ParamSlice, bias: ParamSlice) -> Var {
        let (rows, jets) = (self.rows(input), self.is_jet(input));
        let out_dim = bias.len;
        let in_dim = self.width(input);
        assert_eq!(weight.len, out_dim * in_dim, "affine shape mismatch");
        let w = ArrayView2::from_shape((out_dim, in_dim), self.store.values(weight)).unwrap();
        let x = self.value(input);
        let mut y = Array2::zeros((x.nrows(), out_dim));
        general_mat_mul(1.0, x, &w.t(), 0.0, &mut y);
        let b = self.store.values(bias);
        for mut row in y.slice_mut(s![0..rows, ..]).rows_mut() {
            for (v, bb) in row.iter_mut().zip(b) {
                *v += bb;
            }
        }
        self.push(Op::Affine { input, weight, bias }, y, rows, jets, true)
    }

    pub fn activation(&mut self, input: Var, act: Activation) -> Var {
        let node = &self.nodes[input.0];
        let (rows, jets, ng) = (node.rows, node.jets, node.needs_grad);
        let x = &node.value;
        let pre = block(x, rows, 0);
        let mut y = Array2::zeros(x.raw_dim());
        let mut d1 = Array2::zeros(pre.raw_dim());
        let mut d2 = Array2::zeros(if jets { pre.raw_dim() } else { ndarray::Ix2(0, 0) });
        if jets {
            Zip::from(block_mut(&mut y, rows, 0))
                .and(&mut d1)
                .and(&mut d2)
                .and(&pre)
                .for_each(|v, g1, g2, &a| (*v, *g1, *g2) = act.eval_all(a));
        } else {
            Zip::from(block_mut(&mut y, rows, 0))
                .and(&mut d1)
                .and(&pre)
                .for_each(|v, g1, &a| (*v, *g1, _) = act.eval_all(a));
        }
        let d2 = jets.then_some(d2);
        if jets {
            for k in 1..=TANGENTS {
                let mut yk = block_mut(&mut y, rows, k);
                yk.assign(&block(x, rows, k));
                yk *= &d1;
            }
        }
        if !ng {
            return self.push(Op::Leaf, y, rows, jets, false);
        }
        self.push(Op::Act { input, d1, d2 }, y, rows, jets, ng)
    }

    pub fn scale(&mut self, input: Var, factor: f64) -> Var {
        let node = &self.nodes[input.0];
        let (rows, jets, ng) = (node.rows, node.jets, node.needs_grad);
        let y = &node.value * factor;
        self.push(Op::Scale { input, factor }, y, rows, jets, ng)
    }

    /// Column-wise concatenation. All inputs share the row count and jet flag.
    pub fn concat(&mut self, inputs: &[Var]) -> Var {
        assert!(!inputs.is_empty());
        let rows = self.rows(inputs[0]);
        let jets = self.is_jet(inputs[0]);
        for &v in inputs {
            assert_eq!(self.rows(v), rows, "concat row mismatch");
            assert_eq!(self.is_jet(v), jets, "concat mixes jet and plain nodes");
        }
        let views: Vec<_> = inputs.iter().map(|&v| self.value(v).view()).collect();
        let y = ndarray::concatenate(Axis(1), &views).unwrap();
        let ng = inputs.iter().any(|&v| self.needs_grad(v));
        self.push(
            Op::Concat {
                inputs: inputs.to_vec(),
            },
            y,
            rows,
            jets,
            ng,
        )
    }

    pub fn columns(&mut self, input: Var, start: usize, len: usize) -> Var {
        let node = &self.nodes[input.0];
        let (rows, jets, ng) = (node.rows, node.jets, node.needs_grad);
        let y = node.value.slice(s![.., start..start + len]).to_owned();
        self.push(Op::Columns { input, start }, y, rows, jets, ng)
    }

    /// Identity plus `sin(2^j π x)`, `cos(2^j π x)` for `j < octaves`.
    pub fn encode(&mut self, input: Var, octaves: usize) -> Var {
        let node = &self.nodes[input.0];
        let (rows, jets, ng) = (node.rows, node.jets, node.needs_grad);
        let x = &node.value;
        let d = x.ncols();
        let width = d * (1 + 2 * octaves);
        let mut y = Array2::zeros((x.nrows(), width));
        y.slice_mut(s![.., 0..d]).assign(x);
        for j in 0..octaves {
            let freq = (1u64 << j) as f64 * std::f64::consts::PI;
            let sin_col = d + 2 * d * j;
            let cos_col = sin_col + d;
            for i in 0..rows {
                for c in 0..d {
                    let a = freq * x[[i, c]];
                    let (sn, cs) = a.sin_cos();
                    y[[i, sin_col + c]] = sn;
                    y[[i, cos_col + c]] = cs;
                    if jets {
                        for k in 1..=TANGENTS {
                            let dx = x[[k * rows + i, c]];
                            y[[k * rows + i, sin_col + c]] = freq * cs * dx;
                            y[[k * rows + i, cos_col + c]] = -freq * sn * dx;
                        }
                    }
                }
            }
        }
        self.push(Op::Encode { input, octaves }, y, rows, jets, ng)
    }

    /// Gathers `channels` features per row from the table in `rec`. The
    /// output carries tangents iff `rec.dweights` is populated.
    pub fn gather(&mut self, rec: GatherRecord) -> Var {
        let rows = rec.corners.len();
        let jets = !rec.dweights.is_empty();
        let ch = rec.channels;
        let table = self.store.values(rec.table);
        let blocks = if jets { TANGENTS + 1 } else { 1 };
        let mut y = Array2::zeros((rows * blocks, ch));
        for i in 0..rows {
            for (c, &entry) in rec.corners[i].iter().enumerate() {
                let base = entry as usize * ch;
                let feat = &table[base..base + ch];
                let w = rec.weights[i][c];
                for f in 0..ch {
                    y[[i, f]] += w * feat[f];
                }
                if jets {
                    for k in 0..TANGENTS {
                        let dw = rec.dweights[i][k][c];
                        for f in 0..ch {
                            y[[(k + 1) * rows + i, f]] += dw * feat[f];
                        }
                    }
                }
            }
        }
        self.push(Op::Gather(Box::new(rec)), y, rows, jets, true)
    }

    /// `[value, d/dx, d/dy, d/dz]` of column `col` of a jet node, as a plain
    /// `rows x 4` node.
    pub fn spatial_grad(&mut self, input: Var, col: usize) -> Var {
        let node = &self.nodes[input.0];
        assert!(node.jets, "spatial_grad needs a jet node");
        let (rows, ng) = (node.rows, node.needs_grad);
        let mut y = Array2::zeros((rows, TANGENTS + 1));
        for k in 0..=TANGENTS {
            for i in 0..rows {
                y[[i, k]] = node.value[[k * rows + i, col]];
            }
        }
        self.push(Op::SpatialGrad { input, col }, y, rows, false, ng)
    }

    /// Drops the tangent blocks of a jet node.
    pub fn jet_value(&mut self, input: Var) -> Var {
        let node = &self.nodes[input.0];
        assert!(node.jets, "jet_value needs a jet node");
        let (rows, ng) = (node.rows, node.needs_grad);
        let y = block(&node.value, rows, 0).to_owned();
        self.push(Op::JetValue { input }, y, rows, false, ng)
    }

    /// Records an externally computed primitive.
    pub fn custom(
        &mut self,
        inputs: &[Var],
        value: Array2<f64>,
        has_params: bool,
        op: Box<dyn CustomOp + 'p>,
    ) -> Var {
        let rows = value.nrows();
        let ng = has_params || inputs.iter().any(|&v| self.needs_grad(v));
        self.push(
            Op::Custom {
                inputs: inputs.to_vec(),
                op,
            },
            value,
            rows,
            false,
            ng,
        )
    }

    /// Scalar value of a `1 x 1` node.
    pub fn scalar(&self, v: Var) -> f64 {
        let a = self.value(v);
        assert_eq!(a.dim(), (1, 1), "node is not a scalar");
        a[[0, 0]]
    }

    /// Accumulates d(loss)/d(params) into `sink`. `loss` must be a finite
    /// `1 x 1` node.
    pub fn backward(&self, loss: Var, sink: &mut GradSink) -> Result<()> {
        let l = self.scalar(loss);
        if !l.is_finite() {
            return Err(Error::NonFinite {
                context: "loss before backward".into(),
            });
        }
        self.backward_from(loss, Array2::from_elem((1, 1), 1.0), sink);
        Ok(())
    }

    /// Reverse replay from an arbitrary node with the given output adjoint.
    pub fn backward_from(&self, out: Var, seed: Array2<f64>, sink: &mut GradSink) {
        assert_eq!(seed.dim(), self.value(out).dim(), "seed shape mismatch");
        let mut adj: Vec<Option<Array2<f64>>> = (0..=out.0).map(|_| None).collect();
        adj[out.0] = Some(seed);
        for i in (0..=out.0).rev() {
            let Some(g) = adj[i].take() else { continue };
            let node = &self.nodes[i];
            if !node.needs_grad {
                continue;
            }
            self.step_back(node, &g, &mut adj, sink);
        }
    }

    fn accum(&self, adj: &mut [Option<Array2<f64>>], v: Var, g: Array2<f64>) {
        if !self.nodes[v.0].needs_grad {
            return;
        }
        match &mut adj[v.0] {
            Some(a) => *a += &g,
            slot @ None => *slot = Some(g),
        }
    }

    fn accum_with(&self, adj: &mut [Option<Array2<f64>>], v: Var, f: impl FnOnce(&mut Array2<f64>)) {
        let node = &self.nodes[v.0];
        if !node.needs_grad {
            return;
        }
        let slot = adj[v.0].get_or_insert_with(|| Array2::zeros(node.value.raw_dim()));
        f(slot);
    }

    fn step_back(&self, node: &Node<'p>, g: &Array2<f64>, adj: &mut [Option<Array2<f64>>], sink: &mut GradSink) {
        let rows = node.rows;
        match &node.op {
            Op::Leaf => {}
            Op::Affine { input, weight, bias } => {
                let x = self.value(*input);
                let out_dim = bias.len;
                let in_dim = x.ncols();
                {
                    let mut gw =
                        ArrayViewMut2::from_shape((out_dim, in_dim), sink.dense_mut(*weight)).unwrap();
                    general_mat_mul(1.0, &g.t(), x, 1.0, &mut gw);
                }
                {
                    let gb = sink.dense_mut(*bias);
                    for row in g.slice(s![0..rows, ..]).rows() {
                        for (a, b) in gb.iter_mut().zip(row) {
                            *a += b;
                        }
                    }
                }
                if self.needs_grad(*input) {
                    let w = ArrayView2::from_shape((out_dim, in_dim), self.store.values(*weight)).unwrap();
                    let mut gx = Array2::zeros(x.raw_dim());
                    general_mat_mul(1.0, g, &w, 0.0, &mut gx);
                    self.accum(adj, *input, gx);
                }
            }
            Op::Act { input, d1, d2 } => {
                let x = self.value(*input);
                let mut gx = Array2::zeros(x.raw_dim());
                {
                    let mut gv = block_mut(&mut gx, rows, 0);
                    gv.assign(&block(g, rows, 0));
                    gv *= d1;
                }
                if let Some(d2) = d2 {
                    for k in 1..=TANGENTS {
                        let gk = block(g, rows, k);
                        let xk = block(x, rows, k);
                        let mut extra = &gk * &xk;
                        extra *= d2;
                        block_mut(&mut gx, rows, 0).scaled_add(1.0, &extra);
                        let mut gxk = block_mut(&mut gx, rows, k);
                        gxk.assign(&gk);
                        gxk *= d1;
                    }
                }
                self.accum(adj, *input, gx);
            }
            Op::Scale { input, factor } => {
                self.accum(adj, *input, g * *factor);
            }
            Op::Concat { inputs } => {
                let mut at = 0;
                for &v in inputs {
                    let w = self.width(v);
                    if self.needs_grad(v) {
                        self.accum(adj, v, g.slice(s![.., at..at + w]).to_owned());
                    }
                    at += w;
                }
            }
            Op::Columns { input, start } => {
                let w = g.ncols();
                let start = *start;
                self.accum_with(adj, *input, |a| {
                    a.slice_mut(s![.., start..start + w]).scaled_add(1.0, g);
                });
            }
            Op::Encode { input, octaves } => {
                let x = self.value(*input);
                let d = x.ncols();
                let jets = node.jets;
                let mut gx = g.slice(s![.., 0..d]).to_owned();
                for j in 0..*octaves {
                    let freq = (1u64 << j) as f64 * std::f64::consts::PI;
                    let sin_col = d + 2 * d * j;
                    let cos_col = sin_col + d;
                    for i in 0..rows {
                        for c in 0..d {
                            let (sn, cs) = (freq * x[[i, c]]).sin_cos();
                            let gs = g[[i, sin_col + c]];
                            let gc = g[[i, cos_col + c]];
                            gx[[i, c]] += freq * (cs * gs - sn * gc);
                            if jets {
                                for k in 1..=TANGENTS {
                                    let r = k * rows + i;
                                    let dx = x[[r, c]];
                                    let gsk = g[[r, sin_col + c]];
                                    let gck = g[[r, cos_col + c]];
                                    gx[[i, c]] += -freq * freq * dx * (sn * gsk + cs * gck);
                                    gx[[r, c]] += freq * (cs * gsk - sn * gck);
                                }
                            }
                        }
                    }
                }
                self.accum(adj, *input, gx);
            }
            Op::Gather(rec) => {
                let ch = rec.channels;
                let jets = node.jets;
                for i in 0..rows {
                    for (c, &entry) in rec.corners[i].iter().enumerate() {
                        let base = entry as usize * ch;
                        for f in 0..ch {
                            let mut v = rec.weights[i][c] * g[[i, f]];
                            if jets {
                                for k in 0..TANGENTS {
                                    v += rec.dweights[i][k][c] * g[[(k + 1) * rows + i, f]];
                                }
                            }
                            if v != 0.0 {
                                sink.add(rec.table, base + f, v);
                            }
                        }
                    }
                }
            }
            Op::SpatialGrad { input, col } => {
                let col = *col;
                self.accum_with(adj, *input, |a| {
                    for k in 0..=TANGENTS {
                        for i in 0..rows {
                            a[[k * rows + i, col]] += g[[i, k]];
                        }
                    }
                });
            }
            Op::JetValue { input } => {
                self.accum_with(adj, *input, |a| {
                    block_mut(a, rows, 0).scaled_add(1.0, g);
                });
            }
            Op::Custom { inputs, op } => {
                let vals: Vec<&Array2<f64>> = inputs.iter().map(|&v| self.value(v)).collect();
                let grads = op.backward(&vals, g, self.store, sink);
                debug_assert_eq!(grads.len(), inputs.len(), "{}: adjoint count", op.name());
                for (&v, gi) in inputs.iter().zip(grads) {
                    if let Some(gi) = gi {
                        self.accum(adj, v, gi);
                    }
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::params::{GroupKind, NETWORK_LR};

    struct Square;

    impl CustomOp for Square {
        fn name(&self) -> &'static str {
            "square"
        }

        fn backward(
            &self,
            inputs: &[&Array2<f64>],
            grad_out: &Array2<f64>,
            _: &ParamStore,
            _: &mut GradSink,
        ) -> Vec<Option<Array2<f64>>> {
            let x = inputs[0];
            let g = grad_out[[0, 0]];
            vec![Some(x.mapv(|v| 2.0 * v * g))]
        }
    }

    fn square_sum(tape: &mut Tape<'_>, x: Var) -> Var {
        let v = tape.value(x).iter().map(|a| a * a).sum::<f64>();
        tape.custom(&[x], Array2::from_elem((1, 1), v), false, Box::new(Square))
    }

    #[test]
    fn theta_squared_has_gradient_six_at_three() {
        let mut store = ParamStore::new();
        let g = store.group("theta", GroupKind::Network, NETWORK_LR);
        let w = store.alloc(g, &[3.0]);
        let b = store.alloc(g, &[0.0]);
        let mut sink = GradSink::for_store(&store);
        let mut tape = Tape::new(&store);
        let one = tape.leaf(Array2::from_elem((1, 1), 1.0), false);
        let theta = tape.affine(one, w, b);
        let loss = square_sum(&mut tape, theta);
        assert_eq!(tape.scalar(loss), 9.0);
        tape.backward(loss, &mut sink).unwrap();
        drop(tape);
        store.accumulate(&sink);
        assert_eq!(store.grads(w), &[6.0]);
        assert_eq!(store.grads(b), &[6.0]);
    }

    #[test]
    fn unused_group_gets_zero_gradient() {
        let mut store = ParamStore::new();
        let g = store.group("used", GroupKind::Network, NETWORK_LR);
        let h = store.group("unused", GroupKind::Network, NETWORK_LR);
        let w = store.alloc(g, &[1.5]);
        let b = store.alloc(g, &[0.0]);
        let other = store.alloc(h, &[4.0, 5.0]);
        let mut sink = GradSink::for_store(&store);
        let mut tape = Tape::new(&store);
        let one = tape.leaf(Array2::from_elem((1, 1), 2.0), false);
        let y = tape.affine(one, w, b);
        let loss = square_sum(&mut tape, y);
        tape.backward(loss, &mut sink).unwrap();
        drop(tape);
        store.accumulate(&sink);
        assert_eq!(store.grads(other), &[0.0, 0.0]);
        assert!(store.grads(w)[0] != 0.0);
    }

    #[test]
    fn activation_derivatives_match_differences() {
        let h = 1e-5;
        for act in [
            Activation::Softplus { beta: 100.0 },
            Activation::Softplus { beta: 1.0 },
            Activation::Sigmoid,
        ] {
            for &x in &[-0.3, -0.01, 0.0, 0.004, 0.2, 1.3] {
                let fd1 = (act.eval(x + h) - act.eval(x - h)) / (2.0 * h);
                let fd2 = (act.deriv(x + h) - act.deriv(x - h)) / (2.0 * h);
                assert!((fd1 - act.deriv(x)).abs() < 1e-6, "{act:?} at {x}");
                assert!((fd2 - act.second_deriv(x)).abs() < 1e-4 * (1.0 + fd2.abs()), "{act:?} at {x}");
            }
        }
    }

    #[test]
    fn softplus_is_stable_for_large_inputs() {
        let sp = Activation::Softplus { beta: 100.0 };
        assert_eq!(sp.eval(50.0), 50.0);
        assert!(sp.eval(-50.0) >= 0.0);
        assert!(sp.eval(-50.0).is_finite());
    }

    #[test]
    fn encode_tangents_match_chain_rule() {
        let store = ParamStore::new();
        let mut tape = Tape::new(&store);
        let p = tape.points(&[[0.3, -0.2, 0.7]], true);
        let e = tape.encode(p, 2);
        let v = tape.value(e);
        assert_eq!(v.ncols(), 3 + 3 * 2 * 2);
        // d/dx of sin(2π x) = 2π cos(2π x)
        let x = 0.3;
        let f = 2.0 * std::f64::consts::PI;
        let col = 3 + 6; // octave 1, sin, axis 0
        assert!((v[[1, col]] - f * (f * x).cos()).abs() < 1e-12);
        // no cross-axis tangent
        assert_eq!(v[[2, col]], 0.0);
    }
}
