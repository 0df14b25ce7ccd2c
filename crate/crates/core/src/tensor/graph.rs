use std::collections::HashMap;

use super::kernels::{matmul_into, matmul_nt_into, matmul_tn_into};
use super::{ParamId, ParamStore, Tensor};
use crate::error::{Error, Result};

/// Handle to a node in a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Unary {
    Tanh,
    Sigmoid,
    Relu,
    Abs,
    Elu,
    Neg,
    Square,
    Exp,
}

#[derive(Debug)]
enum Op {
    Leaf,
    Param(ParamId),
    MatMul(Var, Var),
    BatchMatMul { a: Var, b: Var, trans_b: bool },
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddRow(Var, Var),
    Scale(Var, f32),
    Unary(Var, Unary),
    Softmax(Var),
    ConcatCols(Vec<Var>),
    SliceCols { x: Var, start: usize },
    ConcatRows(Vec<Var>),
    GatherRows { x: Var, rows: Vec<usize> },
    Pick { x: Var, cols: Vec<usize> },
    Reshape(Var),
    Sum(Var),
    Mean(Var),
    Lerp { a: Var, b: Var, alpha: f32 },
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Define-by-run computation graph.
///
/// Nodes are appended in evaluation order, so reverse insertion order is a
/// valid topological order for the backward sweep and the graph is acyclic
/// by construction.
#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
    params: HashMap<ParamId, Var>,
}

/// Gradients of one backward sweep, indexed by [`Var`].
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Vec<f32>>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&[f32]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }
}

fn unary_forward(kind: Unary, x: f32) -> f32 {
    match kind {
        Unary::Tanh => x.tanh(),
        Unary::Sigmoid => {
            if x >= 0.0 {
                1.0 / (1.0 + (-x).exp())
            } else {
                let e = x.exp();
                e / (1.0 + e)
            }
        }
        Unary::Relu => x.max(0.0),
        Unary::Abs => x.abs(),
        Unary::Elu => {
            if x > 0.0 {
                x
            } else {
                x.exp_m1()
            }
        }
        Unary::Neg => -x,
        Unary::Square => x * x,
        Unary::Exp => x.exp(),
    }
}

/// Derivative of `kind` given input `x` and output `y`.
fn unary_derivative(kind: Unary, x: f32, y: f32) -> f32 {
    match kind {
        Unary::Tanh => 1.0 - y * y,
        Unary::Sigmoid => y * (1.0 - y),
        Unary::Relu => {
            if x > 0.0 {
                1.0
            } else {
                0.0
            }
        }
        Unary::Abs => {
            if x > 0.0 {
                1.0
            } else if x < 0.0 {
                -1.0
            } else {
                0.0
            }
        }
        Unary::Elu => {
            if x > 0.0 {
                1.0
            } else {
                y + 1.0
            }
        }
        Unary::Neg => -1.0,
        Unary::Square => 2.0 * x,
        Unary::Exp => y,
    }
}

#[derive(Clone, Copy)]
enum Binary {
    Add,
    Sub,
    Mul,
}

impl Binary {
    fn apply(self, x: f32, y: f32) -> f32 {
        match self {
            Binary::Add => x + y,
            Binary::Sub => x - y,
            Binary::Mul => x * y,
        }
    }

    fn name(self) -> &'static str {
        match self {
            Binary::Add => "add",
            Binary::Sub => "sub",
            Binary::Mul => "mul",
        }
    }
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn needs(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    /// A leaf that never receives gradient.
    pub fn constant(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf, false)
    }

    /// A leaf whose gradient is tracked (readable through [`Graph::gradients`]).
    pub fn variable(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf, true)
    }

    /// Loads a parameter; repeated loads of the same id share one node, so a
    /// graph must only ever read from one store.
    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Var {
        if let Some(&v) = self.params.get(&id) {
            return v;
        }
        let v = self.push(store.value(id).clone(), Op::Param(id), true);
        self.params.insert(id, v);
        v
    }

    pub fn detach(&mut self, v: Var) -> Var {
        let value = self.nodes[v.0].value.clone();
        self.constant(value)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(Error::dim("matmul", sa, sb));
        }
        let (m, k, n) = (sa[0], sa[1], sb[1]);
        let mut out = vec![0.0; m * n];
        matmul_into(&mut out, self.value(a).data(), self.value(b).data(), m, k, n);
        let rg = self.needs(&[a, b]);
        Ok(self.push(Tensor::new(vec![m, n], out)?, Op::MatMul(a, b), rg))
    }

    /// Batched product over the leading axis: `[g, m, k] x [g, k, n]`, or
    /// `[g, m, k] x [g, n, k]^T` when `trans_b` is set.
    pub fn bmm(&mut self, a: Var, b: Var, trans_b: bool) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        let ok = sa.len() == 3
            && sb.len() == 3
            && sa[0] == sb[0]
            && if trans_b { sa[2] == sb[2] } else { sa[2] == sb[1] };
        if !ok {
            return Err(Error::dim("bmm", sa, sb));
        }
        let (groups, m, k) = (sa[0], sa[1], sa[2]);
        let n = if trans_b { sb[1] } else { sb[2] };
        let mut out = vec![0.0; groups * m * n];
        let (ad, bd) = (self.value(a).data(), self.value(b).data());
        for grp in 0..groups {
            let o = &mut out[grp * m * n..(grp + 1) * m * n];
            let ag = &ad[grp * m * k..(grp + 1) * m * k];
            let bg = &bd[grp * k * n..(grp + 1) * k * n];
            if trans_b {
                matmul_nt_into(o, ag, bg, m, k, n);
            } else {
                matmul_into(o, ag, bg, m, k, n);
            }
        }
        let rg = self.needs(&[a, b]);
        Ok(self.push(
            Tensor::new(vec![groups, m, n], out)?,
            Op::BatchMatMul { a, b, trans_b },
            rg,
        ))
    }

    fn binary(&mut self, a: Var, b: Var, kind: Binary) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        let out = if ta.shape() == tb.shape() {
            let data = ta
                .data()
                .iter()
                .zip(tb.data())
                .map(|(&x, &y)| kind.apply(x, y))
                .collect();
            Tensor::new(ta.shape().to_vec(), data)?
        } else if tb.numel() == 1 {
            let y = tb.item();
            let data = ta.data().iter().map(|&x| kind.apply(x, y)).collect();
            Tensor::new(ta.shape().to_vec(), data)?
        } else if ta.numel() == 1 {
            let x = ta.item();
            let data = tb.data().iter().map(|&y| kind.apply(x, y)).collect();
            Tensor::new(tb.shape().to_vec(), data)?
        } else {
            return Err(Error::dim(kind.name(), ta.shape(), tb.shape()));
        };
        let op = match kind {
            Binary::Add => Op::Add(a, b),
            Binary::Sub => Op::Sub(a, b),
            Binary::Mul => Op::Mul(a, b),
        };
        let rg = self.needs(&[a, b]);
        Ok(self.push(out, op, rg))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, Binary::Add)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, Binary::Sub)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, Binary::Mul)
    }

    /// Adds a bias vector `[n]` to every row of `a[.., n]`.
    pub fn add_row(&mut self, a: Var, bias: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(bias));
        if tb.rank() != 1 || ta.cols() != tb.numel() {
            return Err(Error::dim("add_row", ta.shape(), tb.shape()));
        }
        let n = tb.numel();
        let mut data = ta.data().to_vec();
        for row in data.chunks_mut(n) {
            for (x, b) in row.iter_mut().zip(tb.data()) {
                *x += b;
            }
        }
        let out = Tensor::new(ta.shape().to_vec(), data)?;
        let rg = self.needs(&[a, bias]);
        Ok(self.push(out, Op::AddRow(a, bias), rg))
    }

    pub fn scale(&mut self, a: Var, c: f32) -> Var {
        let ta = self.value(a);
        let data = ta.data().iter().map(|&x| x * c).collect();
        let out = Tensor::new(ta.shape().to_vec(), data).expect("same shape");
        let rg = self.needs(&[a]);
        self.push(out, Op::Scale(a, c), rg)
    }

    pub fn unary(&mut self, a: Var, kind: Unary) -> Var {
        let ta = self.value(a);
        let data = ta.data().iter().map(|&x| unary_forward(kind, x)).collect();
        let out = Tensor::new(ta.shape().to_vec(), data).expect("same shape");
        let rg = self.needs(&[a]);
        self.push(out, Op::Unary(a, kind), rg)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.unary(a, Unary::Tanh)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.unary(a, Unary::Sigmoid)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        self.unary(a, Unary::Relu)
    }

    pub fn abs(&mut self, a: Var) -> Var {
        self.unary(a, Unary::Abs)
    }

    pub fn elu(&mut self, a: Var) -> Var {
        self.unary(a, Unary::Elu)
    }

    pub fn square(&mut self, a: Var) -> Var {
        self.unary(a, Unary::Square)
    }

    /// Softmax along the last axis. Entries with `mask[i] == true` are
    /// excluded and come out as exactly zero.
    pub fn softmax(&mut self, x: Var, mask: Option<&[bool]>) -> Result<Var> {
        let tx = self.value(x);
        if let Some(m) = mask {
            if m.len() != tx.numel() {
                return Err(Error::dim("softmax mask", tx.shape(), &[m.len()]));
            }
        }
        let cols = tx.cols();
        let mut out = vec![0.0f32; tx.numel()];
        for (r, row) in tx.data().chunks(cols).enumerate() {
            let live = |j: usize| mask.map_or(true, |m| !m[r * cols + j]);
            let max = (0..cols)
                .filter(|&j| live(j))
                .map(|j| row[j])
                .fold(None, |acc: Option<f32>, v| Some(acc.map_or(v, |a| a.max(v))))
                .ok_or(Error::DegenerateSoftmax { row: r })?;
            let o = &mut out[r * cols..(r + 1) * cols];
            let mut total = 0.0f32;
            for j in (0..cols).filter(|&j| live(j)) {
                o[j] = (row[j] - max).exp();
                total += o[j];
            }
            for v in o.iter_mut() {
                *v /= total;
            }
        }
        let out = Tensor::new(tx.shape().to_vec(), out)?;
        let rg = self.needs(&[x]);
        Ok(self.push(out, Op::Softmax(x), rg))
    }

    /// Concatenates along the last axis; inputs are viewed as `[rows, cols]`.
    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let rows = self.value(parts[0]).rows();
        let mut total = 0;
        for &p in parts {
            let t = self.value(p);
            if t.rows() != rows {
                return Err(Error::dim("concat_cols", self.shape(parts[0]), t.shape()));
            }
            total += t.cols();
        }
        let mut data = Vec::with_capacity(rows * total);
        for r in 0..rows {
            for &p in parts {
                data.extend_from_slice(self.value(p).row(r));
            }
        }
        let rg = self.needs(parts);
        Ok(self.push(
            Tensor::new(vec![rows, total], data)?,
            Op::ConcatCols(parts.to_vec()),
            rg,
        ))
    }

    pub fn slice_cols(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let tx = self.value(x);
        let cols = tx.cols();
        if len == 0 || start + len > cols {
            return Err(Error::dim("slice_cols", tx.shape(), &[start, len]));
        }
        let rows = tx.rows();
        let mut data = Vec::with_capacity(rows * len);
        for r in 0..rows {
            data.extend_from_slice(&tx.row(r)[start..start + len]);
        }
        let rg = self.needs(&[x]);
        Ok(self.push(
            Tensor::new(vec![rows, len], data)?,
            Op::SliceCols { x, start },
            rg,
        ))
    }

    /// Concatenates along the first axis; trailing axes must agree.
    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        let tail = self.shape(parts[0])[1..].to_vec();
        let mut lead = 0;
        for &p in parts {
            let s = self.shape(p);
            if s[1..] != tail[..] {
                return Err(Error::dim("concat_rows", self.shape(parts[0]), s));
            }
            lead += s[0];
        }
        let mut data = Vec::new();
        for &p in parts {
            data.extend_from_slice(self.value(p).data());
        }
        let mut shape = vec![lead];
        shape.extend_from_slice(&tail);
        let rg = self.needs(parts);
        Ok(self.push(Tensor::new(shape, data)?, Op::ConcatRows(parts.to_vec()), rg))
    }

    /// Selects entries of the first axis.
    pub fn gather_rows(&mut self, x: Var, rows: &[usize]) -> Result<Var> {
        let tx = self.value(x);
        let lead = tx.shape()[0];
        let width = tx.numel() / lead;
        if rows.is_empty() {
            return Err(Error::EmptyBatch);
        }
        if let Some(&bad) = rows.iter().find(|&&r| r >= lead) {
            return Err(Error::dim("gather_rows", tx.shape(), &[bad]));
        }
        let mut data = Vec::with_capacity(rows.len() * width);
        for &r in rows {
            data.extend_from_slice(&tx.data()[r * width..(r + 1) * width]);
        }
        let mut shape = tx.shape().to_vec();
        shape[0] = rows.len();
        let rg = self.needs(&[x]);
        Ok(self.push(
            Tensor::new(shape, data)?,
            Op::GatherRows {
                x,
                rows: rows.to_vec(),
            },
            rg,
        ))
    }

    /// Picks one column per row of `x[m, n]`, giving `[m]`.
    pub fn pick(&mut self, x: Var, cols: &[usize]) -> Result<Var> {
        let tx = self.value(x);
        let (m, n) = (tx.rows(), tx.cols());
        if cols.len() != m || cols.iter().any(|&c| c >= n) {
            return Err(Error::dim("pick", tx.shape(), &[cols.len()]));
        }
        let data = cols.iter().enumerate().map(|(r, &c)| tx.at(r, c)).collect();
        let rg = self.needs(&[x]);
        Ok(self.push(
            Tensor::new(vec![m], data)?,
            Op::Pick {
                x,
                cols: cols.to_vec(),
            },
            rg,
        ))
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let out = self.value(x).clone().reshape(shape.to_vec())?;
        let rg = self.needs(&[x]);
        Ok(self.push(out, Op::Reshape(x), rg))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s: f32 = self.value(x).data().iter().sum();
        let rg = self.needs(&[x]);
        self.push(Tensor::scalar(s), Op::Sum(x), rg)
    }

    pub fn mean(&mut self, x: Var) -> Var {
        let t = self.value(x);
        let s: f32 = t.data().iter().sum::<f32>() / t.numel() as f32;
        let rg = self.needs(&[x]);
        self.push(Tensor::scalar(s), Op::Mean(x), rg)
    }

    /// `(1 - alpha) * a + alpha * b`, exact at both endpoints.
    pub fn lerp(&mut self, a: Var, b: Var, alpha: f32) -> Result<Var> {
        if !(0.0..=1.0).contains(&alpha) {
            return Err(Error::Schedule(alpha));
        }
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() != tb.shape() {
            return Err(Error::dim("lerp", ta.shape(), tb.shape()));
        }
        let out = if alpha == 0.0 {
            ta.clone()
        } else if alpha == 1.0 {
            tb.clone()
        } else {
            let data = ta
                .data()
                .iter()
                .zip(tb.data())
                .map(|(&x, &y)| alpha * y + (1.0 - alpha) * x)
                .collect();
            Tensor::new(ta.shape().to_vec(), data)?
        };
        let rg = self.needs(&[a, b]);
        Ok(self.push(out, Op::Lerp { a, b, alpha }, rg))
    }

    /// Runs the backward sweep from a scalar `loss` and returns every
    /// gradient that was produced.
    pub fn gradients(&self, loss: Var) -> Result<Gradients> {
        let lt = self.value(loss);
        if lt.numel() != 1 {
            return Err(Error::Rank {
                op: "backward",
                shape: lt.shape().to_vec(),
            });
        }
        let mut grads: Vec<Option<Vec<f32>>> = vec![None; self.nodes.len()];
        if !self.nodes[loss.0].requires_grad {
            return Ok(Gradients { grads });
        }
        grads[loss.0] = Some(vec![1.0]);
        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else {
                continue;
            };
            self.backprop_node(idx, &g, &mut grads);
            grads[idx] = Some(g);
        }
        Ok(Gradients { grads })
    }

    /// Accumulates d(loss)/d(param) into `store` for every reachable parameter.
    pub fn backward(&self, loss: Var, store: &mut ParamStore) -> Result<()> {
        let grads = self.gradients(loss)?;
        for (idx, node) in self.nodes.iter().enumerate() {
            if let (Op::Param(id), Some(g)) = (&node.op, &grads.grads[idx]) {
                store.accumulate_grad(*id, g);
            }
        }
        Ok(())
    }

    fn backprop_node(&self, idx: usize, g: &[f32], grads: &mut [Option<Vec<f32>>]) {
        let node = &self.nodes[idx];
        let nodes = &self.nodes;
        let mut acc = |v: Var, f: &mut dyn FnMut(&mut [f32])| {
            let target = &nodes[v.0];
            if !target.requires_grad {
                return;
            }
            let slot = grads[v.0].get_or_insert_with(|| vec![0.0; target.value.numel()]);
            f(slot);
        };
        match &node.op {
            Op::Leaf | Op::Param(_) => {}
            Op::MatMul(a, b) => {
                let (ta, tb) = (&nodes[a.0].value, &nodes[b.0].value);
                let (m, k, n) = (ta.shape()[0], ta.shape()[1], tb.shape()[1]);
                acc(*a, &mut |da| matmul_nt_into(da, g, tb.data(), m, n, k));
                acc(*b, &mut |db| matmul_tn_into(db, ta.data(), g, m, k, n));
            }
            Op::BatchMatMul { a, b, trans_b } => {
                let (ta, tb) = (&nodes[a.0].value, &nodes[b.0].value);
                let (groups, m, k) = (ta.shape()[0], ta.shape()[1], ta.shape()[2]);
                let n = node.value.shape()[2];
                let (ad, bd) = (ta.data(), tb.data());
                acc(*a, &mut |da| {
                    for grp in 0..groups {
                        let dag = &mut da[grp * m * k..(grp + 1) * m * k];
                        let gg = &g[grp * m * n..(grp + 1) * m * n];
                        let bg = &bd[grp * k * n..(grp + 1) * k * n];
                        if *trans_b {
                            matmul_into(dag, gg, bg, m, n, k);
                        } else {
                            matmul_nt_into(dag, gg, bg, m, n, k);
                        }
                    }
                });
                acc(*b, &mut |db| {
                    for grp in 0..groups {
                        let dbg = &mut db[grp * k * n..(grp + 1) * k * n];
                        let gg = &g[grp * m * n..(grp + 1) * m * n];
                        let ag = &ad[grp * m * k..(grp + 1) * m * k];
                        if *trans_b {
                            matmul_tn_into(dbg, gg, ag, m, n, k);
                        } else {
                            matmul_tn_into(dbg, ag, gg, m, k, n);
                        }
                    }
                });
            }
            Op::Add(a, b) | Op::Sub(a, b) => {
                let sign = if matches!(node.op, Op::Sub(..)) { -1.0 } else { 1.0 };
                for (v, s) in [(*a, 1.0f32), (*b, sign)] {
                    let broadcast = nodes[v.0].value.numel() != g.len();
                    acc(v, &mut |dv| {
                        if broadcast {
                            dv[0] += s * g.iter().sum::<f32>();
                        } else {
                            dv.iter_mut().zip(g).for_each(|(d, &gi)| *d += s * gi);
                        }
                    });
                }
            }
            Op::Mul(a, b) => {
                for (v, other) in [(*a, *b), (*b, *a)] {
                    let ov = nodes[other.0].value.data();
                    let broadcast = nodes[v.0].value.numel() != g.len();
                    acc(v, &mut |dv| {
                        let at = |i: usize| if ov.len() == 1 { ov[0] } else { ov[i] };
                        if broadcast {
                            dv[0] += g.iter().enumerate().map(|(i, &gi)| gi * at(i)).sum::<f32>();
                        } else {
                            for (i, (d, &gi)) in dv.iter_mut().zip(g).enumerate() {
                                *d += gi * at(i);
                            }
                        }
                    });
                }
            }
            Op::AddRow(a, bias) => {
                acc(*a, &mut |da| da.iter_mut().zip(g).for_each(|(d, &gi)| *d += gi));
                acc(*bias, &mut |db| {
                    let n = db.len();
                    for row in g.chunks(n) {
                        db.iter_mut().zip(row).for_each(|(d, &gi)| *d += gi);
                    }
                });
            }
            Op::Scale(a, c) => {
                acc(*a, &mut |da| da.iter_mut().zip(g).for_each(|(d, &gi)| *d += c * gi));
            }
            Op::Unary(a, kind) => {
                let x = nodes[a.0].value.data();
                let y = node.value.data();
                acc(*a, &mut |da| {
                    for i in 0..da.len() {
                        da[i] += g[i] * unary_derivative(*kind, x[i], y[i]);
                    }
                });
            }
            Op::Softmax(x) => {
                let y = node.value.data();
                let cols = node.value.cols();
                acc(*x, &mut |dx| {
                    for r in 0..y.len() / cols {
                        let (yr, gr) = (&y[r * cols..(r + 1) * cols], &g[r * cols..(r + 1) * cols]);
                        let dot: f32 = yr.iter().zip(gr).map(|(a, b)| a * b).sum();
                        for j in 0..cols {
                            dx[r * cols + j] += yr[j] * (gr[j] - dot);
                        }
                    }
                });
            }
            Op::ConcatCols(parts) => {
                let total = node.value.cols();
                let rows = node.value.rows();
                let mut offset = 0;
                for &p in parts {
                    let w = nodes[p.0].value.cols();
                    acc(p, &mut |dp| {
                        for r in 0..rows {
                            let src = &g[r * total + offset..r * total + offset + w];
                            dp[r * w..(r + 1) * w]
                                .iter_mut()
                                .zip(src)
                                .for_each(|(d, &s)| *d += s);
                        }
                    });
                    offset += w;
                }
            }
            Op::SliceCols { x, start } => {
                let cols = nodes[x.0].value.cols();
                let len = node.value.cols();
                acc(*x, &mut |dx| {
                    for (r, row) in g.chunks(len).enumerate() {
                        dx[r * cols + start..r * cols + start + len]
                            .iter_mut()
                            .zip(row)
                            .for_each(|(d, &s)| *d += s);
                    }
                });
            }
            Op::ConcatRows(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let n = nodes[p.0].value.numel();
                    acc(p, &mut |dp| {
                        dp.iter_mut()
                            .zip(&g[offset..offset + n])
                            .for_each(|(d, &s)| *d += s);
                    });
                    offset += n;
                }
            }
            Op::GatherRows { x, rows } => {
                let width = node.value.numel() / rows.len();
                acc(*x, &mut |dx| {
                    for (i, &r) in rows.iter().enumerate() {
                        dx[r * width..(r + 1) * width]
                            .iter_mut()
                            .zip(&g[i * width..(i + 1) * width])
                            .for_each(|(d, &s)| *d += s);
                    }
                });
            }
            Op::Pick { x, cols } => {
                let n = nodes[x.0].value.cols();
                acc(*x, &mut |dx| {
                    for (r, &c) in cols.iter().enumerate() {
                        dx[r * n + c] += g[r];
                    }
                });
            }
            Op::Reshape(x) => {
                acc(*x, &mut |dx| dx.iter_mut().zip(g).for_each(|(d, &s)| *d += s));
            }
            Op::Sum(x) => {
                acc(*x, &mut |dx| dx.iter_mut().for_each(|d| *d += g[0]));
            }
            Op::Mean(x) => {
                let n = nodes[x.0].value.numel() as f32;
                acc(*x, &mut |dx| dx.iter_mut().for_each(|d| *d += g[0] / n));
            }
            Op::Lerp { a, b, alpha } => {
                acc(*a, &mut |da| {
                    da.iter_mut().zip(g).for_each(|(d, &s)| *d += (1.0 - alpha) * s)
                });
                acc(*b, &mut |db| db.iter_mut().zip(g).for_each(|(d, &s)| *d += alpha * s));
            }
        }
    }
}
