//! Tape of recorded operations with reverse-mode gradient propagation.
//!
//! A [`Graph`] is built fresh for every forward pass. Every operation
//! appends one node holding its forward value, so node order is a valid
//! topological order and `backward` is a single reverse sweep.

use std::sync::Arc;

use crate::error::TensorError;
use crate::params::{Gradients, ParamId, ParamStore};
use crate::tensor::{Real, Tensor};

/// Handle to a node of a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op<T> {
    Leaf,
    MatMul(Var, Var),
    Linear {
        w: Var,
        x: Var,
        b: Option<Var>,
    },
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddRow(Var, Var),
    Tanh(Var),
    Sigmoid(Var),
    Ln(Var),
    Affine(Var, T),
    Clamp(Var, T, T),
    Concat(Vec<Var>),
    Stack(Vec<Var>),
    Row(Var, usize),
    Slice(Var, usize),
    Sum(Var),
    MeanRows(Var),
    WeightedSum(Var, Var),
    SoftmaxMasked(Var),
    Gather(Var, Vec<usize>),
    LstmCell {
        x: Var,
        state: Var,
        w: [Var; 4],
        b: [Var; 4],
        gates: Vec<T>,
    },
}

#[derive(Debug)]
struct Node<T> {
    value: Arc<Tensor<T>>,
    op: Op<T>,
    requires_grad: bool,
    grad: Option<Vec<T>>,
}

/// Dynamic computation graph.
#[derive(Debug)]
pub struct Graph<T> {
    nodes: Vec<Node<T>>,
    params: usize,
    backward_done: bool,
}

impl<T: Real> Default for Graph<T> {
    fn default() -> Self {
        Self::new()
    }
}

fn shape_err(op: &'static str, a: &[usize], b: &[usize]) -> TensorError {
    TensorError::Shape {
        op,
        lhs: a.to_vec(),
        rhs: b.to_vec(),
    }
}

#[inline]
fn sigmoid<T: Real>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

impl<T: Real> Graph<T> {
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            params: 0,
            backward_done: false,
        }
    }

    /// Creates a graph whose first nodes are the store's parameters, in
    /// store order, so that [`Graph::param`] is a constant-time lookup.
    pub fn with_params(store: &ParamStore<T>) -> Self {
        let mut g = Self::new();
        for id in store.ids() {
            g.nodes.push(Node {
                value: store.shared(id),
                op: Op::Leaf,
                requires_grad: true,
                grad: None,
            });
        }
        g.params = store.len();
        g
    }

    pub fn param(&self, id: ParamId) -> Var {
        assert!(id.0 < self.params, "parameter {} is not bound", id.0);
        Var(id.0)
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Input that never receives a gradient.
    pub fn constant(&mut self, t: Tensor<T>) -> Var {
        self.push(t, Op::Leaf, false)
    }

    /// Free-standing leaf that accumulates a gradient.
    pub fn leaf(&mut self, t: Tensor<T>) -> Var {
        self.push(t, Op::Leaf, true)
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    /// First element of a node's value; intended for scalars.
    pub fn item(&self, v: Var) -> T {
        self.nodes[v.0].value.data()[0]
    }

    pub fn grad(&self, v: Var) -> Option<&[T]> {
        self.nodes[v.0].grad.as_deref()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Collects the gradients of the bound parameters.
    pub fn param_grads(&self) -> Gradients<T> {
        Gradients::from_vec(
            self.nodes[..self.params]
                .iter()
                .map(|n| n.grad.clone())
                .collect(),
        )
    }

    /// Consumes the graph and moves out the parameter gradients.
    pub fn into_param_grads(mut self) -> Gradients<T> {
        self.nodes.truncate(self.params);
        Gradients::from_vec(self.nodes.into_iter().map(|n| n.grad).collect())
    }

    /// Clears every gradient so `backward` may run again.
    pub fn reset_grads(&mut self) {
        for n in &mut self.nodes {
            n.grad = None;
        }
        self.backward_done = false;
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value: Arc::new(value),
            op,
            requires_grad,
            grad: None,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    fn unary(&mut self, x: Var, f: impl Fn(T) -> T, op: Op<T>) -> Var {
        let xv = self.value(x);
        let data = xv.data().iter().map(|&a| f(a)).collect();
        let t = Tensor::new(xv.shape().to_vec(), data).expect("same shape");
        let rg = self.rg(&[x]);
        self.push(t, op, rg)
    }

    fn binary(
        &mut self,
        name: &'static str,
        a: Var,
        b: Var,
        f: impl Fn(T, T) -> T,
        op: Op<T>,
    ) -> Result<Var, TensorError> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.shape() != bv.shape() {
            return Err(shape_err(name, av.shape(), bv.shape()));
        }
        let data = av
            .data()
            .iter()
            .zip(bv.data())
            .map(|(&x, &y)| f(x, y))
            .collect();
        let t = Tensor::new(av.shape().to_vec(), data)?;
        let rg = self.rg(&[a, b]);
        Ok(self.push(t, op, rg))
    }

    /// Matrix product `[m×k]·[k×n]`, or matrix-vector product `[m×k]·[k]`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.rank() != 2 || !(bv.rank() == 1 || bv.rank() == 2) || av.shape()[1] != bv.shape()[0] {
            return Err(shape_err("matmul", av.shape(), bv.shape()));
        }
        let (m, k) = (av.shape()[0], av.shape()[1]);
        let n = if bv.rank() == 2 { bv.shape()[1] } else { 1 };
        let (ad, bd) = (av.data(), bv.data());
        let mut out = vec![T::zero(); m * n];
        for i in 0..m {
            let orow = &mut out[i * n..(i + 1) * n];
            for p in 0..k {
                let aip = ad[i * k + p];
                let brow = &bd[p * n..(p + 1) * n];
                for (o, &bv) in orow.iter_mut().zip(brow) {
                    *o += aip * bv;
                }
            }
        }
        let shape = if bv.rank() == 2 { vec![m, n] } else { vec![m] };
        let t = Tensor::new(shape, out)?;
        let rg = self.rg(&[a, b]);
        Ok(self.push(t, Op::MatMul(a, b), rg))
    }

    /// Affine map `W x + b` applied to a vector `[in]` or to each row of `[n×in]`.
    pub fn linear(&mut self, w: Var, x: Var, b: Option<Var>) -> Result<Var, TensorError> {
        let (wv, xv) = (self.value(w), self.value(x));
        if wv.rank() != 2 || !(xv.rank() == 1 || xv.rank() == 2) || xv.cols() != wv.shape()[1] {
            return Err(shape_err("linear", wv.shape(), xv.shape()));
        }
        let (o, i) = (wv.shape()[0], wv.shape()[1]);
        if let Some(b) = b {
            let bv = self.value(b);
            if bv.shape() != [o] {
                return Err(shape_err("linear bias", wv.shape(), bv.shape()));
            }
        }
        let rows = xv.rows();
        let wd = wv.data();
        let bias = b.map(|b| self.value(b).data());
        let mut out = vec![T::zero(); rows * o];
        for r in 0..rows {
            let xr = &xv.data()[r * i..(r + 1) * i];
            for (j, slot) in out[r * o..(r + 1) * o].iter_mut().enumerate() {
                let wr = &wd[j * i..(j + 1) * i];
                let mut acc = bias.map_or(T::zero(), |b| b[j]);
                for (&wv, &xv) in wr.iter().zip(xr) {
                    acc += wv * xv;
                }
                *slot = acc;
            }
        }
        let shape = if xv.rank() == 1 {
            vec![o]
        } else {
            vec![rows, o]
        };
        let t = Tensor::new(shape, out)?;
        let mut inputs = vec![w, x];
        inputs.extend(b);
        let rg = self.rg(&inputs);
        Ok(self.push(t, Op::Linear { w, x, b }, rg))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        self.binary("add", a, b, |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        self.binary("sub", a, b, |x, y| x - y, Op::Sub(a, b))
    }

    /// Elementwise (Hadamard) product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        self.binary("mul", a, b, |x, y| x * y, Op::Mul(a, b))
    }

    /// Adds vector `v [d]` to every row of `m [n×d]`.
    pub fn add_row(&mut self, m: Var, v: Var) -> Result<Var, TensorError> {
        let (mv, vv) = (self.value(m), self.value(v));
        if mv.rank() != 2 || vv.rank() != 1 || mv.cols() != vv.numel() {
            return Err(shape_err("add_row", mv.shape(), vv.shape()));
        }
        let d = vv.numel();
        let data = mv
            .data()
            .iter()
            .enumerate()
            .map(|(i, &x)| x + vv.data()[i % d])
            .collect();
        let t = Tensor::new(mv.shape().to_vec(), data)?;
        let rg = self.rg(&[m, v]);
        Ok(self.push(t, Op::AddRow(m, v), rg))
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        self.unary(x, |a| a.tanh(), Op::Tanh(x))
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        self.unary(x, sigmoid, Op::Sigmoid(x))
    }

    /// Natural logarithm.
    pub fn ln(&mut self, x: Var) -> Var {
        self.unary(x, |a| a.ln(), Op::Ln(x))
    }

    /// `scale * x + shift`, elementwise.
    pub fn affine(&mut self, x: Var, scale: T, shift: T) -> Var {
        self.unary(x, |a| scale * a + shift, Op::Affine(x, scale))
    }

    pub fn scale(&mut self, x: Var, factor: T) -> Var {
        self.affine(x, factor, T::zero())
    }

    /// Clamps into `[lo, hi]`; the gradient is zero where clamping is active.
    pub fn clamp(&mut self, x: Var, lo: T, hi: T) -> Var {
        self.unary(x, |a| a.max(lo).min(hi), Op::Clamp(x, lo, hi))
    }

    /// Concatenates rank-1 tensors.
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var, TensorError> {
        if parts.is_empty() {
            return Err(TensorError::EmptyInput { op: "concat" });
        }
        let mut data = Vec::new();
        for &p in parts {
            let pv = self.value(p);
            if pv.rank() != 1 {
                return Err(shape_err(
                    "concat",
                    self.value(parts[0]).shape(),
                    pv.shape(),
                ));
            }
            data.extend_from_slice(pv.data());
        }
        let t = Tensor::vector(data);
        let rg = self.rg(parts);
        Ok(self.push(t, Op::Concat(parts.to_vec()), rg))
    }

    /// Stacks equal-length rank-1 tensors as the rows of a matrix.
    pub fn stack(&mut self, rows: &[Var]) -> Result<Var, TensorError> {
        let first = rows
            .first()
            .ok_or(TensorError::EmptyInput { op: "stack" })?;
        let d = self.value(*first).shape().to_vec();
        if d.len() != 1 {
            return Err(shape_err("stack", &d, &d));
        }
        let mut data = Vec::with_capacity(rows.len() * d[0]);
        for &r in rows {
            let rv = self.value(r);
            if rv.shape() != d.as_slice() {
                return Err(shape_err("stack", &d, rv.shape()));
            }
            data.extend_from_slice(rv.data());
        }
        let t = Tensor::new(vec![rows.len(), d[0]], data)?;
        let rg = self.rg(rows);
        Ok(self.push(t, Op::Stack(rows.to_vec()), rg))
    }

    /// Row `i` of a matrix, as a vector.
    pub fn row(&mut self, m: Var, i: usize) -> Result<Var, TensorError> {
        let mv = self.value(m);
        if mv.rank() != 2 {
            return Err(shape_err("row", mv.shape(), &[i]));
        }
        if i >= mv.rows() {
            return Err(TensorError::Index {
                op: "row",
                index: i,
                extent: mv.rows(),
            });
        }
        let t = Tensor::vector(mv.row(i).to_vec());
        let rg = self.rg(&[m]);
        Ok(self.push(t, Op::Row(m, i), rg))
    }

    /// Contiguous sub-range `[start, start+len)` of a vector.
    pub fn slice(&mut self, v: Var, start: usize, len: usize) -> Result<Var, TensorError> {
        let vv = self.value(v);
        if vv.rank() != 1 || len == 0 {
            return Err(shape_err("slice", vv.shape(), &[start, len]));
        }
        if start + len > vv.numel() {
            return Err(TensorError::Index {
                op: "slice",
                index: start + len,
                extent: vv.numel(),
            });
        }
        let t = Tensor::vector(vv.data()[start..start + len].to_vec());
        let rg = self.rg(&[v]);
        Ok(self.push(t, Op::Slice(v, start), rg))
    }

    /// Sum of all elements, as a scalar.
    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.value(x).data().iter().copied().sum();
        let rg = self.rg(&[x]);
        self.push(Tensor::scalar(s), Op::Sum(x), rg)
    }

    /// Arithmetic mean over the rows of a matrix.
    pub fn mean_rows(&mut self, m: Var) -> Result<Var, TensorError> {
        let mv = self.value(m);
        if mv.rank() != 2 {
            return Err(shape_err("mean_rows", mv.shape(), &[]));
        }
        let (n, d) = (mv.rows(), mv.cols());
        let inv = T::one() / T::c(n as f64);
        let mut out = vec![T::zero(); d];
        for r in 0..n {
            for (o, &x) in out.iter_mut().zip(mv.row(r)) {
                *o += x;
            }
        }
        out.iter_mut().for_each(|o| *o *= inv);
        let rg = self.rg(&[m]);
        Ok(self.push(Tensor::vector(out), Op::MeanRows(m), rg))
    }

    /// `Σ_i w[i] · m[i, :]` for weights `[n]` and rows `[n×d]`.
    pub fn weighted_sum(&mut self, w: Var, m: Var) -> Result<Var, TensorError> {
        let (wv, mv) = (self.value(w), self.value(m));
        if wv.rank() != 1 || mv.rank() != 2 || mv.rows() != wv.numel() {
            return Err(shape_err("weighted_sum", wv.shape(), mv.shape()));
        }
        let mut out = vec![T::zero(); mv.cols()];
        for (i, &wi) in wv.data().iter().enumerate() {
            if wi == T::zero() {
                continue;
            }
            for (o, &x) in out.iter_mut().zip(mv.row(i)) {
                *o += wi * x;
            }
        }
        let rg = self.rg(&[w, m]);
        Ok(self.push(Tensor::vector(out), Op::WeightedSum(w, m), rg))
    }

    /// Softmax over the positions where `mask` is true; masked positions
    /// get exactly zero. Uses max subtraction.
    pub fn softmax_masked(&mut self, logits: Var, mask: &[bool]) -> Result<Var, TensorError> {
        let lv = self.value(logits);
        if lv.rank() != 1 || lv.numel() != mask.len() {
            return Err(shape_err("softmax_masked", lv.shape(), &[mask.len()]));
        }
        let max = lv
            .data()
            .iter()
            .zip(mask)
            .filter(|(_, &m)| m)
            .map(|(&x, _)| x)
            .fold(None, |acc: Option<T>, x| Some(acc.map_or(x, |a| a.max(x))))
            .ok_or(TensorError::EmptyAttention {
                op: "softmax_masked",
            })?;
        let mut out: Vec<T> = lv
            .data()
            .iter()
            .zip(mask)
            .map(|(&x, &m)| if m { (x - max).exp() } else { T::zero() })
            .collect();
        let z: T = out.iter().copied().sum();
        out.iter_mut().for_each(|o| *o = *o / z);
        let rg = self.rg(&[logits]);
        Ok(self.push(Tensor::vector(out), Op::SoftmaxMasked(logits), rg))
    }

    /// Selects rows of `table [V×d]` by index, giving `[ids.len()×d]`.
    pub fn gather_rows(&mut self, table: Var, ids: &[usize]) -> Result<Var, TensorError> {
        let tv = self.value(table);
        if tv.rank() != 2 {
            return Err(shape_err("gather_rows", tv.shape(), &[ids.len()]));
        }
        if ids.is_empty() {
            return Err(TensorError::EmptyInput { op: "gather_rows" });
        }
        let mut data = Vec::with_capacity(ids.len() * tv.cols());
        for &id in ids {
            if id >= tv.rows() {
                return Err(TensorError::Index {
                    op: "gather_rows",
                    index: id,
                    extent: tv.rows(),
                });
            }
            data.extend_from_slice(tv.row(id));
        }
        let t = Tensor::new(vec![ids.len(), tv.cols()], data)?;
        let rg = self.rg(&[table]);
        Ok(self.push(t, Op::Gather(table, ids.to_vec()), rg))
    }

    /// Fused LSTM cell. `state` is `[h; C]` of length `2·hidden`, every `w[g]`
    /// is `[hidden × (input+hidden)]` acting on `[x; h]`, and gates are ordered
    /// input, forget, candidate, output. Returns the new `[h; C]`.
    pub fn lstm_cell(
        &mut self,
        x: Var,
        state: Var,
        w: [Var; 4],
        b: [Var; 4],
    ) -> Result<Var, TensorError> {
        let (xv, sv) = (self.value(x), self.value(state));
        if xv.rank() != 1 || sv.rank() != 1 || sv.numel() % 2 != 0 || sv.numel() == 0 {
            return Err(shape_err("lstm_cell", xv.shape(), sv.shape()));
        }
        let (n_in, hid) = (xv.numel(), sv.numel() / 2);
        let cols = n_in + hid;
        for k in 0..4 {
            let (wv, bv) = (self.value(w[k]), self.value(b[k]));
            if wv.shape() != [hid, cols] {
                return Err(shape_err("lstm_cell weight", wv.shape(), &[hid, cols]));
            }
            if bv.shape() != [hid] {
                return Err(shape_err("lstm_cell bias", bv.shape(), &[hid]));
            }
        }
        let mut xh = Vec::with_capacity(cols);
        xh.extend_from_slice(xv.data());
        xh.extend_from_slice(&sv.data()[..hid]);
        // gates = [i | f | cand | o | tanh(C)]
        let mut gates = vec![T::zero(); 5 * hid];
        for k in 0..4 {
            let (wd, bd) = (self.value(w[k]).data(), self.value(b[k]).data());
            for j in 0..hid {
                let mut acc = bd[j];
                for (&a, &v) in wd[j * cols..(j + 1) * cols].iter().zip(&xh) {
                    acc += a * v;
                }
                gates[k * hid + j] = if k == 2 { acc.tanh() } else { sigmoid(acc) };
            }
        }
        let c_prev = &sv.data()[hid..];
        let mut out = vec![T::zero(); 2 * hid];
        for j in 0..hid {
            let c = gates[hid + j] * c_prev[j] + gates[j] * gates[2 * hid + j];
            let tc = c.tanh();
            gates[4 * hid + j] = tc;
            out[j] = gates[3 * hid + j] * tc;
            out[hid + j] = c;
        }
        let mut inputs = vec![x, state];
        inputs.extend(w);
        inputs.extend(b);
        let rg = self.rg(&inputs);
        Ok(self.push(
            Tensor::vector(out),
            Op::LstmCell {
                x,
                state,
                w,
                b,
                gates,
            },
            rg,
        ))
    }

    /// Propagates `d loss / d node` to every node that requires a gradient.
    ///
    /// Gradients accumulate (`+=`) into each input, so a parameter used in
    /// several places receives the sum of its contributions.
    pub fn backward(&mut self, loss: Var) -> Result<(), TensorError> {
        if self.backward_done {
            return Err(TensorError::BackwardAlreadyRun);
        }
        let lv = self.value(loss);
        if lv.numel() != 1 || lv.shape().iter().any(|&d| d != 1) {
            return Err(TensorError::NotScalar(lv.shape().to_vec()));
        }
        self.backward_done = true;
        if !self.nodes[loss.0].requires_grad {
            return Ok(());
        }
        self.nodes[loss.0].grad = Some(vec![T::one()]);
        for i in (0..=loss.0).rev() {
            let (before, rest) = self.nodes.split_at_mut(i);
            let node = &rest[0];
            if !node.requires_grad {
                continue;
            }
            let Some(g) = node.grad.as_deref() else {
                continue;
            };
            propagate(before, node, g);
        }
        Ok(())
    }
}

/// Gradient buffer of an input node, allocated on first use; `None` when
/// the input does not require a gradient.
fn slot<T: Real>(nodes: &mut [Node<T>], v: Var) -> Option<&mut Vec<T>> {
    let n = &mut nodes[v.0];
    if !n.requires_grad {
        return None;
    }
    let len = n.value.numel();
    Some(n.grad.get_or_insert_with(|| vec![T::zero(); len]))
}

fn val<T>(nodes: &[Node<T>], v: Var) -> Arc<Tensor<T>> {
    Arc::clone(&nodes[v.0].value)
}

fn propagate<T: Real>(nodes: &mut [Node<T>], node: &Node<T>, g: &[T]) {
    let y = node.value.data();
    match &node.op {
        Op::Leaf => {}
        Op::MatMul(a, b) => {
            let (av, bv) = (val(nodes, *a), val(nodes, *b));
            let (m, k) = (av.shape()[0], av.shape()[1]);
            let n = if bv.rank() == 2 { bv.shape()[1] } else { 1 };
            if let Some(ga) = slot(nodes, *a) {
                // dA = G · Bᵀ
                for i in 0..m {
                    for p in 0..k {
                        let brow = &bv.data()[p * n..(p + 1) * n];
                        let grow = &g[i * n..(i + 1) * n];
                        ga[i * k + p] += grow.iter().zip(brow).map(|(&x, &y)| x * y).sum::<T>();
                    }
                }
            }
            if let Some(gb) = slot(nodes, *b) {
                // dB = Aᵀ · G
                for i in 0..m {
                    let grow = &g[i * n..(i + 1) * n];
                    for p in 0..k {
                        let aip = av.data()[i * k + p];
                        for (o, &gv) in gb[p * n..(p + 1) * n].iter_mut().zip(grow) {
                            *o += aip * gv;
                        }
                    }
                }
            }
        }
        Op::Linear { w, x, b } => {
            let (wv, xv) = (val(nodes, *w), val(nodes, *x));
            let (o, i) = (wv.shape()[0], wv.shape()[1]);
            let rows = xv.rows();
            if let Some(gw) = slot(nodes, *w) {
                for r in 0..rows {
                    let xr = &xv.data()[r * i..(r + 1) * i];
                    for j in 0..o {
                        let gj = g[r * o + j];
                        if gj == T::zero() {
                            continue;
                        }
                        for (dst, &xv) in gw[j * i..(j + 1) * i].iter_mut().zip(xr) {
                            *dst += gj * xv;
                        }
                    }
                }
            }
            if let Some(gx) = slot(nodes, *x) {
                for r in 0..rows {
                    let gxr = &mut gx[r * i..(r + 1) * i];
                    for j in 0..o {
                        let gj = g[r * o + j];
                        if gj == T::zero() {
                            continue;
                        }
                        for (dst, &wv) in gxr.iter_mut().zip(&wv.data()[j * i..(j + 1) * i]) {
                            *dst += gj * wv;
                        }
                    }
                }
            }
            if let Some(b) = b {
                if let Some(gb) = slot(nodes, *b) {
                    for r in 0..rows {
                        for (dst, &gv) in gb.iter_mut().zip(&g[r * o..(r + 1) * o]) {
                            *dst += gv;
                        }
                    }
                }
            }
        }
        Op::Add(a, b) => {
            for (v, sign) in [(*a, T::one()), (*b, T::one())] {
                if let Some(gv) = slot(nodes, v) {
                    gv.iter_mut().zip(g).for_each(|(d, &s)| *d += sign * s);
                }
            }
        }
        Op::Sub(a, b) => {
            for (v, sign) in [(*a, T::one()), (*b, -T::one())] {
                if let Some(gv) = slot(nodes, v) {
                    gv.iter_mut().zip(g).for_each(|(d, &s)| *d += sign * s);
                }
            }
        }
        Op::Mul(a, b) => {
            let (av, bv) = (val(nodes, *a), val(nodes, *b));
            if let Some(ga) = slot(nodes, *a) {
                for ((d, &s), &o) in ga.iter_mut().zip(g).zip(bv.data()) {
                    *d += s * o;
                }
            }
            if let Some(gb) = slot(nodes, *b) {
                for ((d, &s), &o) in gb.iter_mut().zip(g).zip(av.data()) {
                    *d += s * o;
                }
            }
        }
        Op::AddRow(m, v) => {
            if let Some(gm) = slot(nodes, *m) {
                gm.iter_mut().zip(g).for_each(|(d, &s)| *d += s);
            }
            if let Some(gv) = slot(nodes, *v) {
                let d = gv.len();
                for (i, &s) in g.iter().enumerate() {
                    gv[i % d] += s;
                }
            }
        }
        Op::Tanh(x) => {
            if let Some(gx) = slot(nodes, *x) {
                for ((d, &s), &yv) in gx.iter_mut().zip(g).zip(y) {
                    *d += s * (T::one() - yv * yv);
                }
            }
        }
        Op::Sigmoid(x) => {
            if let Some(gx) = slot(nodes, *x) {
                for ((d, &s), &yv) in gx.iter_mut().zip(g).zip(y) {
                    *d += s * yv * (T::one() - yv);
                }
            }
        }
        Op::Ln(x) => {
            let xv = val(nodes, *x);
            if let Some(gx) = slot(nodes, *x) {
                for ((d, &s), &xv) in gx.iter_mut().zip(g).zip(xv.data()) {
                    *d += s / xv;
                }
            }
        }
        Op::Affine(x, scale) => {
            if let Some(gx) = slot(nodes, *x) {
                gx.iter_mut().zip(g).for_each(|(d, &s)| *d += *scale * s);
            }
        }
        Op::Clamp(x, lo, hi) => {
            let xv = val(nodes, *x);
            if let Some(gx) = slot(nodes, *x) {
                for ((d, &s), &xv) in gx.iter_mut().zip(g).zip(xv.data()) {
                    if xv >= *lo && xv <= *hi {
                        *d += s;
                    }
                }
            }
        }
        Op::Concat(parts) => {
            let mut off = 0;
            for &p in parts {
                let len = nodes[p.0].value.numel();
                if let Some(gp) = slot(nodes, p) {
                    gp.iter_mut()
                        .zip(&g[off..off + len])
                        .for_each(|(d, &s)| *d += s);
                }
                off += len;
            }
        }
        Op::Stack(rows) => {
            let d = node.value.cols();
            for (r, &v) in rows.iter().enumerate() {
                if let Some(gv) = slot(nodes, v) {
                    gv.iter_mut()
                        .zip(&g[r * d..(r + 1) * d])
                        .for_each(|(dst, &s)| *dst += s);
                }
            }
        }
        Op::Row(m, i) => {
            let d = g.len();
            if let Some(gm) = slot(nodes, *m) {
                gm[i * d..(i + 1) * d]
                    .iter_mut()
                    .zip(g)
                    .for_each(|(dst, &s)| *dst += s);
            }
        }
        Op::Slice(v, start) => {
            if let Some(gv) = slot(nodes, *v) {
                gv[*start..*start + g.len()]
                    .iter_mut()
                    .zip(g)
                    .for_each(|(d, &s)| *d += s);
            }
        }
        Op::Sum(x) => {
            if let Some(gx) = slot(nodes, *x) {
                gx.iter_mut().for_each(|d| *d += g[0]);
            }
        }
        Op::MeanRows(m) => {
            let mv = val(nodes, *m);
            let inv = T::one() / T::c(mv.rows() as f64);
            let d = g.len();
            if let Some(gm) = slot(nodes, *m) {
                for (i, dst) in gm.iter_mut().enumerate() {
                    *dst += g[i % d] * inv;
                }
            }
        }
        Op::WeightedSum(w, m) => {
            let (wv, mv) = (val(nodes, *w), val(nodes, *m));
            let d = mv.cols();
            if let Some(gw) = slot(nodes, *w) {
                for (i, dst) in gw.iter_mut().enumerate() {
                    *dst += mv.row(i).iter().zip(g).map(|(&a, &b)| a * b).sum::<T>();
                }
            }
            if let Some(gm) = slot(nodes, *m) {
                for (i, &wi) in wv.data().iter().enumerate() {
                    for (dst, &s) in gm[i * d..(i + 1) * d].iter_mut().zip(g) {
                        *dst += wi * s;
                    }
                }
            }
        }
        Op::SoftmaxMasked(x) => {
            if let Some(gx) = slot(nodes, *x) {
                let dot: T = g.iter().zip(y).map(|(&a, &b)| a * b).sum();
                for ((d, &s), &yv) in gx.iter_mut().zip(g).zip(y) {
                    *d += yv * (s - dot);
                }
            }
        }
        Op::LstmCell {
            x,
            state,
            w,
            b,
            gates,
        } => {
            let (xv, sv) = (val(nodes, *x), val(nodes, *state));
            let hid = sv.numel() / 2;
            let n_in = xv.numel();
            let cols = n_in + hid;
            let (gi, gf, gc, go, tc) = (
                &gates[..hid],
                &gates[hid..2 * hid],
                &gates[2 * hid..3 * hid],
                &gates[3 * hid..4 * hid],
                &gates[4 * hid..],
            );
            let c_prev = &sv.data()[hid..];
            let (dh, dc_out) = g.split_at(hid);
            // pre-activation gradients, same layout as the gates
            let mut dz = vec![T::zero(); 4 * hid];
            let mut dc_prev = vec![T::zero(); hid];
            for j in 0..hid {
                let dc = dc_out[j] + dh[j] * go[j] * (T::one() - tc[j] * tc[j]);
                dz[j] = dc * gc[j] * gi[j] * (T::one() - gi[j]);
                dz[hid + j] = dc * c_prev[j] * gf[j] * (T::one() - gf[j]);
                dz[2 * hid + j] = dc * gi[j] * (T::one() - gc[j] * gc[j]);
                dz[3 * hid + j] = dh[j] * tc[j] * go[j] * (T::one() - go[j]);
                dc_prev[j] = dc * gf[j];
            }
            let mut xh = Vec::with_capacity(cols);
            xh.extend_from_slice(xv.data());
            xh.extend_from_slice(&sv.data()[..hid]);
            let mut dxh = vec![T::zero(); cols];
            for k in 0..4 {
                let dzk = &dz[k * hid..(k + 1) * hid];
                let wv = val(nodes, w[k]);
                for (j, &d) in dzk.iter().enumerate() {
                    if d == T::zero() {
                        continue;
                    }
                    for (dst, &a) in dxh.iter_mut().zip(&wv.data()[j * cols..(j + 1) * cols]) {
                        *dst += d * a;
                    }
                }
                if let Some(gw) = slot(nodes, w[k]) {
                    for (j, &d) in dzk.iter().enumerate() {
                        if d == T::zero() {
                            continue;
                        }
                        for (dst, &v) in gw[j * cols..(j + 1) * cols].iter_mut().zip(&xh) {
                            *dst += d * v;
                        }
                    }
                }
                if let Some(gb) = slot(nodes, b[k]) {
                    gb.iter_mut().zip(dzk).for_each(|(dst, &d)| *dst += d);
                }
            }
            if let Some(gx) = slot(nodes, *x) {
                gx.iter_mut()
                    .zip(&dxh[..n_in])
                    .for_each(|(dst, &d)| *dst += d);
            }
            if let Some(gs) = slot(nodes, *state) {
                gs[..hid]
                    .iter_mut()
                    .zip(&dxh[n_in..])
                    .for_each(|(dst, &d)| *dst += d);
                gs[hid..]
                    .iter_mut()
                    .zip(&dc_prev)
                    .for_each(|(dst, &d)| *dst += d);
            }
        }
        Op::Gather(table, ids) => {
            let d = node.value.cols();
            if let Some(gt) = slot(nodes, *table) {
                for (r, &id) in ids.iter().enumerate() {
                    for (dst, &s) in gt[id * d..(id + 1) * d]
                        .iter_mut()
                        .zip(&g[r * d..(r + 1) * d])
                    {
                        *dst += s;
                    }
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() < 1e-12
    }

    #[test]
    fn identity_matmul() {
        let mut g = Graph::<f64>::new();
        let i2 = g.constant(Tensor::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap());
        let m = g.constant(Tensor::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap());
        let p = g.matmul(i2, m).unwrap();
        assert_eq!(g.value(p).data(), &[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(g.shape(p), &[2, 2]);
    }

    #[test]
    fn moved_grads_equal_cloned_grads() {
        let mut store = ParamStore::new();
        let w = store.add("w", Tensor::vector(vec![2.0, -1.0]));
        let mut g = Graph::<f64>::with_params(&store);
        let x = g.constant(Tensor::vector(vec![3.0, 5.0]));
        let p = g.param(w);
        let y = g.mul(p, x).unwrap();
        let s = g.sum(y);
        g.backward(s).unwrap();
        let cloned = g.param_grads();
        assert_eq!(cloned.get(w), Some(&[3.0, 5.0][..]));
        assert_eq!(g.into_param_grads(), cloned);
    }

    #[test]
    fn row_times_column() {
        let mut g = Graph::<f64>::new();
        let a = g.constant(Tensor::from_rows(&[vec![1.0, 2.0]]).unwrap());
        let b = g.constant(Tensor::from_rows(&[vec![3.0], vec![4.0]]).unwrap());
        let p = g.matmul(a, b).unwrap();
        assert_eq!(g.shape(p), &[1, 1]);
        assert_eq!(g.item(p), 11.0);
    }

    #[test]
    fn matmul_shape_error_names_both_shapes() {
        let mut g = Graph::<f64>::new();
        let a = g.constant(Tensor::zeros(&[2, 3]));
        let b = g.constant(Tensor::zeros(&[2, 3]));
        let err = g.matmul(a, b).unwrap_err();
        assert_eq!(
            err,
            TensorError::Shape {
                op: "matmul",
                lhs: vec![2, 3],
                rhs: vec![2, 3]
            }
        );
        assert!(err.to_string().contains("[2, 3]"));
    }

    #[test]
    fn pointwise_at_zero() {
        let mut g = Graph::<f64>::new();
        let z = g.leaf(Tensor::vector(vec![0.0]));
        let s = g.sigmoid(z);
        let t = g.tanh(z);
        assert_eq!(g.item(s), 0.5);
        assert_eq!(g.item(t), 0.0);
        let l = g.sum(s);
        g.backward(l).unwrap();
        assert!(close(g.grad(z).unwrap()[0], 0.25));
    }

    #[test]
    fn binary_shape_mismatch() {
        let mut g = Graph::<f32>::new();
        let a = g.constant(Tensor::vector(vec![1.0, 2.0]));
        let b = g.constant(Tensor::vector(vec![1.0]));
        assert!(matches!(
            g.add(a, b),
            Err(TensorError::Shape { op: "add", .. })
        ));
        assert!(matches!(
            g.mul(a, b),
            Err(TensorError::Shape { op: "mul", .. })
        ));
    }

    #[test]
    fn softmax_examples() {
        let mut g = Graph::<f64>::new();
        let x = g.constant(Tensor::vector(vec![0.0, 0.0, 0.0]));
        let s = g.softmax_masked(x, &[true; 3]).unwrap();
        for &w in g.value(s).data() {
            assert!(close(w, 1.0 / 3.0));
        }
        let one = g.constant(Tensor::vector(vec![5.0]));
        let s = g.softmax_masked(one, &[true]).unwrap();
        assert_eq!(g.value(s).data(), &[1.0]);

        let x = g.constant(Tensor::vector(vec![1.0, 2.0, 3.0]));
        let s = g.softmax_masked(x, &[true, true, false]).unwrap();
        let e = std::f64::consts::E;
        let w = g.value(s).data();
        assert!(close(w[0], 1.0 / (1.0 + e)));
        assert!(close(w[1], e / (1.0 + e)));
        assert_eq!(w[2], 0.0);
    }

    #[test]
    fn softmax_is_overflow_safe() {
        let mut g = Graph::<f32>::new();
        let x = g.constant(Tensor::vector(vec![1000.0, 1000.0]));
        let s = g.softmax_masked(x, &[true, true]).unwrap();
        assert_eq!(g.value(s).data(), &[0.5, 0.5]);
    }

    #[test]
    fn softmax_all_masked_is_error() {
        let mut g = Graph::<f64>::new();
        let x = g.constant(Tensor::vector(vec![1.0, 2.0]));
        assert_eq!(
            g.softmax_masked(x, &[false, false]).unwrap_err(),
            TensorError::EmptyAttention {
                op: "softmax_masked"
            }
        );
    }

    #[test]
    fn concat_mean_weighted_sum() {
        let mut g = Graph::<f64>::new();
        let a = g.constant(Tensor::vector(vec![1.0, 2.0]));
        let b = g.constant(Tensor::vector(vec![3.0]));
        let c = g.concat(&[a, b]).unwrap();
        assert_eq!(g.value(c).data(), &[1.0, 2.0, 3.0]);

        let m = g.constant(Tensor::from_rows(&[vec![2.0, 4.0], vec![4.0, 8.0]]).unwrap());
        let mean = g.mean_rows(m).unwrap();
        assert_eq!(g.value(mean).data(), &[3.0, 6.0]);

        let v = g.constant(Tensor::from_rows(&[vec![0.5, -1.5, 2.0]]).unwrap());
        let w = g.constant(Tensor::vector(vec![1.0]));
        let ws = g.weighted_sum(w, v).unwrap();
        assert_eq!(g.value(ws).data(), &[0.5, -1.5, 2.0]);
    }

    #[test]
    fn sum_gives_unit_gradient() {
        let mut g = Graph::<f64>::new();
        let w = g.leaf(Tensor::vector(vec![0.3, -2.0, 7.0]));
        let l = g.sum(w);
        g.backward(l).unwrap();
        assert_eq!(g.grad(w).unwrap(), &[1.0, 1.0, 1.0]);
    }

    #[test]
    fn sigmoid_of_dot_at_zero() {
        let mut g = Graph::<f64>::new();
        let x = [0.5, -1.0, 2.0];
        let w = g.leaf(Tensor::from_rows(&[vec![0.0; 3]]).unwrap());
        let xv = g.constant(Tensor::vector(x.to_vec()));
        let z = g.matmul(w, xv).unwrap();
        let s = g.sigmoid(z);
        let l = g.sum(s);
        g.backward(l).unwrap();
        for (gw, xi) in g.grad(w).unwrap().iter().zip(x) {
            assert!(close(*gw, 0.25 * xi));
        }
    }

    #[test]
    fn backward_rejects_non_scalar_and_reruns() {
        let mut g = Graph::<f64>::new();
        let w = g.leaf(Tensor::vector(vec![1.0, 2.0]));
        let t = g.tanh(w);
        assert_eq!(g.backward(t).unwrap_err(), TensorError::NotScalar(vec![2]));
        let l = g.sum(t);
        g.backward(l).unwrap();
        assert_eq!(g.backward(l).unwrap_err(), TensorError::BackwardAlreadyRun);
        let first = g.grad(w).unwrap().to_vec();
        g.reset_grads();
        g.backward(l).unwrap();
        assert_eq!(g.grad(w).unwrap(), first.as_slice());
    }

    #[test]
    fn shared_leaf_accumulates() {
        let mut g = Graph::<f64>::new();
        let w = g.leaf(Tensor::vector(vec![2.0]));
        let a = g.mul(w, w).unwrap();
        let b = g.add(a, w).unwrap();
        let l = g.sum(b);
        g.backward(l).unwrap();
        // d(w^2 + w)/dw = 2w + 1
        assert_eq!(g.grad(w).unwrap(), &[5.0]);
    }

    #[test]
    fn constants_get_no_gradient() {
        let mut g = Graph::<f64>::new();
        let c = g.constant(Tensor::vector(vec![1.0]));
        let w = g.leaf(Tensor::vector(vec![1.0]));
        let p = g.mul(c, w).unwrap();
        let l = g.sum(p);
        g.backward(l).unwrap();
        assert!(g.grad(c).is_none());
        assert!(g.grad(w).is_some());
    }

    #[test]
    fn params_bind_in_order() {
        let mut store = ParamStore::<f64>::new();
        let a = store.add("a", Tensor::vector(vec![1.0, 2.0]));
        let b = store.add("b", Tensor::vector(vec![3.0, 4.0]));
        let mut g = Graph::with_params(&store);
        let p = g.mul(g.param(a), g.param(b)).unwrap();
        let l = g.sum(p);
        g.backward(l).unwrap();
        let grads = g.param_grads();
        assert_eq!(grads.get(a).unwrap(), &[3.0, 4.0]);
        assert_eq!(grads.get(b).unwrap(), &[1.0, 2.0]);
    }

    #[test]
    fn gather_scatters_back() {
        let mut g = Graph::<f64>::new();
        let t =
            g.leaf(Tensor::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0], vec![5.0, 6.0]]).unwrap());
        let e = g.gather_rows(t, &[2, 0, 2]).unwrap();
        assert_eq!(g.value(e).data(), &[5.0, 6.0, 1.0, 2.0, 5.0, 6.0]);
        let l = g.sum(e);
        g.backward(l).unwrap();
        assert_eq!(g.grad(t).unwrap(), &[1.0, 1.0, 0.0, 0.0, 2.0, 2.0]);
        assert!(matches!(
            g.gather_rows(t, &[3]),
            Err(TensorError::Index { .. })
        ));
    }

    #[test]
    fn fused_lstm_cell_matches_composed_ops() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let (n_in, hid) = (3, 2);
        let mut rnd = |shape: &[usize]| {
            let n = shape.iter().product();
            Tensor::new(
                shape.to_vec(),
                (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect(),
            )
            .unwrap()
        };
        let ws: Vec<Tensor<f64>> = (0..4).map(|_| rnd(&[hid, n_in + hid])).collect();
        let bs: Vec<Tensor<f64>> = (0..4).map(|_| rnd(&[hid])).collect();
        let (x0, s0) = (rnd(&[n_in]), rnd(&[2 * hid]));
        let coef = rnd(&[2 * hid]);

        let run = |fused: bool| {
            let mut g = Graph::<f64>::new();
            let w: Vec<Var> = ws.iter().map(|t| g.leaf(t.clone())).collect();
            let b: Vec<Var> = bs.iter().map(|t| g.leaf(t.clone())).collect();
            let x = g.leaf(x0.clone());
            let s = g.leaf(s0.clone());
            let out = if fused {
                g.lstm_cell(x, s, [w[0], w[1], w[2], w[3]], [b[0], b[1], b[2], b[3]])
                    .unwrap()
            } else {
                let h = g.slice(s, 0, hid).unwrap();
                let c = g.slice(s, hid, hid).unwrap();
                let xh = g.concat(&[x, h]).unwrap();
                let z: Vec<Var> = (0..4)
                    .map(|k| g.linear(w[k], xh, Some(b[k])).unwrap())
                    .collect();
                let (i, f, cand, o) = (
                    g.sigmoid(z[0]),
                    g.sigmoid(z[1]),
                    g.tanh(z[2]),
                    g.sigmoid(z[3]),
                );
                let keep = g.mul(f, c).unwrap();
                let write = g.mul(i, cand).unwrap();
                let c2 = g.add(keep, write).unwrap();
                let tc = g.tanh(c2);
                let h2 = g.mul(o, tc).unwrap();
                g.concat(&[h2, c2]).unwrap()
            };
            let k = g.constant(coef.clone());
            let weighted = g.mul(out, k).unwrap();
            let l = g.sum(weighted);
            g.backward(l).unwrap();
            let mut all = g.value(out).data().to_vec();
            for v in w.iter().chain(&b).chain([&x, &s]) {
                all.extend_from_slice(g.grad(*v).unwrap());
            }
            all
        };
        let (a, b) = (run(true), run(false));
        assert_eq!(a.len(), b.len());
        for (p, q) in a.iter().zip(&b) {
            assert!((p - q).abs() < 1e-12, "{p} vs {q}");
        }
    }
}
