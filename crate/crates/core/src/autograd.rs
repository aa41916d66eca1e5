//! Dense 2-D tensors and a tape for reverse-mode differentiation.
//!
//! Every vector is a `1 × n` row, matching the row-vector convention used by
//! the model (`x W` rather than `W x`). A [`Graph`] records operations in
//! execution order; [`Graph::backward`] sweeps the tape in reverse and adds
//! parameter gradients into a [`Gradients`] buffer, so several graphs (one
//! per instance of a minibatch) can accumulate into the same buffer.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::Rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Shape {
                op: "from_vec",
                lhs: [rows, cols],
                rhs: [data.len(), 1],
            });
        }
        Ok(Self { rows, cols, data })
    }

    pub fn row_vector(data: Vec<f64>) -> Self {
        Self {
            rows: 1,
            cols: data.len(),
            data,
        }
    }

    pub fn scalar(v: f64) -> Self {
        Self::row_vector(vec![v])
    }

    /// Uniform entries in `[-scale, scale]`.
    pub fn uniform(rows: usize, cols: usize, scale: f64, rng: &mut Rng) -> Self {
        let data = (0..rows * cols).map(|_| rng.uniform(-scale, scale)).collect();
        Self { rows, cols, data }
    }

    pub fn shape(&self) -> [usize; 2] {
        [self.rows, self.cols]
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn transpose(&self) -> Tensor {
        let mut out = Tensor::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                out.data[c * self.rows + r] = self.data[r * self.cols + c];
            }
        }
        out
    }

    pub fn matmul(&self, other: &Tensor) -> Result<Tensor> {
        if self.cols != other.rows {
            return Err(Error::Shape {
                op: "matmul",
                lhs: self.shape(),
                rhs: other.shape(),
            });
        }
        let mut out = Tensor::zeros(self.rows, other.cols);
        gemm(self, false, other, false, &mut out);
        Ok(out)
    }

    pub fn squared_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum()
    }

    fn add_assign(&mut self, other: &Tensor) {
        debug_assert_eq!(self.shape(), other.shape());
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }
}

/// Products up to this many multiply-adds skip the packing kernel, whose
/// per-call setup dominates for the one-row products of recurrent steps.
const SMALL_GEMM: usize = 1 << 15;

fn small_gemm(a: &Tensor, a_t: bool, b: &Tensor, b_t: bool, out: &mut Tensor, [m, k, n]: [usize; 3]) {
    let at = |i: usize, p: usize| if a_t { a.data[p * a.cols + i] } else { a.data[i * a.cols + p] };
    for i in 0..m {
        let row = &mut out.data[i * n..(i + 1) * n];
        if b_t {
            for (j, o) in row.iter_mut().enumerate() {
                let bj = &b.data[j * b.cols..(j + 1) * b.cols];
                *o += (0..k).map(|p| at(i, p) * bj[p]).sum::<f64>();
            }
        } else {
            for p in 0..k {
                let x = at(i, p);
                for (o, y) in row.iter_mut().zip(&b.data[p * n..(p + 1) * n]) {
                    *o += x * y;
                }
            }
        }
    }
}

/// `out += op(a) · op(b)` where `op` optionally transposes.
#[allow(unsafe_code)]
fn gemm(a: &Tensor, a_t: bool, b: &Tensor, b_t: bool, out: &mut Tensor) {
    let (m, k) = if a_t { (a.cols, a.rows) } else { (a.rows, a.cols) };
    let (k2, n) = if b_t { (b.cols, b.rows) } else { (b.rows, b.cols) };
    assert_eq!(k, k2, "gemm inner dimensions");
    assert_eq!(out.shape(), [m, n], "gemm output shape");
    if m == 0 || n == 0 || k == 0 {
        return;
    }
    if m * n * k <= SMALL_GEMM {
        small_gemm(a, a_t, b, b_t, out, [m, k, n]);
        return;
    }
    let (rsa, csa) = if a_t { (1, a.cols as isize) } else { (a.cols as isize, 1) };
    let (rsb, csb) = if b_t { (1, b.cols as isize) } else { (b.cols as isize, 1) };
    // SAFETY: the asserts above pin every operand to its buffer: `a` is read
    // as m×k, `b` as k×n and `out` written as m×n with the strides derived
    // from the owning tensors' row-major layout.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.data.as_ptr(),
            rsa,
            csa,
            b.data.as_ptr(),
            rsb,
            csb,
            1.0,
            out.data.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + libm::exp(-x))
    } else {
        let e = libm::exp(x);
        e / (1.0 + e)
    }
}

fn softmax_in_place(row: &mut [f64]) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in row.iter_mut() {
        *v = libm::exp(*v - max);
        sum += *v;
    }
    for v in row.iter_mut() {
        *v /= sum;
    }
}

/// Numerically stable softmax of a slice.
pub fn softmax(values: &[f64]) -> Vec<f64> {
    let mut out = values.to_vec();
    if !out.is_empty() {
        softmax_in_place(&mut out);
    }
    out
}

/// Numerically stable `ln Σ exp(v)`.
pub fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + libm::log(values.iter().map(|v| libm::exp(v - max)).sum::<f64>())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ParamId(pub usize);

/// Named trainable tensors.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParamStore {
    names: Vec<String>,
    values: Vec<Tensor>,
    index: BTreeMap<String, ParamId>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, value: Tensor) -> ParamId {
        let name = name.into();
        assert!(!self.index.contains_key(&name), "duplicate parameter {name}");
        let id = ParamId(self.values.len());
        self.index.insert(name.clone(), id);
        self.names.push(name);
        self.values.push(value);
        id
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.index.get(name).copied()
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.values[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.values[id.0]
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &str, &Tensor)> {
        self.names
            .iter()
            .zip(&self.values)
            .enumerate()
            .map(|(i, (n, v))| (ParamId(i), n.as_str(), v))
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.values.len()).map(ParamId)
    }

    pub fn num_scalars(&self) -> usize {
        self.values.iter().map(Tensor::len).sum()
    }

    /// Replaces a parameter's values, keeping its shape.
    pub fn set(&mut self, name: &str, value: Tensor) -> Result<()> {
        let id = self.id(name).ok_or_else(|| Error::UnknownParam(name.into()))?;
        let old = &self.values[id.0];
        if old.shape() != value.shape() {
            return Err(Error::Shape {
                op: "set_param",
                lhs: old.shape(),
                rhs: value.shape(),
            });
        }
        self.values[id.0] = value;
        Ok(())
    }
}

/// Gradient buffers aligned with a [`ParamStore`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    grads: Vec<Tensor>,
}

impl Gradients {
    pub fn zeros_like(store: &ParamStore) -> Self {
        Self {
            grads: store.values.iter().map(|t| Tensor::zeros(t.rows, t.cols)).collect(),
        }
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.grads[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.grads[id.0]
    }

    pub fn zero(&mut self) {
        for g in &mut self.grads {
            g.data.iter_mut().for_each(|v| *v = 0.0);
        }
    }

    pub fn global_norm(&self) -> f64 {
        libm::sqrt(self.grads.iter().map(Tensor::squared_norm).sum())
    }

    pub fn scale(&mut self, factor: f64) {
        for g in &mut self.grads {
            g.data.iter_mut().for_each(|v| *v *= factor);
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Tensor)> {
        self.grads.iter().enumerate().map(|(i, g)| (ParamId(i), g))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Var(usize);

#[derive(Debug, Clone)]
enum Op {
    Constant,
    Param(ParamId),
    MatMul(Var, Var),
    Transpose(Var),
    ConcatCols(Vec<Var>),
    ConcatRows(Vec<Var>),
    RowSoftmax(Var),
    Tanh(Var),
    Sigmoid(Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddRow(Var, Var),
    Scale(Var, f64),
    Sum(Var),
    MeanRows(Var),
    SliceRows(Var, usize),
    SliceCols(Var, usize),
    LogSumExp(Var),
}

#[derive(Debug, Clone)]
struct Node {
    value: Tensor,
    op: Op,
    tracked: bool,
}

/// A differentiation tape. Not shared across threads; build one per unit of
/// work and drop it afterwards.
#[derive(Debug, Clone, Default)]
pub struct Graph {
    nodes: Vec<Node>,
    params: BTreeMap<ParamId, Var>,
    no_grad: bool,
}

macro_rules! shape_check {
    ($cond:expr, $op:expr, $a:expr, $b:expr) => {
        if !$cond {
            return Err(Error::Shape {
                op: $op,
                lhs: $a,
                rhs: $b,
            });
        }
    };
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    /// A tape that records values only: parameters enter as constants and
    /// [`Graph::backward`] produces nothing.
    pub fn inference() -> Self {
        Self {
            no_grad: true,
            ..Self::default()
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> [usize; 2] {
        self.nodes[v.0].value.shape()
    }

    /// Value of a `1 × 1` node.
    pub fn scalar(&self, v: Var) -> f64 {
        self.nodes[v.0].value.data[0]
    }

    fn push(&mut self, value: Tensor, op: Op, parents: &[Var]) -> Var {
        let tracked = !self.no_grad && parents.iter().any(|p| self.nodes[p.0].tracked);
        self.nodes.push(Node { value, op, tracked });
        Var(self.nodes.len() - 1)
    }

    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Constant, &[])
    }

    /// The node for a parameter, created on first use.
    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Var {
        if let Some(&v) = self.params.get(&id) {
            return v;
        }
        let node = Node {
            value: store.get(id).clone(),
            op: Op::Param(id),
            tracked: !self.no_grad,
        };
        self.nodes.push(node);
        let v = Var(self.nodes.len() - 1);
        self.params.insert(id, v);
        v
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).matmul(self.value(b))?;
        Ok(self.push(value, Op::MatMul(a, b), &[a, b]))
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let value = self.value(a).transpose();
        self.push(value, Op::Transpose(a), &[a])
    }

    /// Horizontal concatenation of tensors with equal row counts.
    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let rows = self.shape(parts[0])[0];
        let mut cols = 0;
        for &p in parts {
            shape_check!(self.shape(p)[0] == rows, "concat_cols", self.shape(parts[0]), self.shape(p));
            cols += self.shape(p)[1];
        }
        let mut out = Tensor::zeros(rows, cols);
        let mut offset = 0;
        for &p in parts {
            let t = self.value(p);
            for r in 0..rows {
                out.data[r * cols + offset..r * cols + offset + t.cols].copy_from_slice(t.row(r));
            }
            offset += t.cols;
        }
        Ok(self.push(out, Op::ConcatCols(parts.to_vec()), parts))
    }

    /// Vertical stacking of tensors with equal column counts.
    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        let cols = self.shape(parts[0])[1];
        let mut data = Vec::new();
        for &p in parts {
            shape_check!(self.shape(p)[1] == cols, "concat_rows", self.shape(parts[0]), self.shape(p));
            data.extend_from_slice(&self.value(p).data);
        }
        let rows = data.len() / cols.max(1);
        let value = Tensor { rows, cols, data };
        Ok(self.push(value, Op::ConcatRows(parts.to_vec()), parts))
    }

    pub fn row_softmax(&mut self, a: Var) -> Var {
        let mut value = self.value(a).clone();
        let cols = value.cols;
        if cols > 0 {
            for row in value.data.chunks_mut(cols) {
                softmax_in_place(row);
            }
        }
        self.push(value, Op::RowSoftmax(a), &[a])
    }

    /// Softmax down each column.
    pub fn col_softmax(&mut self, a: Var) -> Var {
        let t = self.transpose(a);
        let s = self.row_softmax(t);
        self.transpose(s)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let mut value = self.value(a).clone();
        value.data.iter_mut().for_each(|v| *v = libm::tanh(*v));
        self.push(value, Op::Tanh(a), &[a])
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let mut value = self.value(a).clone();
        value.data.iter_mut().for_each(|v| *v = sigmoid(*v));
        self.push(value, Op::Sigmoid(a), &[a])
    }

    fn zip_with(&mut self, op: &'static str, a: Var, b: Var, f: impl Fn(f64, f64) -> f64) -> Result<Tensor> {
        shape_check!(self.shape(a) == self.shape(b), op, self.shape(a), self.shape(b));
        let (x, y) = (self.value(a), self.value(b));
        let data = x.data.iter().zip(&y.data).map(|(&p, &q)| f(p, q)).collect();
        Ok(Tensor {
            rows: x.rows,
            cols: x.cols,
            data,
        })
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.zip_with("add", a, b, |p, q| p + q)?;
        Ok(self.push(value, Op::Add(a, b), &[a, b]))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.zip_with("sub", a, b, |p, q| p - q)?;
        Ok(self.push(value, Op::Sub(a, b), &[a, b]))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.zip_with("mul", a, b, |p, q| p * q)?;
        Ok(self.push(value, Op::Mul(a, b), &[a, b]))
    }

    /// Adds the `1 × n` row `row` to every row of `m`.
    pub fn add_row(&mut self, m: Var, row: Var) -> Result<Var> {
        let (ms, rs) = (self.shape(m), self.shape(row));
        shape_check!(rs[0] == 1 && rs[1] == ms[1], "add_row", ms, rs);
        let mut value = self.value(m).clone();
        let r = self.value(row).data.clone();
        if ms[1] > 0 {
            for chunk in value.data.chunks_mut(ms[1]) {
                for (v, b) in chunk.iter_mut().zip(&r) {
                    *v += b;
                }
            }
        }
        Ok(self.push(value, Op::AddRow(m, row), &[m, row]))
    }

    pub fn scale(&mut self, a: Var, factor: f64) -> Var {
        let mut value = self.value(a).clone();
        value.data.iter_mut().for_each(|v| *v *= factor);
        self.push(value, Op::Scale(a, factor), &[a])
    }

    /// Sum of all entries, as `1 × 1`.
    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).data.iter().sum();
        self.push(Tensor::scalar(s), Op::Sum(a), &[a])
    }

    /// Column means of an `n × d` tensor, as `1 × d`.
    pub fn mean_rows(&mut self, a: Var) -> Var {
        let t = self.value(a);
        let mut out = Tensor::zeros(1, t.cols);
        for r in 0..t.rows {
            for (o, v) in out.data.iter_mut().zip(t.row(r)) {
                *o += v;
            }
        }
        let n = t.rows.max(1) as f64;
        out.data.iter_mut().for_each(|v| *v /= n);
        self.push(out, Op::MeanRows(a), &[a])
    }

    /// Rows `start..start + len`.
    pub fn slice_rows(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        let s = self.shape(a);
        shape_check!(start + len <= s[0], "slice_rows", s, [start, len]);
        let t = self.value(a);
        let value = Tensor {
            rows: len,
            cols: s[1],
            data: t.data[start * s[1]..(start + len) * s[1]].to_vec(),
        };
        Ok(self.push(value, Op::SliceRows(a, start), &[a]))
    }

    pub fn slice_row(&mut self, a: Var, r: usize) -> Result<Var> {
        self.slice_rows(a, r, 1)
    }

    /// Columns `start..start + len`.
    pub fn slice_cols(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        let s = self.shape(a);
        shape_check!(start + len <= s[1], "slice_cols", s, [start, len]);
        let t = self.value(a);
        let mut data = Vec::with_capacity(s[0] * len);
        for r in 0..s[0] {
            data.extend_from_slice(&t.row(r)[start..start + len]);
        }
        let value = Tensor {
            rows: s[0],
            cols: len,
            data,
        };
        Ok(self.push(value, Op::SliceCols(a, start), &[a]))
    }

    /// `ln Σ exp` over all entries, as `1 × 1`.
    pub fn log_sum_exp(&mut self, a: Var) -> Var {
        let v = log_sum_exp(&self.value(a).data);
        self.push(Tensor::scalar(v), Op::LogSumExp(a), &[a])
    }

    /// Row-vector dot product `a · bᵀ` as `1 × 1`.
    pub fn dot(&mut self, a: Var, b: Var) -> Result<Var> {
        let bt = self.transpose(b);
        self.matmul(a, bt)
    }

    /// Inverted dropout: zero each entry with probability `p` and scale the
    /// survivors by `1 / (1 - p)`. Identity when `p == 0`.
    pub fn dropout(&mut self, a: Var, p: f64, rng: &mut Rng) -> Result<Var> {
        if p <= 0.0 {
            return Ok(a);
        }
        if p >= 1.0 {
            return Err(Error::Config(alloc::format!("dropout probability {p} must be below 1")));
        }
        let [r, c] = self.shape(a);
        let keep = 1.0 / (1.0 - p);
        let mask = (0..r * c).map(|_| if rng.next_f64() < p { 0.0 } else { keep }).collect();
        let mask = self.constant(Tensor { rows: r, cols: c, data: mask });
        self.mul(a, mask)
    }

    /// Reverse sweep from the scalar `output`, adding parameter gradients
    /// into `grads`.
    pub fn backward(&self, output: Var, grads: &mut Gradients) -> Result<()> {
        let shape = self.shape(output);
        if shape != [1, 1] {
            return Err(Error::NonScalarOutput(shape));
        }
        if self.no_grad {
            return Ok(());
        }
        let mut adj: Vec<Option<Tensor>> = vec![None; output.0 + 1];
        adj[output.0] = Some(Tensor::scalar(1.0));
        for i in (0..=output.0).rev() {
            let Some(dy) = adj[i].take() else { continue };
            let node = &self.nodes[i];
            if !node.tracked {
                continue;
            }
            self.propagate(node, &dy, &mut adj, grads);
        }
        Ok(())
    }

    fn accumulate(&self, adj: &mut [Option<Tensor>], v: Var, f: impl FnOnce(&mut Tensor)) {
        if !self.nodes[v.0].tracked {
            return;
        }
        let slot = adj[v.0].get_or_insert_with(|| {
            let [r, c] = self.nodes[v.0].value.shape();
            Tensor::zeros(r, c)
        });
        f(slot);
    }

    fn propagate(&self, node: &Node, dy: &Tensor, adj: &mut [Option<Tensor>], grads: &mut Gradients) {
        let y = &node.value;
        match &node.op {
            Op::Constant => {}
            Op::Param(id) => grads.grads[id.0].add_assign(dy),
            Op::MatMul(a, b) => {
                let (av, bv) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
                self.accumulate(adj, *a, |g| gemm(dy, false, bv, true, g));
                self.accumulate(adj, *b, |g| gemm(av, true, dy, false, g));
            }
            Op::Transpose(a) => self.accumulate(adj, *a, |g| g.add_assign(&dy.transpose())),
            Op::ConcatCols(parts) => {
                let mut offset = 0;
                for p in parts {
                    let w = self.nodes[p.0].value.cols;
                    self.accumulate(adj, *p, |g| {
                        for r in 0..g.rows {
                            for c in 0..w {
                                g.data[r * w + c] += dy.data[r * dy.cols + offset + c];
                            }
                        }
                    });
                    offset += w;
                }
            }
            Op::ConcatRows(parts) => {
                let mut offset = 0;
                for p in parts {
                    let n = self.nodes[p.0].value.len();
                    self.accumulate(adj, *p, |g| {
                        for (gv, d) in g.data.iter_mut().zip(&dy.data[offset..offset + n]) {
                            *gv += d;
                        }
                    });
                    offset += n;
                }
            }
            Op::RowSoftmax(a) => self.accumulate(adj, *a, |g| {
                let cols = y.cols;
                for r in 0..y.rows {
                    let (yr, dr) = (y.row(r), dy.row(r));
                    let inner: f64 = yr.iter().zip(dr).map(|(p, q)| p * q).sum();
                    for c in 0..cols {
                        g.data[r * cols + c] += yr[c] * (dr[c] - inner);
                    }
                }
            }),
            Op::Tanh(a) => self.accumulate(adj, *a, |g| {
                for ((gv, yv), d) in g.data.iter_mut().zip(&y.data).zip(&dy.data) {
                    *gv += d * (1.0 - yv * yv);
                }
            }),
            Op::Sigmoid(a) => self.accumulate(adj, *a, |g| {
                for ((gv, yv), d) in g.data.iter_mut().zip(&y.data).zip(&dy.data) {
                    *gv += d * yv * (1.0 - yv);
                }
            }),
            Op::Add(a, b) => {
                self.accumulate(adj, *a, |g| g.add_assign(dy));
                self.accumulate(adj, *b, |g| g.add_assign(dy));
            }
            Op::Sub(a, b) => {
                self.accumulate(adj, *a, |g| g.add_assign(dy));
                self.accumulate(adj, *b, |g| {
                    for (gv, d) in g.data.iter_mut().zip(&dy.data) {
                        *gv -= d;
                    }
                });
            }
            Op::Mul(a, b) => {
                let (av, bv) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
                self.accumulate(adj, *a, |g| {
                    for ((gv, d), o) in g.data.iter_mut().zip(&dy.data).zip(&bv.data) {
                        *gv += d * o;
                    }
                });
                self.accumulate(adj, *b, |g| {
                    for ((gv, d), o) in g.data.iter_mut().zip(&dy.data).zip(&av.data) {
                        *gv += d * o;
                    }
                });
            }
            Op::AddRow(m, row) => {
                self.accumulate(adj, *m, |g| g.add_assign(dy));
                self.accumulate(adj, *row, |g| {
                    for r in 0..dy.rows {
                        for (gv, d) in g.data.iter_mut().zip(dy.row(r)) {
                            *gv += d;
                        }
                    }
                });
            }
            Op::Scale(a, factor) => self.accumulate(adj, *a, |g| {
                for (gv, d) in g.data.iter_mut().zip(&dy.data) {
                    *gv += factor * d;
                }
            }),
            Op::Sum(a) => self.accumulate(adj, *a, |g| g.data.iter_mut().for_each(|v| *v += dy.data[0])),
            Op::MeanRows(a) => self.accumulate(adj, *a, |g| {
                let n = g.rows.max(1) as f64;
                for r in 0..g.rows {
                    for c in 0..g.cols {
                        g.data[r * g.cols + c] += dy.data[c] / n;
                    }
                }
            }),
            Op::SliceRows(a, start) => self.accumulate(adj, *a, |g| {
                let off = start * g.cols;
                for (gv, d) in g.data[off..off + dy.len()].iter_mut().zip(&dy.data) {
                    *gv += d;
                }
            }),
            Op::SliceCols(a, start) => self.accumulate(adj, *a, |g| {
                for r in 0..g.rows {
                    for c in 0..dy.cols {
                        g.data[r * g.cols + start + c] += dy.data[r * dy.cols + c];
                    }
                }
            }),
            Op::LogSumExp(a) => {
                let x = &self.nodes[a.0].value;
                let w = softmax(&x.data);
                self.accumulate(adj, *a, |g| {
                    for (gv, p) in g.data.iter_mut().zip(&w) {
                        *gv += dy.data[0] * p;
                    }
                });
            }
        }
    }
}

/// Outcome of comparing tape gradients with central differences.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradCheckReport {
    pub max_relative_error: f64,
    pub worst_param: String,
    pub worst_index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub coordinates_checked: usize,
    /// Largest `|g_ad − g_fd|` over all checked coordinates.
    pub max_abs_error: f64,
    /// Largest relative error among coordinates with
    /// `|g_ad| + |g_fd| >= SIGNIFICANT_GRADIENT`.
    pub max_relative_error_significant: f64,
}

/// Gradient magnitude below which central differences of an O(1) loss in
/// f64 are dominated by rounding: with `ε = 1e-5` the difference quotient
/// resolves about `1e-11` absolute.
pub const SIGNIFICANT_GRADIENT: f64 = 1e-6;

/// Compares reverse-mode gradients of `loss` against central differences
/// `(f(θ + ε) − f(θ − ε)) / 2ε`.
///
/// `loss` builds the scalar loss on the graph it is given, reading weights
/// from the store. Each parameter contributes all of its coordinates, or
/// `max_coords_per_param` randomly sampled ones when it is larger. The error
/// per coordinate is `|g_ad − g_fd| / max(1e-8, |g_ad| + |g_fd|)`.
pub fn finite_diff_check<F>(
    store: &mut ParamStore,
    mut loss: F,
    eps: f64,
    max_coords_per_param: usize,
    rng: &mut Rng,
) -> Result<GradCheckReport>
where
    F: FnMut(&mut Graph, &ParamStore) -> Result<Var>,
{
    let mut graph = Graph::new();
    let out = loss(&mut graph, store)?;
    let mut grads = Gradients::zeros_like(store);
    graph.backward(out, &mut grads)?;

    let mut report = GradCheckReport {
        max_relative_error: 0.0,
        worst_param: String::new(),
        worst_index: 0,
        analytic: 0.0,
        numeric: 0.0,
        coordinates_checked: 0,
        max_abs_error: 0.0,
        max_relative_error_significant: 0.0,
    };
    let ids: Vec<ParamId> = store.ids().collect();
    for id in ids {
        let n = store.get(id).len();
        let coords: Vec<usize> = if n <= max_coords_per_param {
            (0..n).collect()
        } else {
            (0..max_coords_per_param).map(|_| rng.below(n)).collect()
        };
        for i in coords {
            let original = store.get(id).data[i];
            let mut eval = |value: f64, store: &mut ParamStore| -> Result<f64> {
                store.get_mut(id).data[i] = value;
                let mut g = Graph::inference();
                let out = loss(&mut g, store)?;
                Ok(g.scalar(out))
            };
            let plus = eval(original + eps, store)?;
            let minus = eval(original - eps, store)?;
            store.get_mut(id).data[i] = original;
            let numeric = (plus - minus) / (2.0 * eps);
            let analytic = grads.get(id).data[i];
            let err = libm::fabs(analytic - numeric) / f64::max(1e-8, libm::fabs(analytic) + libm::fabs(numeric));
            report.coordinates_checked += 1;
            let abs = libm::fabs(analytic - numeric);
            report.max_abs_error = report.max_abs_error.max(abs);
            if libm::fabs(analytic) + libm::fabs(numeric) >= SIGNIFICANT_GRADIENT {
                report.max_relative_error_significant = report.max_relative_error_significant.max(err);
            }
            if err > report.max_relative_error || report.worst_param.is_empty() {
                report.max_relative_error = err;
                report.worst_param = String::from(store.name(id));
                report.worst_index = i;
                report.analytic = analytic;
                report.numeric = numeric;
            }
        }
    }
    Ok(report)
}

/// Adam moments and step counter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step: u64,
    first: Vec<Tensor>,
    second: Vec<Tensor>,
}

impl AdamState {
    pub fn new(store: &ParamStore) -> Self {
        let zeros: Vec<Tensor> = store.values.iter().map(|t| Tensor::zeros(t.rows, t.cols)).collect();
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            first: zeros.clone(),
            second: zeros,
        }
    }
}

/// One bias-corrected Adam update. Fails without touching any parameter if a
/// gradient is not finite.
pub fn adam_step(store: &mut ParamStore, grads: &Gradients, state: &mut AdamState, lr: f64) -> Result<()> {
    for (id, g) in grads.iter() {
        if g.data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteGradient(String::from(store.name(id))));
        }
    }
    state.step += 1;
    let t = state.step as f64;
    let c1 = 1.0 - libm::pow(state.beta1, t);
    let c2 = 1.0 - libm::pow(state.beta2, t);
    for (i, g) in grads.grads.iter().enumerate() {
        let (m, v, p) = (&mut state.first[i], &mut state.second[i], &mut store.values[i]);
        for j in 0..g.data.len() {
            let gj = g.data[j];
            m.data[j] = state.beta1 * m.data[j] + (1.0 - state.beta1) * gj;
            v.data[j] = state.beta2 * v.data[j] + (1.0 - state.beta2) * gj * gj;
            let m_hat = m.data[j] / c1;
            let v_hat = v.data[j] / c2;
            p.data[j] -= lr * m_hat / (libm::sqrt(v_hat) + state.eps);
        }
    }
    Ok(())
}

/// Rescales all gradients so their joint L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
pub fn clip_global_norm(grads: &mut Gradients, max_norm: f64) -> f64 {
    let norm = grads.global_norm();
    if norm > max_norm && norm > 0.0 {
        grads.scale(max_norm / norm);
    }
    norm
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(rows: usize, cols: usize, data: &[f64]) -> Tensor {
        Tensor::from_vec(rows, cols, data.to_vec()).unwrap()
    }

    #[test]
    fn matmul_shapes_and_errors() {
        let mut g = Graph::new();
        let a = g.constant(Tensor::zeros(2, 3));
        let b = g.constant(Tensor::zeros(3, 4));
        let c = g.matmul(a, b).unwrap();
        assert_eq!(g.shape(c), [2, 4]);
        let err = g.matmul(b, b).unwrap_err();
        assert_eq!(
            err,
            Error::Shape {
                op: "matmul",
                lhs: [3, 4],
                rhs: [3, 4]
            }
        );
        let x = t(2, 2, &[1.0, 2.0, 3.0, 4.0]);
        let y = t(2, 1, &[5.0, 6.0]);
        assert_eq!(x.matmul(&y).unwrap().data(), &[17.0, 39.0]);
    }

    #[test]
    fn softmax_rows() {
        let mut g = Graph::new();
        let a = g.constant(t(2, 3, &[0.5, 0.5, 0.5, 1.0, -2.0, 700.0]));
        let s = g.row_softmax(a);
        let v = g.value(s);
        for r in 0..2 {
            let sum: f64 = v.row(r).iter().sum();
            assert!((sum - 1.0).abs() < 1e-12);
            assert!(v.row(r).iter().all(|&p| p > 0.0 || r == 1));
        }
        for c in 0..3 {
            assert!((v.get(0, c) - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn tanh_and_sigmoid_fixed_points() {
        let mut g = Graph::new();
        let z = g.constant(Tensor::zeros(1, 3));
        let th = g.tanh(z);
        assert_eq!(g.value(th).data(), &[0.0; 3]);
        let sg = g.sigmoid(z);
        assert_eq!(g.value(sg).data(), &[0.5; 3]);
        let big = g.constant(t(1, 2, &[-800.0, 800.0]));
        let s = g.sigmoid(big);
        assert_eq!(g.value(s).data(), &[0.0, 1.0]);
    }

    #[test]
    fn backward_sum_of_squares() {
        let mut store = ParamStore::new();
        let x = store.add("x", t(1, 2, &[1.0, 2.0]));
        let unused = store.add("unused", t(1, 1, &[3.0]));
        let mut g = Graph::new();
        let xv = g.param(&store, x);
        let sq = g.mul(xv, xv).unwrap();
        let f = g.sum(sq);
        let mut grads = Gradients::zeros_like(&store);
        g.backward(f, &mut grads).unwrap();
        assert_eq!(grads.get(x).data(), &[2.0, 4.0]);
        assert_eq!(grads.get(unused).data(), &[0.0]);
        assert_eq!(g.backward(sq, &mut grads), Err(Error::NonScalarOutput([1, 2])));
    }

    #[test]
    fn fan_in_accumulates() {
        let mut store = ParamStore::new();
        let x = store.add("x", t(1, 1, &[3.0]));
        let mut g = Graph::new();
        let a = g.param(&store, x);
        let b = g.param(&store, x);
        assert_eq!(a, b);
        let s = g.add(a, b).unwrap();
        let s2 = g.add(s, a).unwrap();
        let mut grads = Gradients::zeros_like(&store);
        g.backward(s2, &mut grads).unwrap();
        assert_eq!(grads.get(x).data(), &[3.0]);
    }

    #[test]
    fn inference_graph_has_no_gradients() {
        let mut store = ParamStore::new();
        let x = store.add("x", t(1, 1, &[3.0]));
        let mut g = Graph::inference();
        let a = g.param(&store, x);
        let s = g.mul(a, a).unwrap();
        let mut grads = Gradients::zeros_like(&store);
        g.backward(s, &mut grads).unwrap();
        assert_eq!(grads.get(x).data(), &[0.0]);
        assert_eq!(g.scalar(s), 9.0);
    }

    fn every_op_loss(g: &mut Graph, store: &ParamStore) -> Result<Var> {
        let a = g.param(store, store.id("a").unwrap());
        let b = g.param(store, store.id("b").unwrap());
        let r = g.param(store, store.id("r").unwrap());
        let ab = g.matmul(a, b)?; // 3x2
        let abr = g.add_row(ab, r)?;
        let th = g.tanh(abr);
        let sg = g.sigmoid(abr);
        let prod = g.mul(th, sg)?;
        let diff = g.sub(prod, th)?;
        let sm = g.row_softmax(diff);
        let cs = g.col_softmax(abr);
        let cat = g.concat_cols(&[sm, cs])?; // 3x4
        let top = g.slice_rows(cat, 0, 2)?;
        let bottom = g.slice_row(cat, 2)?;
        let stacked = g.concat_rows(&[bottom, top])?;
        let cols = g.slice_cols(stacked, 1, 2)?;
        let mean = g.mean_rows(cols);
        let at = g.transpose(a);
        let at_sum = g.sum(at);
        let lse = g.log_sum_exp(mean);
        let scaled = g.scale(at_sum, 0.3);
        let d = g.dot(mean, mean)?;
        let s1 = g.add(lse, scaled)?;
        g.add(s1, d)
    }

    #[test]
    fn every_op_matches_finite_differences() {
        let mut rng = Rng::new(11);
        let mut store = ParamStore::new();
        store.add("a", Tensor::uniform(3, 4, 1.0, &mut rng));
        store.add("b", Tensor::uniform(4, 2, 1.0, &mut rng));
        store.add("r", Tensor::uniform(1, 2, 1.0, &mut rng));
        let report = finite_diff_check(&mut store, every_op_loss, 1e-5, 100, &mut rng).unwrap();
        assert!(report.max_relative_error < 1e-6, "{report:?}");
        assert_eq!(report.coordinates_checked, 12 + 8 + 2);
    }

    #[test]
    fn quadratic_check_is_tight() {
        let mut rng = Rng::new(2);
        let mut store = ParamStore::new();
        store.add("w", Tensor::uniform(1, 5, 2.0, &mut rng));
        let report = finite_diff_check(
            &mut store,
            |g, s| {
                let w = g.param(s, ParamId(0));
                let sq = g.mul(w, w)?;
                let f = g.sum(sq);
                Ok(g.scale(f, 0.5))
            },
            1e-5,
            10,
            &mut rng,
        )
        .unwrap();
        assert!(report.max_relative_error < 1e-9, "{report:?}");
    }

    #[test]
    fn dropout_behaviour() {
        let mut rng = Rng::new(5);
        let mut g = Graph::new();
        let x = g.constant(Tensor::from_vec(1, 4, alloc::vec![1.0; 4]).unwrap());
        assert_eq!(g.dropout(x, 0.0, &mut rng).unwrap(), x);
        assert!(g.dropout(x, 1.0, &mut rng).is_err());

        let n = 200_000;
        let big = g.constant(Tensor::from_vec(1, n, alloc::vec![1.0; n]).unwrap());
        let d = g.dropout(big, 0.25, &mut rng).unwrap();
        let vals = g.value(d).data();
        let dropped = vals.iter().filter(|&&v| v == 0.0).count() as f64 / n as f64;
        assert!((dropped - 0.25).abs() < 0.02, "{dropped}");
        let kept = vals.iter().find(|&&v| v != 0.0).unwrap();
        assert!((kept - 1.0 / 0.75).abs() < 1e-15);
    }

    #[test]
    fn adam_behaviour() {
        let mut store = ParamStore::new();
        let w = store.add("w", t(1, 2, &[1.0, -1.0]));
        let mut state = AdamState::new(&store);
        let mut grads = Gradients::zeros_like(&store);
        adam_step(&mut store, &grads, &mut state, 0.001).unwrap();
        assert_eq!(store.get(w).data(), &[1.0, -1.0]);
        assert_eq!(state.step, 1);

        // constant gradient: every step moves lr * sign(g) once bias-corrected
        grads.get_mut(w).data_mut().copy_from_slice(&[0.5, -3.0]);
        let mut state = AdamState::new(&store);
        for k in 0..200 {
            let before = store.get(w).clone();
            adam_step(&mut store, &grads, &mut state, 0.001).unwrap();
            let after = store.get(w);
            assert_eq!(state.step, k + 1);
            let d0 = before.data()[0] - after.data()[0];
            let d1 = before.data()[1] - after.data()[1];
            assert!((d0 - 0.001).abs() < 1e-9, "{d0}");
            assert!((d1 + 0.001).abs() < 1e-9, "{d1}");
        }

        grads.get_mut(w).data_mut()[0] = f64::NAN;
        let snapshot = store.clone();
        assert_eq!(
            adam_step(&mut store, &grads, &mut state, 0.001),
            Err(Error::NonFiniteGradient("w".into()))
        );
        assert_eq!(store, snapshot);
    }

    #[test]
    fn clipping() {
        let mut store = ParamStore::new();
        let a = store.add("a", Tensor::zeros(1, 2));
        let mut grads = Gradients::zeros_like(&store);
        assert_eq!(clip_global_norm(&mut grads, 5.0), 0.0);
        assert_eq!(grads.get(a).data(), &[0.0, 0.0]);
        grads.get_mut(a).data_mut().copy_from_slice(&[6.0, 8.0]);
        assert_eq!(clip_global_norm(&mut grads, 5.0), 10.0);
        assert_eq!(grads.get(a).data(), &[3.0, 4.0]);
        grads.get_mut(a).data_mut().copy_from_slice(&[0.0, 3.0]);
        clip_global_norm(&mut grads, 5.0);
        assert_eq!(grads.get(a).data(), &[0.0, 3.0]);
    }

    #[test]
    fn helpers() {
        assert!((log_sum_exp(&[1000.0, 1000.0]) - (1000.0 + core::f64::consts::LN_2)).abs() < 1e-12);
        assert_eq!(log_sum_exp(&[]), f64::NEG_INFINITY);
        let s = softmax(&[1.0, 2.0, 3.0]);
        assert!((s.iter().sum::<f64>() - 1.0).abs() < 1e-15);
    }
}
