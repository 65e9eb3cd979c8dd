//! Reverse-mode automatic differentiation over a recorded tape.
//!
//! A [`Graph`] appends one node per operation, so node order is already topological and the
//! backward pass is a single reverse sweep. A tape supports exactly one backward pass; a second
//! call returns [`Error::TapeConsumed`].

use std::borrow::Cow;
use std::collections::HashMap;

use super::array::{matmul_at_raw, matmul_bt_raw, matmul_raw, softmax_row, Tensor};
use super::params::{Gradients, ParamId, ParamStore};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Handle to a node on a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

enum Op<T> {
    Leaf,
    Add(Var, Var),
    AddRow(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, T),
    AddConst(Var),
    MatMul(Var, Var),
    MatMulBt(Var, Var),
    Transpose(Var),
    ConcatCols(Vec<Var>),
    ConcatRows(Vec<Var>),
    SliceCols(Var, usize),
    SliceRows(Var, usize),
    MeanRows(Var, Vec<usize>),
    Gelu(Var),
    Relu(Var),
    LayerNorm {
        x: Var,
        gain: Var,
        bias: Var,
        xhat: Vec<T>,
        inv_std: Vec<T>,
    },
    Softmax(Var),
    Embedding {
        table: Var,
        ids: Vec<usize>,
    },
    CrossEntropy {
        logits: Var,
        targets: Vec<usize>,
        probs: Vec<T>,
    },
    Sum(Var),
    Mean(Var),
    Reshape(Var),
}

struct Node<'p, T: Scalar> {
    value: Cow<'p, Tensor<T>>,
    op: Op<T>,
    requires_grad: bool,
}

pub struct Graph<'p, T: Scalar> {
    params: Option<&'p ParamStore<T>>,
    nodes: Vec<Node<'p, T>>,
    param_vars: HashMap<ParamId, Var>,
    track_params: bool,
    grads: Option<Vec<Option<Vec<T>>>>,
}

fn shape_err(op: &'static str, a: &[usize], b: &[usize]) -> Error {
    Error::Shape {
        op,
        lhs: a.to_vec(),
        rhs: b.to_vec(),
    }
}

const GELU_C: f64 = 0.044_715;
const SQRT_2_OVER_PI: f64 = 0.797_884_560_802_865_4;

fn gelu<T: Scalar>(x: T) -> T {
    let c = T::lit(SQRT_2_OVER_PI);
    let t = (c * (x + T::lit(GELU_C) * x * x * x)).tanh();
    T::lit(0.5) * x * (T::one() + t)
}

fn gelu_grad<T: Scalar>(x: T) -> T {
    let c = T::lit(SQRT_2_OVER_PI);
    let k = T::lit(GELU_C);
    let t = (c * (x + k * x * x * x)).tanh();
    let half = T::lit(0.5);
    half * (T::one() + t) + half * x * (T::one() - t * t) * c * (T::one() + T::lit(3.0) * k * x * x)
}

impl<'p, T: Scalar> Graph<'p, T> {
    /// Tape over `params`; parameter leaves require gradients.
    pub fn new(params: &'p ParamStore<T>) -> Self {
        Graph {
            params: Some(params),
            nodes: Vec::new(),
            param_vars: HashMap::new(),
            track_params: true,
            grads: None,
        }
    }

    /// Tape whose parameter leaves are constants (evaluation).
    pub fn inference(params: &'p ParamStore<T>) -> Self {
        Graph {
            track_params: false,
            ..Self::new(params)
        }
    }

    /// Tape without parameters, for free-standing tensor computations.
    pub fn detached() -> Self {
        Graph {
            params: None,
            nodes: Vec::new(),
            param_vars: HashMap::new(),
            track_params: true,
            grads: None,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value: Cow::Owned(value),
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Leaf tensor; records gradients when the tensor's `requires_grad` flag is set.
    pub fn leaf(&mut self, t: Tensor<T>) -> Var {
        let rg = t.requires_grad;
        self.push(t, Op::Leaf, rg)
    }

    /// Constant leaf.
    pub fn constant(&mut self, t: Tensor<T>) -> Var {
        self.push(t, Op::Leaf, false)
    }

    /// Leaf bound to a stored parameter. Repeated calls return the same node.
    pub fn param(&mut self, id: ParamId) -> Var {
        if let Some(&v) = self.param_vars.get(&id) {
            return v;
        }
        let store = self.params.expect("graph has no parameter store");
        let t = store.get(id);
        let rg = self.track_params && t.requires_grad;
        self.nodes.push(Node {
            value: Cow::Borrowed(t),
            op: Op::Leaf,
            requires_grad: rg,
        });
        let v = Var(self.nodes.len() - 1);
        self.param_vars.insert(id, v);
        v
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (x, y) = (self.value(a), self.value(b));
        if x.shape() != y.shape() {
            return Err(shape_err("add", x.shape(), y.shape()));
        }
        let data = x.data().iter().zip(y.data()).map(|(&p, &q)| p + q).collect();
        let t = Tensor::new(x.shape().to_vec(), data)?;
        let rg = self.rg(&[a, b]);
        Ok(self.push(t, Op::Add(a, b), rg))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let (x, y) = (self.value(a), self.value(b));
        if x.shape() != y.shape() {
            return Err(shape_err("sub", x.shape(), y.shape()));
        }
        let data = x.data().iter().zip(y.data()).map(|(&p, &q)| p - q).collect();
        let t = Tensor::new(x.shape().to_vec(), data)?;
        let rg = self.rg(&[a, b]);
        Ok(self.push(t, Op::Sub(a, b), rg))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (x, y) = (self.value(a), self.value(b));
        if x.shape() != y.shape() {
            return Err(shape_err("mul", x.shape(), y.shape()));
        }
        let data = x.data().iter().zip(y.data()).map(|(&p, &q)| p * q).collect();
        let t = Tensor::new(x.shape().to_vec(), data)?;
        let rg = self.rg(&[a, b]);
        Ok(self.push(t, Op::Mul(a, b), rg))
    }

    /// `a [m, n] + b` with `b` a length-`n` row broadcast over every row of `a`.
    pub fn add_row(&mut self, a: Var, b: Var) -> Result<Var> {
        let (x, y) = (self.value(a), self.value(b));
        let n = x.cols();
        if y.numel() != n {
            return Err(shape_err("add_row", x.shape(), y.shape()));
        }
        let yd = y.data();
        let data = x
            .data()
            .chunks(n.max(1))
            .flat_map(|row| row.iter().zip(yd).map(|(&p, &q)| p + q))
            .collect();
        let t = Tensor::new(x.shape().to_vec(), data)?;
        let rg = self.rg(&[a, b]);
        Ok(self.push(t, Op::AddRow(a, b), rg))
    }

    pub fn scale(&mut self, a: Var, s: T) -> Var {
        let t = self.value(a).map(|x| x * s);
        let rg = self.rg(&[a]);
        self.push(t, Op::Scale(a, s), rg)
    }

    /// Adds a constant tensor of the same shape (used for attention and vocabulary masks).
    pub fn add_const(&mut self, a: Var, c: &Tensor<T>) -> Result<Var> {
        let x = self.value(a);
        if x.shape() != c.shape() {
            return Err(shape_err("add_const", x.shape(), c.shape()));
        }
        let data = x.data().iter().zip(c.data()).map(|(&p, &q)| p + q).collect();
        let t = Tensor::new(x.shape().to_vec(), data)?;
        let rg = self.rg(&[a]);
        Ok(self.push(t, Op::AddConst(a), rg))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (x, y) = (self.value(a), self.value(b));
        let (m, k) = (x.rows(), x.cols());
        if y.shape().len() != 2 || y.shape()[0] != k {
            return Err(shape_err("matmul", x.shape(), y.shape()));
        }
        let n = y.cols();
        let t = Tensor::matrix(m, n, matmul_raw(x.data(), y.data(), m, k, n))?;
        let rg = self.rg(&[a, b]);
        Ok(self.push(t, Op::MatMul(a, b), rg))
    }

    /// `a @ b^T`.
    pub fn matmul_bt(&mut self, a: Var, b: Var) -> Result<Var> {
        let (x, y) = (self.value(a), self.value(b));
        let (m, k) = (x.rows(), x.cols());
        if y.cols() != k {
            return Err(shape_err("matmul_bt", x.shape(), y.shape()));
        }
        let n = y.rows();
        let t = Tensor::matrix(m, n, matmul_bt_raw(x.data(), y.data(), m, k, n))?;
        let rg = self.rg(&[a, b]);
        Ok(self.push(t, Op::MatMulBt(a, b), rg))
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let x = self.value(a);
        let (r, c) = (x.rows(), x.cols());
        let mut data = vec![T::zero(); r * c];
        for i in 0..r {
            for j in 0..c {
                data[j * r + i] = x.data()[i * c + j];
            }
        }
        let t = Tensor::matrix(c, r, data).expect("sized");
        let rg = self.rg(&[a]);
        self.push(t, Op::Transpose(a), rg)
    }

    /// Concatenates along the last axis; all inputs must have the same number of rows.
    pub fn concat_cols(&mut self, vars: &[Var]) -> Result<Var> {
        if vars.is_empty() {
            return Err(Error::Invalid("concat of zero tensors".into()));
        }
        let r = self.value(vars[0]).rows();
        for &v in vars {
            if self.value(v).rows() != r {
                return Err(shape_err(
                    "concat_cols",
                    self.value(vars[0]).shape(),
                    self.value(v).shape(),
                ));
            }
        }
        let total: usize = vars.iter().map(|&v| self.value(v).cols()).sum();
        let mut data = Vec::with_capacity(r * total);
        for i in 0..r {
            for &v in vars {
                data.extend_from_slice(self.value(v).row(i));
            }
        }
        let t = Tensor::matrix(r, total, data)?;
        let rg = self.rg(vars);
        Ok(self.push(t, Op::ConcatCols(vars.to_vec()), rg))
    }

    /// Stacks along the first axis; all inputs must have the same number of columns.
    pub fn concat_rows(&mut self, vars: &[Var]) -> Result<Var> {
        if vars.is_empty() {
            return Err(Error::Invalid("concat of zero tensors".into()));
        }
        let c = self.value(vars[0]).cols();
        let mut data = Vec::new();
        let mut rows = 0;
        for &v in vars {
            let x = self.value(v);
            if x.cols() != c {
                return Err(shape_err(
                    "concat_rows",
                    self.value(vars[0]).shape(),
                    x.shape(),
                ));
            }
            rows += x.rows();
            data.extend_from_slice(x.data());
        }
        let t = Tensor::matrix(rows, c, data)?;
        let rg = self.rg(vars);
        Ok(self.push(t, Op::ConcatRows(vars.to_vec()), rg))
    }

    /// Columns `start..start + len`.
    pub fn slice_cols(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        let x = self.value(a);
        let (r, c) = (x.rows(), x.cols());
        if start + len > c {
            return Err(shape_err("slice_cols", x.shape(), &[start, len]));
        }
        let mut data = Vec::with_capacity(r * len);
        for i in 0..r {
            data.extend_from_slice(&x.row(i)[start..start + len]);
        }
        let t = Tensor::matrix(r, len, data)?;
        let rg = self.rg(&[a]);
        Ok(self.push(t, Op::SliceCols(a, start), rg))
    }

    /// Rows `start..start + len`.
    pub fn slice_rows(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        let x = self.value(a);
        let (r, c) = (x.rows(), x.cols());
        if start + len > r {
            return Err(shape_err("slice_rows", x.shape(), &[start, len]));
        }
        let t = Tensor::matrix(len, c, x.data()[start * c..(start + len) * c].to_vec())?;
        let rg = self.rg(&[a]);
        Ok(self.push(t, Op::SliceRows(a, start), rg))
    }

    /// Mean over all rows, giving a `[1, c]` row.
    pub fn mean_pool(&mut self, a: Var) -> Result<Var> {
        let rows: Vec<usize> = (0..self.value(a).rows()).collect();
        self.mean_pool_rows(a, &rows)
    }

    /// Mean over the listed rows only.
    pub fn mean_pool_rows(&mut self, a: Var, rows: &[usize]) -> Result<Var> {
        let x = self.value(a);
        let c = x.cols();
        if rows.is_empty() || rows.iter().any(|&r| r >= x.rows()) {
            return Err(shape_err("mean_pool", x.shape(), &[rows.len()]));
        }
        let inv = T::one() / T::lit(rows.len() as f64);
        let mut data = vec![T::zero(); c];
        for &r in rows {
            for (d, &v) in data.iter_mut().zip(x.row(r)) {
                *d = *d + v;
            }
        }
        for d in &mut data {
            *d = *d * inv;
        }
        let t = Tensor::matrix(1, c, data)?;
        let rg = self.rg(&[a]);
        Ok(self.push(t, Op::MeanRows(a, rows.to_vec()), rg))
    }

    /// Tanh-approximated GELU.
    pub fn gelu(&mut self, a: Var) -> Var {
        let t = self.value(a).map(gelu);
        let rg = self.rg(&[a]);
        self.push(t, Op::Gelu(a), rg)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let t = self.value(a).map(|x| if x > T::zero() { x } else { T::zero() });
        let rg = self.rg(&[a]);
        self.push(t, Op::Relu(a), rg)
    }

    /// Per-row normalization to zero mean and unit variance, then `gain * xhat + bias`.
    pub fn layer_norm(&mut self, a: Var, gain: Var, bias: Var, eps: T) -> Result<Var> {
        let x = self.value(a);
        let (r, c) = (x.rows(), x.cols());
        if self.value(gain).numel() != c || self.value(bias).numel() != c {
            return Err(shape_err("layer_norm", x.shape(), self.value(gain).shape()));
        }
        let g = self.value(gain).data();
        let b = self.value(bias).data();
        let n = T::lit(c as f64);
        let mut xhat = vec![T::zero(); r * c];
        let mut inv_std = vec![T::zero(); r];
        let mut out = vec![T::zero(); r * c];
        for i in 0..r {
            let row = x.row(i);
            let mean = row.iter().copied().sum::<T>() / n;
            let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / n;
            let is = T::one() / (var + eps).sqrt();
            inv_std[i] = is;
            for j in 0..c {
                let h = (row[j] - mean) * is;
                xhat[i * c + j] = h;
                out[i * c + j] = g[j] * h + b[j];
            }
        }
        let t = Tensor::new(x.shape().to_vec(), out)?;
        let rg = self.rg(&[a, gain, bias]);
        Ok(self.push(
            t,
            Op::LayerNorm {
                x: a,
                gain,
                bias,
                xhat,
                inv_std,
            },
            rg,
        ))
    }

    /// Row-wise softmax.
    pub fn softmax(&mut self, a: Var) -> Var {
        let x = self.value(a);
        let c = x.cols();
        let mut out = vec![T::zero(); x.numel()];
        for (i, o) in out.chunks_mut(c.max(1)).enumerate() {
            softmax_row(x.row(i), o);
        }
        let t = Tensor::new(x.shape().to_vec(), out).expect("same shape");
        let rg = self.rg(&[a]);
        self.push(t, Op::Softmax(a), rg)
    }

    /// Gathers rows of `table [V, d]`.
    pub fn embedding(&mut self, table: Var, ids: &[usize]) -> Result<Var> {
        let tbl = self.value(table);
        let (v, d) = (tbl.rows(), tbl.cols());
        if let Some(&bad) = ids.iter().find(|&&i| i >= v) {
            return Err(Error::Invalid(format!(
                "embedding id {bad} out of range for table of {v} rows"
            )));
        }
        let mut data = Vec::with_capacity(ids.len() * d);
        for &i in ids {
            data.extend_from_slice(tbl.row(i));
        }
        let t = Tensor::matrix(ids.len(), d, data)?;
        let rg = self.rg(&[table]);
        Ok(self.push(
            t,
            Op::Embedding {
                table,
                ids: ids.to_vec(),
            },
            rg,
        ))
    }

    /// Mean over rows of `-log softmax(logits)[target]`.
    pub fn cross_entropy(&mut self, logits: Var, targets: &[usize]) -> Result<Var> {
        let x = self.value(logits);
        let (n, c) = (x.rows(), x.cols());
        if c < 2 {
            return Err(Error::Invalid(format!(
                "cross_entropy needs at least 2 classes, got {c}"
            )));
        }
        if targets.len() != n {
            return Err(shape_err("cross_entropy", x.shape(), &[targets.len()]));
        }
        if let Some(&bad) = targets.iter().find(|&&t| t >= c) {
            return Err(Error::Invalid(format!(
                "target {bad} out of range for {c} classes"
            )));
        }
        let mut probs = vec![T::zero(); n * c];
        let mut total = T::zero();
        for i in 0..n {
            let row = x.row(i);
            softmax_row(row, &mut probs[i * c..(i + 1) * c]);
            let max = row
                .iter()
                .copied()
                .fold(T::neg_infinity(), |a, b| if b > a { b } else { a });
            let lse = max + row.iter().map(|&v| (v - max).exp()).sum::<T>().ln();
            total = total + (lse - row[targets[i]]);
        }
        let loss = total / T::lit(n as f64);
        let rg = self.rg(&[logits]);
        Ok(self.push(
            Tensor::scalar(loss),
            Op::CrossEntropy {
                logits,
                targets: targets.to_vec(),
                probs,
            },
            rg,
        ))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).data().iter().copied().sum();
        let rg = self.rg(&[a]);
        self.push(Tensor::scalar(s), Op::Sum(a), rg)
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let x = self.value(a);
        let s = x.data().iter().copied().sum::<T>() / T::lit(x.numel() as f64);
        let rg = self.rg(&[a]);
        self.push(Tensor::scalar(s), Op::Mean(a), rg)
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var> {
        let t = self.value(a).reshape(shape)?;
        let rg = self.rg(&[a]);
        Ok(self.push(t, Op::Reshape(a), rg))
    }

    /// Propagates `d loss / d node` to every node that requires a gradient.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.grads.is_some() {
            return Err(Error::TapeConsumed);
        }
        let lv = self.value(loss);
        if lv.numel() != 1 {
            return Err(Error::NonScalarLoss(lv.shape().to_vec()));
        }
        let mut grads: Vec<Option<Vec<T>>> = Vec::with_capacity(loss.0 + 1);
        grads.resize_with(loss.0 + 1, || None);
        grads[loss.0] = Some(vec![T::one()]);

        for i in (0..=loss.0).rev() {
            if !self.nodes[i].requires_grad {
                continue;
            }
            let Some(gout) = grads[i].take() else {
                continue;
            };
            self.backprop_node(i, &gout, &mut grads);
            grads[i] = Some(gout);
        }
        self.grads = Some(grads);
        Ok(())
    }

    fn accumulate(&self, grads: &mut [Option<Vec<T>>], v: Var, g: Vec<T>) {
        if !self.nodes[v.0].requires_grad {
            return;
        }
        match &mut grads[v.0] {
            Some(acc) => {
                for (a, b) in acc.iter_mut().zip(g) {
                    *a = *a + b;
                }
            }
            slot => *slot = Some(g),
        }
    }

    fn backprop_node(&self, i: usize, gout: &[T], grads: &mut [Option<Vec<T>>]) {
        let node = &self.nodes[i];
        let out = &node.value;
        match &node.op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                self.accumulate(grads, *a, gout.to_vec());
                self.accumulate(grads, *b, gout.to_vec());
            }
            Op::Sub(a, b) => {
                self.accumulate(grads, *a, gout.to_vec());
                self.accumulate(grads, *b, gout.iter().map(|&g| -g).collect());
            }
            Op::Mul(a, b) => {
                let (x, y) = (self.value(*a).data(), self.value(*b).data());
                if self.requires_grad(*a) {
                    self.accumulate(grads, *a, gout.iter().zip(y).map(|(&g, &q)| g * q).collect());
                }
                if self.requires_grad(*b) {
                    self.accumulate(grads, *b, gout.iter().zip(x).map(|(&g, &p)| g * p).collect());
                }
            }
            Op::AddRow(a, b) => {
                self.accumulate(grads, *a, gout.to_vec());
                if self.requires_grad(*b) {
                    let n = self.value(*b).numel();
                    let mut gb = vec![T::zero(); n];
                    for row in gout.chunks(n.max(1)) {
                        for (s, &g) in gb.iter_mut().zip(row) {
                            *s = *s + g;
                        }
                    }
                    self.accumulate(grads, *b, gb);
                }
            }
            Op::Scale(a, s) => {
                self.accumulate(grads, *a, gout.iter().map(|&g| g * *s).collect());
            }
            Op::AddConst(a) => self.accumulate(grads, *a, gout.to_vec()),
            Op::MatMul(a, b) => {
                let (x, y) = (self.value(*a), self.value(*b));
                let (m, k, n) = (x.rows(), x.cols(), y.cols());
                if self.requires_grad(*a) {
                    self.accumulate(grads, *a, matmul_bt_raw(gout, y.data(), m, n, k));
                }
                if self.requires_grad(*b) {
                    self.accumulate(grads, *b, matmul_at_raw(x.data(), gout, m, k, n));
                }
            }
            Op::MatMulBt(a, b) => {
                let (x, y) = (self.value(*a), self.value(*b));
                let (m, k, n) = (x.rows(), x.cols(), y.rows());
                if self.requires_grad(*a) {
                    self.accumulate(grads, *a, matmul_raw(gout, y.data(), m, n, k));
                }
                if self.requires_grad(*b) {
                    self.accumulate(grads, *b, matmul_at_raw(gout, x.data(), m, n, k));
                }
            }
            Op::Transpose(a) => {
                let (r, c) = (out.rows(), out.cols());
                let mut g = vec![T::zero(); r * c];
                for i in 0..r {
                    for j in 0..c {
                        g[j * r + i] = gout[i * c + j];
                    }
                }
                self.accumulate(grads, *a, g);
            }
            Op::ConcatCols(vars) => {
                let (r, total) = (out.rows(), out.cols());
                let mut offset = 0;
                for &v in vars {
                    let c = self.value(v).cols();
                    if self.requires_grad(v) {
                        let mut g = Vec::with_capacity(r * c);
                        for i in 0..r {
                            g.extend_from_slice(&gout[i * total + offset..i * total + offset + c]);
                        }
                        self.accumulate(grads, v, g);
                    }
                    offset += c;
                }
            }
            Op::ConcatRows(vars) => {
                let mut offset = 0;
                for &v in vars {
                    let n = self.value(v).numel();
                    if self.requires_grad(v) {
                        self.accumulate(grads, v, gout[offset..offset + n].to_vec());
                    }
                    offset += n;
                }
            }
            Op::SliceCols(a, start) => {
                let x = self.value(*a);
                let (r, c) = (x.rows(), x.cols());
                let len = out.cols();
                let mut g = vec![T::zero(); r * c];
                for i in 0..r {
                    g[i * c + start..i * c + start + len]
                        .copy_from_slice(&gout[i * len..(i + 1) * len]);
                }
                self.accumulate(grads, *a, g);
            }
            Op::SliceRows(a, start) => {
                let x = self.value(*a);
                let c = x.cols();
                let mut g = vec![T::zero(); x.numel()];
                g[start * c..start * c + gout.len()].copy_from_slice(gout);
                self.accumulate(grads, *a, g);
            }
            Op::MeanRows(a, rows) => {
                let x = self.value(*a);
                let c = x.cols();
                let inv = T::one() / T::lit(rows.len() as f64);
                let mut g = vec![T::zero(); x.numel()];
                for &r in rows {
                    for j in 0..c {
                        g[r * c + j] = g[r * c + j] + gout[j] * inv;
                    }
                }
                self.accumulate(grads, *a, g);
            }
            Op::Gelu(a) => {
                let x = self.value(*a).data();
                self.accumulate(
                    grads,
                    *a,
                    gout.iter().zip(x).map(|(&g, &v)| g * gelu_grad(v)).collect(),
                );
            }
            Op::Relu(a) => {
                let x = self.value(*a).data();
                self.accumulate(
                    grads,
                    *a,
                    gout.iter()
                        .zip(x)
                        .map(|(&g, &v)| if v > T::zero() { g } else { T::zero() })
                        .collect(),
                );
            }
            Op::LayerNorm {
                x,
                gain,
                bias,
                xhat,
                inv_std,
            } => {
                let (r, c) = (out.rows(), out.cols());
                let gv = self.value(*gain).data();
                if self.requires_grad(*gain) {
                    let mut gg = vec![T::zero(); c];
                    for i in 0..r {
                        for j in 0..c {
                            gg[j] = gg[j] + gout[i * c + j] * xhat[i * c + j];
                        }
                    }
                    self.accumulate(grads, *gain, gg);
                }
                if self.requires_grad(*bias) {
                    let mut gb = vec![T::zero(); c];
                    for i in 0..r {
                        for j in 0..c {
                            gb[j] = gb[j] + gout[i * c + j];
                        }
                    }
                    self.accumulate(grads, *bias, gb);
                }
                if self.requires_grad(*x) {
                    let n = T::lit(c as f64);
                    let mut gx = vec![T::zero(); r * c];
                    for i in 0..r {
                        let dxhat: Vec<T> = (0..c).map(|j| gout[i * c + j] * gv[j]).collect();
                        let sum_d: T = dxhat.iter().copied().sum();
                        let sum_dx: T = (0..c).map(|j| dxhat[j] * xhat[i * c + j]).sum();
                        for j in 0..c {
                            gx[i * c + j] = inv_std[i] / n
                                * (n * dxhat[j] - sum_d - xhat[i * c + j] * sum_dx);
                        }
                    }
                    self.accumulate(grads, *x, gx);
                }
            }
            Op::Softmax(a) => {
                let c = out.cols();
                let y = out.data();
                let mut g = vec![T::zero(); y.len()];
                for (i, row) in y.chunks(c.max(1)).enumerate() {
                    let dot: T = (0..c).map(|j| gout[i * c + j] * row[j]).sum();
                    for j in 0..c {
                        g[i * c + j] = row[j] * (gout[i * c + j] - dot);
                    }
                }
                self.accumulate(grads, *a, g);
            }
            Op::Embedding { table, ids } => {
                let t = self.value(*table);
                let d = t.cols();
                let mut g = vec![T::zero(); t.numel()];
                for (row, &id) in ids.iter().enumerate() {
                    for j in 0..d {
                        g[id * d + j] = g[id * d + j] + gout[row * d + j];
                    }
                }
                self.accumulate(grads, *table, g);
            }
            Op::CrossEntropy {
                logits,
                targets,
                probs,
            } => {
                let x = self.value(*logits);
                let (n, c) = (x.rows(), x.cols());
                let scale = gout[0] / T::lit(n as f64);
                let mut g: Vec<T> = probs.iter().map(|&p| p * scale).collect();
                for (i, &t) in targets.iter().enumerate() {
                    g[i * c + t] = g[i * c + t] - scale;
                }
                self.accumulate(grads, *logits, g);
            }
            Op::Sum(a) => {
                let n = self.value(*a).numel();
                self.accumulate(grads, *a, vec![gout[0]; n]);
            }
            Op::Mean(a) => {
                let n = self.value(*a).numel();
                self.accumulate(grads, *a, vec![gout[0] / T::lit(n as f64); n]);
            }
            Op::Reshape(a) => self.accumulate(grads, *a, gout.to_vec()),
        }
    }

    /// Gradient of the last backward pass with respect to `v`, if it took part.
    pub fn grad(&self, v: Var) -> Option<&[T]> {
        self.grads
            .as_ref()
            .and_then(|g| g.get(v.0))
            .and_then(|g| g.as_deref())
    }

    /// Gradients for every parameter leaf on this tape.
    pub fn param_grads(&self) -> Gradients<T> {
        let n = self.params.map_or(0, ParamStore::len);
        let mut out: Vec<Option<Vec<T>>> = vec![None; n];
        for (&id, &v) in &self.param_vars {
            if let Some(g) = self.grad(v) {
                out[id.index()] = Some(g.to_vec());
            }
        }
        Gradients(out)
    }
}
