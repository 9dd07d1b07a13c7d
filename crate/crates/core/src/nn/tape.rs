//! Reverse-mode differentiation over a small, fixed vocabulary of matrix
//! operations.
//!
//! A [`Tape`] borrows the flat parameter vector θ. Parameter tensors enter
//! the graph through [`Tape::param`]; everything else is either a constant
//! leaf or the result of a registered operation. [`Tape::backward`] returns
//! ∂out/∂θ accumulated over every use of every parameter slice, so weights
//! shared across time steps receive the summed gradient.
//!
//! Operations never panic on bad input. A shape mismatch or a non-finite
//! value is recorded as the tape's fault, the offending node is filled with
//! zeros, and the fault is reported by [`Tape::check`] and [`Tape::backward`].

use serde::{Deserialize, Serialize};

use super::matrix::Matrix;
use crate::error::{IslError, Result};

/// Pointwise nonlinearities.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Elu,
    Relu,
    Tanh,
    Sigmoid,
    Identity,
}

impl Activation {
    #[inline]
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Elu => {
                if x > 0.0 {
                    x
                } else {
                    x.exp_m1()
                }
            }
            Activation::Relu => x.max(0.0),
            Activation::Tanh => x.tanh(),
            Activation::Sigmoid => sigmoid(x),
            Activation::Identity => x,
        }
    }

    /// Derivative given the input `x` and output `y`.
    #[inline]
    fn derivative(self, x: f64, y: f64) -> f64 {
        match self {
            Activation::Elu => {
                if x > 0.0 {
                    1.0
                } else {
                    y + 1.0
                }
            }
            Activation::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - y * y,
            Activation::Sigmoid => y * (1.0 - y),
            Activation::Identity => 1.0,
        }
    }
}

/// Logistic sigmoid, stable for large |x|.
#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Order ℓ of the vector norm used by the loss.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormOrder {
    L1,
    L2,
}

impl NormOrder {
    pub fn apply(self, v: &[f64]) -> f64 {
        match self {
            NormOrder::L1 => v.iter().map(|x| x.abs()).sum(),
            NormOrder::L2 => v.iter().map(|x| x * x).sum::<f64>().sqrt(),
        }
    }
}

impl std::str::FromStr for NormOrder {
    type Err = IslError;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "1" | "l1" | "L1" => Ok(NormOrder::L1),
            "2" | "l2" | "L2" => Ok(NormOrder::L2),
            other => Err(IslError::InvalidParameter(format!("norm order must be 1 or 2, got `{other}`"))),
        }
    }
}

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Leaf,
    Param { offset: usize },
    MatMul(Var, Var),
    AddRow(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Shift(Var),
    Act(Var, Activation),
    Exp(Var),
    Powi(Var, i32),
    Sqrt(Var),
    Abs(Var),
    Sum(Var),
    Mean(Var),
    SoftCount { data: Var, samples: Var, alpha: f64 },
    RbfHistogram { counts: Var, nu: f64 },
    Norm(Var, NormOrder),
    ConcatCols(Var, Var),
    ConcatRows(Vec<Var>),
    RepeatRows(Var, usize),
    Reshape(Var),
    Col(Var, usize),
    MeanOf(Vec<Var>),
}

impl Op {
    fn name(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::Param { .. } => "param",
            Op::MatMul(..) => "matmul",
            Op::AddRow(..) => "add_row",
            Op::Add(..) => "add",
            Op::Sub(..) => "sub",
            Op::Mul(..) => "mul",
            Op::Scale(..) => "scale",
            Op::Shift(..) => "shift",
            Op::Act(_, a) => match a {
                Activation::Elu => "elu",
                Activation::Relu => "relu",
                Activation::Tanh => "tanh",
                Activation::Sigmoid => "sigmoid",
                Activation::Identity => "identity",
            },
            Op::Exp(..) => "exp",
            Op::Powi(..) => "powi",
            Op::Sqrt(..) => "sqrt",
            Op::Abs(..) => "abs",
            Op::Sum(..) => "sum",
            Op::Mean(..) => "mean",
            Op::SoftCount { .. } => "soft_count",
            Op::RbfHistogram { .. } => "rbf_histogram",
            Op::Norm(..) => "norm",
            Op::ConcatCols(..) => "concat_cols",
            Op::ConcatRows(..) => "concat_rows",
            Op::RepeatRows(..) => "repeat_rows",
            Op::Reshape(..) => "reshape",
            Op::Col(..) => "col",
            Op::MeanOf(..) => "mean_of",
        }
    }
}

struct Node {
    op: Op,
    value: Matrix,
}

/// Gradients produced by [`Tape::backward_full`].
pub struct Gradients {
    /// ∂out/∂θ.
    pub params: Vec<f64>,
    adjoints: Vec<Option<Matrix>>,
}

impl Gradients {
    /// ∂out/∂v for any node, zero-shaped `None` if `v` does not reach the output.
    pub fn wrt(&self, v: Var) -> Option<&Matrix> {
        self.adjoints[v.0].as_ref()
    }
}

pub struct Tape<'a> {
    theta: &'a [f64],
    nodes: Vec<Node>,
    fault: Option<IslError>,
}

impl<'a> Tape<'a> {
    pub fn new(theta: &'a [f64]) -> Self {
        Self { theta, nodes: Vec::new(), fault: None }
    }

    pub fn theta(&self) -> &[f64] {
        self.theta
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Matrix {
        &self.nodes[v.0].value
    }

    /// First element of a node, for scalar outputs.
    pub fn scalar(&self, v: Var) -> f64 {
        self.nodes[v.0].value.data.first().copied().unwrap_or(f64::NAN)
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        self.nodes[v.0].value.shape()
    }

    /// The first fault recorded, if any.
    pub fn check(&self) -> Result<()> {
        match &self.fault {
            Some(e) => Err(e.clone()),
            None => Ok(()),
        }
    }

    fn push(&mut self, op: Op, value: Matrix) -> Var {
        if self.fault.is_none() && !value.is_finite() {
            self.fault = Some(IslError::NonFinite { op: op.name() });
        }
        self.nodes.push(Node { op, value });
        Var(self.nodes.len() - 1)
    }

    fn shape_fault(&mut self, op: &'static str, detail: String, rows: usize, cols: usize, node: Op) -> Var {
        if self.fault.is_none() {
            self.fault = Some(IslError::Shape { op, detail });
        }
        self.nodes.push(Node { op: node, value: Matrix::zeros(rows, cols) });
        Var(self.nodes.len() - 1)
    }

    pub fn constant(&mut self, value: Matrix) -> Var {
        self.push(Op::Leaf, value)
    }

    /// A `rows × cols` view of θ starting at `offset` (row-major).
    pub fn param(&mut self, offset: usize, rows: usize, cols: usize) -> Var {
        let len = rows * cols;
        if offset + len > self.theta.len() {
            let detail = format!("slice {offset}..{} exceeds θ length {}", offset + len, self.theta.len());
            return self.shape_fault("param", detail, rows, cols, Op::Leaf);
        }
        let value = Matrix::from_vec(rows, cols, self.theta[offset..offset + len].to_vec());
        self.push(Op::Param { offset }, value)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let (ar, ac) = self.shape(a);
        let (br, bc) = self.shape(b);
        if ac != br {
            return self.shape_fault("matmul", format!("{ar}x{ac} · {br}x{bc}"), ar, bc, Op::MatMul(a, b));
        }
        let value = self.value(a).matmul(self.value(b));
        self.push(Op::MatMul(a, b), value)
    }

    /// Adds the `1 × c` row `b` to every row of `a`.
    pub fn add_row(&mut self, a: Var, b: Var) -> Var {
        let (ar, ac) = self.shape(a);
        let (br, bc) = self.shape(b);
        if br != 1 || bc != ac {
            return self.shape_fault("add_row", format!("{ar}x{ac} + {br}x{bc}"), ar, ac, Op::AddRow(a, b));
        }
        let mut value = self.value(a).clone();
        let bias = &self.nodes[b.0].value.data;
        for row in value.data.chunks_mut(ac.max(1)) {
            for (x, bb) in row.iter_mut().zip(bias) {
                *x += bb;
            }
        }
        self.push(Op::AddRow(a, b), value)
    }

    fn zip_with(&mut self, a: Var, b: Var, op: Op, name: &'static str, f: impl Fn(f64, f64) -> f64) -> Var {
        let sa = self.shape(a);
        let sb = self.shape(b);
        if sa != sb {
            return self.shape_fault(name, format!("{sa:?} vs {sb:?}"), sa.0, sa.1, op);
        }
        let data = self.value(a).data.iter().zip(&self.value(b).data).map(|(x, y)| f(*x, *y)).collect();
        self.push(op, Matrix::from_vec(sa.0, sa.1, data))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        self.zip_with(a, b, Op::Add(a, b), "add", |x, y| x + y)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        self.zip_with(a, b, Op::Sub(a, b), "sub", |x, y| x - y)
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        self.zip_with(a, b, Op::Mul(a, b), "mul", |x, y| x * y)
    }

    fn map(&mut self, a: Var, op: Op, f: impl Fn(f64) -> f64) -> Var {
        let src = self.value(a);
        let value = Matrix::from_vec(src.rows, src.cols, src.data.iter().map(|x| f(*x)).collect());
        self.push(op, value)
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        self.map(a, Op::Scale(a, c), |x| c * x)
    }

    pub fn shift(&mut self, a: Var, c: f64) -> Var {
        self.map(a, Op::Shift(a), |x| x + c)
    }

    pub fn activation(&mut self, a: Var, act: Activation) -> Var {
        self.map(a, Op::Act(a, act), |x| act.apply(x))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.activation(a, Activation::Sigmoid)
    }

    pub fn exp(&mut self, a: Var) -> Var {
        self.map(a, Op::Exp(a), f64::exp)
    }

    pub fn powi(&mut self, a: Var, n: i32) -> Var {
        self.map(a, Op::Powi(a, n), |x| x.powi(n))
    }

    pub fn sqrt(&mut self, a: Var) -> Var {
        self.map(a, Op::Sqrt(a), |x| if x >= 0.0 { x.sqrt() } else { f64::NAN })
    }

    pub fn abs(&mut self, a: Var) -> Var {
        self.map(a, Op::Abs(a), f64::abs)
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).data.iter().sum();
        self.push(Op::Sum(a), Matrix::scalar(s))
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let m = self.value(a);
        let s = m.data.iter().sum::<f64>() / m.len().max(1) as f64;
        self.push(Op::Mean(a), Matrix::scalar(s))
    }

    /// Soft rank counts `out[r] = Σ_k σ(α (data[r] − samples[g, k]))`.
    ///
    /// `data` is `R × 1`; `samples` is either `1 × K` (one sample set shared
    /// by every row) or `R × K` (a sample set per row).
    pub fn soft_count(&mut self, data: Var, samples: Var, alpha: f64) -> Var {
        let (dr, dc) = self.shape(data);
        let (sr, sc) = self.shape(samples);
        let op = Op::SoftCount { data, samples, alpha };
        if dc != 1 || !(sr == 1 || sr == dr) {
            return self.shape_fault("soft_count", format!("data {dr}x{dc}, samples {sr}x{sc}"), dr, 1, op);
        }
        let y = &self.value(data).data;
        let s = self.value(samples);
        let out: Vec<f64> = (0..dr)
            .map(|r| {
                let row = if sr == 1 { s.row_slice(0) } else { s.row_slice(r) };
                row.iter().map(|&si| sigmoid(alpha * (y[r] - si))).sum()
            })
            .collect();
        self.push(op, Matrix::column(out))
    }

    /// RBF soft histogram over bins `0..=k`:
    /// `q[j] = mean_r exp(−(a_r − j)² / 2ν²)`. Returns a `1 × (k+1)` row.
    pub fn rbf_histogram(&mut self, counts: Var, k: usize, nu: f64) -> Var {
        let a = &self.value(counts).data;
        let n = a.len().max(1) as f64;
        let inv = 1.0 / (2.0 * nu * nu);
        let mut q = vec![0.0; k + 1];
        for &ai in a {
            for (j, qj) in q.iter_mut().enumerate() {
                let d = ai - j as f64;
                *qj += (-d * d * inv).exp();
            }
        }
        for qj in &mut q {
            *qj /= n;
        }
        self.push(Op::RbfHistogram { counts, nu }, Matrix::row(q))
    }

    pub fn norm(&mut self, a: Var, order: NormOrder) -> Var {
        let v = order.apply(&self.value(a).data);
        self.push(Op::Norm(a, order), Matrix::scalar(v))
    }

    pub fn concat_cols(&mut self, a: Var, b: Var) -> Var {
        let (ar, ac) = self.shape(a);
        let (br, bc) = self.shape(b);
        let op = Op::ConcatCols(a, b);
        if ar != br {
            return self.shape_fault("concat_cols", format!("{ar}x{ac} | {br}x{bc}"), ar, ac + bc, op);
        }
        let mut data = Vec::with_capacity(ar * (ac + bc));
        for r in 0..ar {
            data.extend_from_slice(self.value(a).row_slice(r));
            data.extend_from_slice(self.value(b).row_slice(r));
        }
        self.push(op, Matrix::from_vec(ar, ac + bc, data))
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Var {
        let cols = parts.first().map(|&p| self.shape(p).1).unwrap_or(0);
        let op = Op::ConcatRows(parts.to_vec());
        if parts.iter().any(|&p| self.shape(p).1 != cols) {
            return self.shape_fault("concat_rows", "column counts differ".into(), 0, cols, op);
        }
        let mut data = Vec::new();
        let mut rows = 0;
        for &p in parts {
            rows += self.shape(p).0;
            data.extend_from_slice(&self.value(p).data);
        }
        self.push(op, Matrix::from_vec(rows, cols, data))
    }

    /// Repeats every row `times` times consecutively.
    pub fn repeat_rows(&mut self, a: Var, times: usize) -> Var {
        let m = self.value(a);
        let mut data = Vec::with_capacity(m.len() * times);
        for r in 0..m.rows {
            for _ in 0..times {
                data.extend_from_slice(m.row_slice(r));
            }
        }
        let value = Matrix::from_vec(m.rows * times, m.cols, data);
        self.push(Op::RepeatRows(a, times), value)
    }

    /// Reinterprets the row-major data with a new shape.
    pub fn reshape(&mut self, a: Var, rows: usize, cols: usize) -> Var {
        let m = self.value(a);
        if m.len() != rows * cols {
            let detail = format!("{}x{} -> {rows}x{cols}", m.rows, m.cols);
            return self.shape_fault("reshape", detail, rows, cols, Op::Reshape(a));
        }
        let value = Matrix::from_vec(rows, cols, m.data.clone());
        self.push(Op::Reshape(a), value)
    }

    /// Column `c` as an `R × 1` node.
    pub fn col(&mut self, a: Var, c: usize) -> Var {
        let m = self.value(a);
        if c >= m.cols {
            let detail = format!("column {c} of {}x{}", m.rows, m.cols);
            let rows = m.rows;
            return self.shape_fault("col", detail, rows, 1, Op::Col(a, c));
        }
        let data = (0..m.rows).map(|r| m.get(r, c)).collect();
        self.push(Op::Col(a, c), Matrix::column(data))
    }

    /// Elementwise mean of equally shaped nodes.
    pub fn mean_of(&mut self, parts: &[Var]) -> Var {
        let op = Op::MeanOf(parts.to_vec());
        let Some(&first) = parts.first() else {
            return self.shape_fault("mean_of", "no operands".into(), 1, 1, op);
        };
        let shape = self.shape(first);
        if parts.iter().any(|&p| self.shape(p) != shape) {
            return self.shape_fault("mean_of", "operand shapes differ".into(), shape.0, shape.1, op);
        }
        let mut acc = vec![0.0; shape.0 * shape.1];
        for &p in parts {
            for (a, x) in acc.iter_mut().zip(&self.value(p).data) {
                *a += x;
            }
        }
        let n = parts.len() as f64;
        acc.iter_mut().for_each(|a| *a /= n);
        self.push(op, Matrix::from_vec(shape.0, shape.1, acc))
    }

    /// ∂out/∂θ for a scalar `out`.
    pub fn backward(&self, out: Var) -> Result<Vec<f64>> {
        Ok(self.backward_full(out)?.params)
    }

    /// ∂out/∂θ together with the adjoint of every node.
    pub fn backward_full(&self, out: Var) -> Result<Gradients> {
        self.check()?;
        if self.shape(out) != (1, 1) {
            return Err(IslError::Shape {
                op: "backward",
                detail: format!("output must be 1x1, got {:?}", self.shape(out)),
            });
        }
        let mut params = vec![0.0; self.theta.len()];
        let mut adj: Vec<Option<Matrix>> = (0..self.nodes.len()).map(|_| None).collect();
        adj[out.0] = Some(Matrix::scalar(1.0));

        for i in (0..=out.0).rev() {
            let Some(d) = adj[i].take() else { continue };
            let node = &self.nodes[i];
            if !d.is_finite() {
                return Err(IslError::NonFinite { op: node.op.name() });
            }
            let y = &node.value;
            match &node.op {
                Op::Leaf => {}
                Op::Param { offset } => {
                    for (g, dv) in params[*offset..*offset + d.len()].iter_mut().zip(&d.data) {
                        *g += dv;
                    }
                }
                Op::MatMul(a, b) => {
                    let da = d.matmul_t(self.value(*b));
                    let db = self.value(*a).t_matmul(&d);
                    accumulate(&mut adj, *a, &da);
                    accumulate(&mut adj, *b, &db);
                }
                Op::AddRow(a, b) => {
                    let mut db = Matrix::zeros(1, d.cols);
                    for row in d.data.chunks(d.cols.max(1)) {
                        for (s, x) in db.data.iter_mut().zip(row) {
                            *s += x;
                        }
                    }
                    accumulate(&mut adj, *a, &d);
                    accumulate(&mut adj, *b, &db);
                }
                Op::Add(a, b) => {
                    accumulate(&mut adj, *a, &d);
                    accumulate(&mut adj, *b, &d);
                }
                Op::Sub(a, b) => {
                    accumulate(&mut adj, *a, &d);
                    accumulate_with(&mut adj, *b, &d, |x| -x);
                }
                Op::Mul(a, b) => {
                    let av = self.value(*a);
                    let bv = self.value(*b);
                    accumulate_zip(&mut adj, *a, &d, bv, |g, x| g * x);
                    accumulate_zip(&mut adj, *b, &d, av, |g, x| g * x);
                }
                Op::Scale(a, c) => accumulate_with(&mut adj, *a, &d, |g| g * c),
                Op::Shift(a) => accumulate(&mut adj, *a, &d),
                Op::Act(a, act) => {
                    let x = self.value(*a);
                    let mut g = d.clone();
                    for ((gi, xi), yi) in g.data.iter_mut().zip(&x.data).zip(&y.data) {
                        *gi *= act.derivative(*xi, *yi);
                    }
                    accumulate(&mut adj, *a, &g);
                }
                Op::Exp(a) => accumulate_zip(&mut adj, *a, &d, y, |g, yi| g * yi),
                Op::Powi(a, n) => {
                    let n = *n;
                    accumulate_zip(&mut adj, *a, &d, self.value(*a), |g, x| g * n as f64 * x.powi(n - 1))
                }
                Op::Sqrt(a) => accumulate_zip(&mut adj, *a, &d, y, |g, yi| if yi > 0.0 { 0.5 * g / yi } else { 0.0 }),
                Op::Abs(a) => accumulate_zip(&mut adj, *a, &d, self.value(*a), |g, x| g * sign(x)),
                Op::Sum(a) => {
                    let (r, c) = self.shape(*a);
                    accumulate(&mut adj, *a, &Matrix::from_vec(r, c, vec![d.data[0]; r * c]));
                }
                Op::Mean(a) => {
                    let (r, c) = self.shape(*a);
                    let g = d.data[0] / (r * c).max(1) as f64;
                    accumulate(&mut adj, *a, &Matrix::from_vec(r, c, vec![g; r * c]));
                }
                Op::SoftCount { data, samples, alpha } => {
                    let yv = &self.value(*data).data;
                    let s = self.value(*samples);
                    let mut dy = Matrix::zeros(yv.len(), 1);
                    let mut ds = Matrix::zeros(s.rows, s.cols);
                    for (r, &yr) in yv.iter().enumerate() {
                        let g = if s.rows == 1 { 0 } else { r };
                        let mut acc = 0.0;
                        for k in 0..s.cols {
                            let sg = sigmoid(alpha * (yr - s.get(g, k)));
                            let w = d.data[r] * alpha * sg * (1.0 - sg);
                            acc += w;
                            ds.data[g * s.cols + k] -= w;
                        }
                        dy.data[r] = acc;
                    }
                    accumulate(&mut adj, *data, &dy);
                    accumulate(&mut adj, *samples, &ds);
                }
                Op::RbfHistogram { counts, nu } => {
                    let a = self.value(*counts);
                    let n = a.len().max(1) as f64;
                    let inv = 1.0 / (2.0 * nu * nu);
                    let mut g = Matrix::zeros(a.rows, a.cols);
                    for (gi, &ai) in g.data.iter_mut().zip(&a.data) {
                        let mut acc = 0.0;
                        for (j, dj) in d.data.iter().enumerate() {
                            let diff = ai - j as f64;
                            acc += dj * (-diff * diff * inv).exp() * (-2.0 * diff * inv);
                        }
                        *gi = acc / n;
                    }
                    accumulate(&mut adj, *counts, &g);
                }
                Op::Norm(a, order) => {
                    let x = self.value(*a);
                    let g0 = d.data[0];
                    let nrm = y.data[0];
                    match order {
                        NormOrder::L1 => accumulate_with(&mut adj, *a, x, |xi| g0 * sign(xi)),
                        NormOrder::L2 => {
                            let scale = if nrm > 0.0 { g0 / nrm } else { 0.0 };
                            accumulate_with(&mut adj, *a, x, |xi| xi * scale)
                        }
                    }
                }
                Op::ConcatCols(a, b) => {
                    let ac = self.shape(*a).1;
                    let bc = self.shape(*b).1;
                    let mut da = Matrix::zeros(d.rows, ac);
                    let mut db = Matrix::zeros(d.rows, bc);
                    for r in 0..d.rows {
                        let row = d.row_slice(r);
                        da.data[r * ac..(r + 1) * ac].copy_from_slice(&row[..ac]);
                        db.data[r * bc..(r + 1) * bc].copy_from_slice(&row[ac..]);
                    }
                    accumulate(&mut adj, *a, &da);
                    accumulate(&mut adj, *b, &db);
                }
                Op::ConcatRows(parts) => {
                    let mut start = 0;
                    for p in parts {
                        let (r, c) = self.shape(*p);
                        let piece = Matrix::from_vec(r, c, d.data[start..start + r * c].to_vec());
                        start += r * c;
                        accumulate(&mut adj, *p, &piece);
                    }
                }
                Op::RepeatRows(a, times) => {
                    let (r, c) = self.shape(*a);
                    let mut g = Matrix::zeros(r, c);
                    for i in 0..r {
                        for j in 0..*times {
                            let src = d.row_slice(i * times + j);
                            for (gv, s) in g.data[i * c..(i + 1) * c].iter_mut().zip(src) {
                                *gv += s;
                            }
                        }
                    }
                    accumulate(&mut adj, *a, &g);
                }
                Op::Reshape(a) => {
                    let (r, c) = self.shape(*a);
                    accumulate(&mut adj, *a, &Matrix::from_vec(r, c, d.data.clone()));
                }
                Op::Col(a, c) => {
                    let (r, cols) = self.shape(*a);
                    let mut g = Matrix::zeros(r, cols);
                    for i in 0..r {
                        g.data[i * cols + c] = d.data[i];
                    }
                    accumulate(&mut adj, *a, &g);
                }
                Op::MeanOf(parts) => {
                    let n = parts.len() as f64;
                    for p in parts {
                        accumulate_with(&mut adj, *p, &d, |g| g / n);
                    }
                }
            }
            adj[i] = Some(d);
        }
        if params.iter().any(|g| !g.is_finite()) {
            return Err(IslError::NonFinite { op: "backward" });
        }
        Ok(Gradients { params, adjoints: adj })
    }
}

#[inline]
fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

fn slot(adj: &mut [Option<Matrix>], v: Var, rows: usize, cols: usize) -> &mut Matrix {
    adj[v.0].get_or_insert_with(|| Matrix::zeros(rows, cols))
}

fn accumulate(adj: &mut [Option<Matrix>], v: Var, g: &Matrix) {
    let s = slot(adj, v, g.rows, g.cols);
    for (a, b) in s.data.iter_mut().zip(&g.data) {
        *a += b;
    }
}

fn accumulate_with(adj: &mut [Option<Matrix>], v: Var, g: &Matrix, f: impl Fn(f64) -> f64) {
    let s = slot(adj, v, g.rows, g.cols);
    for (a, b) in s.data.iter_mut().zip(&g.data) {
        *a += f(*b);
    }
}

fn accumulate_zip(adj: &mut [Option<Matrix>], v: Var, g: &Matrix, x: &Matrix, f: impl Fn(f64, f64) -> f64) {
    let s = slot(adj, v, g.rows, g.cols);
    for ((a, b), xi) in s.data.iter_mut().zip(&g.data).zip(&x.data) {
        *a += f(*b, *xi);
    }
}

/// Evaluates `f` on a fresh tape over θ and returns the scalar output with
/// its gradient ∂f/∂θ.
pub fn value_and_grad<F>(theta: &[f64], f: F) -> Result<(f64, Vec<f64>)>
where
    F: FnOnce(&mut Tape<'_>) -> Var,
{
    let mut tape = Tape::new(theta);
    let out = f(&mut tape);
    let g = tape.backward(out)?;
    Ok((tape.scalar(out), g))
}

/// ∂f/∂θ.
pub fn grad<F>(theta: &[f64], f: F) -> Result<Vec<f64>>
where
    F: FnOnce(&mut Tape<'_>) -> Var,
{
    value_and_grad(theta, f).map(|(_, g)| g)
}
