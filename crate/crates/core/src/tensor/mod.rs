//! Dense 2-D `f64` tensors with reverse-mode differentiation.
//!
//! A [`Tensor`] is an immutable node in a computation graph. Operations build
//! new nodes that remember their inputs; [`Tensor::backward`] sweeps the graph
//! in reverse topological order and accumulates gradients into every node
//! that requires one. There is no broadcasting: row replication is explicit
//! via [`Tensor::repeat_rows`].

mod gradcheck;
mod kernels;
mod params;

use std::collections::HashSet;
use std::fmt;
use std::sync::{Arc, Mutex};

use crate::error::{Error, Result};

pub use gradcheck::{finite_diff_grad, finite_diff_grad_at, max_relative_error, relative_error};
pub use params::{
    read_checkpoint, write_checkpoint, Checkpoint, ParamGroup, ParamStore, CHECKPOINT_MAGIC,
};

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_K: f64 = 0.044_715;

#[derive(Clone)]
pub struct Tensor(Arc<Node>);

struct Node {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
    requires_grad: bool,
    grad: Mutex<Option<Vec<f64>>>,
    op: Op,
}

enum Op {
    Leaf,
    MatMul(Tensor, Tensor),
    Transpose(Tensor),
    Add(Tensor, Tensor),
    Sub(Tensor, Tensor),
    Mul(Tensor, Tensor),
    Scale(Tensor, f64),
    RepeatRows(Tensor),
    Softmax(Tensor),
    Gelu(Tensor),
    RmsNorm { input: Tensor, inv_rms: Vec<f64> },
    ConcatRows(Vec<Tensor>),
    SliceRows { input: Tensor, start: usize },
    GatherRows { table: Tensor, indices: Vec<usize> },
    Sum(Tensor),
    CrossEntropy { logits: Tensor, targets: Vec<Option<usize>>, probs: Vec<f64>, count: usize },
}

impl Op {
    fn parents(&self) -> Vec<&Tensor> {
        match self {
            Op::Leaf => Vec::new(),
            Op::MatMul(a, b) | Op::Add(a, b) | Op::Sub(a, b) | Op::Mul(a, b) => vec![a, b],
            Op::Transpose(a)
            | Op::Scale(a, _)
            | Op::RepeatRows(a)
            | Op::Softmax(a)
            | Op::Gelu(a)
            | Op::Sum(a) => vec![a],
            Op::RmsNorm { input, .. } | Op::SliceRows { input, .. } => vec![input],
            Op::GatherRows { table, .. } => vec![table],
            Op::CrossEntropy { logits, .. } => vec![logits],
            Op::ConcatRows(parts) => parts.iter().collect(),
        }
    }
}

impl fmt::Debug for Tensor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Tensor")
            .field("shape", &self.shape())
            .field("requires_grad", &self.0.requires_grad)
            .field("data", &self.0.data)
            .finish()
    }
}

impl Tensor {
    fn from_op(rows: usize, cols: usize, data: Vec<f64>, op: Op) -> Self {
        debug_assert_eq!(data.len(), rows * cols);
        let requires_grad = op.parents().iter().any(|p| p.0.requires_grad);
        Tensor(Arc::new(Node {
            rows,
            cols,
            data,
            requires_grad,
            grad: Mutex::new(None),
            op,
        }))
    }

    fn leaf(rows: usize, cols: usize, data: Vec<f64>, requires_grad: bool) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::shape(
                "from_vec",
                format!("{} values for shape {}x{}", data.len(), rows, cols),
            ));
        }
        Ok(Tensor(Arc::new(Node {
            rows,
            cols,
            data,
            requires_grad,
            grad: Mutex::new(None),
            op: Op::Leaf,
        })))
    }

    /// Constant leaf; never receives a gradient.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        Self::leaf(rows, cols, data, false)
    }

    /// Trainable leaf.
    pub fn param(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        Self::leaf(rows, cols, data, true)
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self::leaf(rows, cols, vec![0.0; rows * cols], false).expect("consistent shape")
    }

    pub fn eye(n: usize) -> Self {
        let mut data = vec![0.0; n * n];
        for i in 0..n {
            data[i * n + i] = 1.0;
        }
        Self::leaf(n, n, data, false).expect("consistent shape")
    }

    pub fn scalar(value: f64) -> Self {
        Self::leaf(1, 1, vec![value], false).expect("consistent shape")
    }

    /// Same values, new leaf with the given trainability. Detaches from any graph.
    pub fn to_leaf(&self, requires_grad: bool) -> Self {
        Self::leaf(self.0.rows, self.0.cols, self.0.data.clone(), requires_grad)
            .expect("consistent shape")
    }

    pub fn rows(&self) -> usize {
        self.0.rows
    }

    pub fn cols(&self) -> usize {
        self.0.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.0.rows, self.0.cols)
    }

    pub fn data(&self) -> &[f64] {
        &self.0.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let c = self.0.cols;
        &self.0.data[i * c..(i + 1) * c]
    }

    pub fn at(&self, r: usize, c: usize) -> f64 {
        self.0.data[r * self.0.cols + c]
    }

    /// The single value of a 1x1 tensor.
    pub fn item(&self) -> f64 {
        debug_assert_eq!(self.shape(), (1, 1));
        self.0.data[0]
    }

    pub fn requires_grad(&self) -> bool {
        self.0.requires_grad
    }

    pub fn is_leaf(&self) -> bool {
        matches!(self.0.op, Op::Leaf)
    }

    pub fn grad(&self) -> Option<Vec<f64>> {
        self.0.grad.lock().expect("grad lock").clone()
    }

    pub fn zero_grad(&self) {
        *self.0.grad.lock().expect("grad lock") = None;
    }

    pub fn ptr_eq(&self, other: &Tensor) -> bool {
        Arc::ptr_eq(&self.0, &other.0)
    }

    fn accumulate(&self, delta: &[f64]) {
        let mut guard = self.0.grad.lock().expect("grad lock");
        match guard.as_mut() {
            Some(g) => {
                for (a, b) in g.iter_mut().zip(delta) {
                    *a += b;
                }
            }
            None => *guard = Some(delta.to_vec()),
        }
    }

    fn same_shape(&self, other: &Tensor, op: &'static str) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(Error::shape(
                op,
                format!("{:?} vs {:?}", self.shape(), other.shape()),
            ));
        }
        Ok(())
    }

    pub fn matmul(&self, other: &Tensor) -> Result<Tensor> {
        let (m, k) = self.shape();
        let (k2, n) = other.shape();
        if k != k2 {
            return Err(Error::shape(
                "matmul",
                format!("{}x{} times {}x{}", m, k, k2, n),
            ));
        }
        let mut out = vec![0.0; m * n];
        kernels::gemm(m, k, n, self.data(), false, other.data(), false, &mut out, 0.0);
        Ok(Tensor::from_op(m, n, out, Op::MatMul(self.clone(), other.clone())))
    }

    pub fn transpose(&self) -> Tensor {
        let (m, n) = self.shape();
        let mut out = vec![0.0; m * n];
        kernels::transpose_into(m, n, self.data(), &mut out);
        Tensor::from_op(n, m, out, Op::Transpose(self.clone()))
    }

    pub fn add(&self, other: &Tensor) -> Result<Tensor> {
        self.same_shape(other, "add")?;
        let out = self.data().iter().zip(other.data()).map(|(a, b)| a + b).collect();
        Ok(Tensor::from_op(self.rows(), self.cols(), out, Op::Add(self.clone(), other.clone())))
    }

    pub fn sub(&self, other: &Tensor) -> Result<Tensor> {
        self.same_shape(other, "sub")?;
        let out = self.data().iter().zip(other.data()).map(|(a, b)| a - b).collect();
        Ok(Tensor::from_op(self.rows(), self.cols(), out, Op::Sub(self.clone(), other.clone())))
    }

    /// Elementwise product.
    pub fn mul(&self, other: &Tensor) -> Result<Tensor> {
        self.same_shape(other, "mul")?;
        let out = self.data().iter().zip(other.data()).map(|(a, b)| a * b).collect();
        Ok(Tensor::from_op(self.rows(), self.cols(), out, Op::Mul(self.clone(), other.clone())))
    }

    pub fn scale(&self, factor: f64) -> Tensor {
        let out = self.data().iter().map(|a| a * factor).collect();
        Tensor::from_op(self.rows(), self.cols(), out, Op::Scale(self.clone(), factor))
    }

    /// Replicate a single row `times` times.
    pub fn repeat_rows(&self, times: usize) -> Result<Tensor> {
        if self.rows() != 1 {
            return Err(Error::shape(
                "repeat_rows",
                format!("expected one row, got {:?}", self.shape()),
            ));
        }
        let mut out = Vec::with_capacity(times * self.cols());
        for _ in 0..times {
            out.extend_from_slice(self.data());
        }
        Ok(Tensor::from_op(times, self.cols(), out, Op::RepeatRows(self.clone())))
    }

    /// `self + bias` where `bias` is a single row added to every row.
    pub fn add_row(&self, bias: &Tensor) -> Result<Tensor> {
        self.add(&bias.repeat_rows(self.rows())?)
    }

    fn check_finite(&self, op: &'static str) -> Result<()> {
        match self.data().iter().position(|v| !v.is_finite()) {
            Some(index) => Err(Error::NumericInput { op, index }),
            None => Ok(()),
        }
    }

    /// Row-wise softmax with per-row max subtraction.
    pub fn softmax_rows(&self) -> Result<Tensor> {
        self.softmax_impl(false)
    }

    /// Row-wise softmax where row `i` only sees columns `0..=i`; masked entries are exactly 0.
    pub fn causal_softmax_rows(&self) -> Result<Tensor> {
        self.softmax_impl(true)
    }

    fn softmax_impl(&self, causal: bool) -> Result<Tensor> {
        self.check_finite("softmax_rows")?;
        let (m, n) = self.shape();
        if causal && m > n {
            return Err(Error::shape(
                "causal_softmax_rows",
                format!("more rows than columns: {}x{}", m, n),
            ));
        }
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            let width = if causal { i + 1 } else { n };
            let row = &self.data()[i * n..i * n + width];
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let dst = &mut out[i * n..i * n + width];
            let mut total = 0.0;
            for (d, &x) in dst.iter_mut().zip(row) {
                *d = (x - max).exp();
                total += *d;
            }
            for d in dst.iter_mut() {
                *d /= total;
            }
        }
        Ok(Tensor::from_op(m, n, out, Op::Softmax(self.clone())))
    }

    /// Tanh-approximated GELU.
    pub fn gelu(&self) -> Tensor {
        let out = self
            .data()
            .iter()
            .map(|&x| 0.5 * x * (1.0 + (GELU_C * (x + GELU_K * x * x * x)).tanh()))
            .collect();
        Tensor::from_op(self.rows(), self.cols(), out, Op::Gelu(self.clone()))
    }

    /// Scale each row to unit root-mean-square.
    pub fn rms_norm_rows(&self, eps: f64) -> Tensor {
        let (m, n) = self.shape();
        let mut out = vec![0.0; m * n];
        let mut inv_rms = Vec::with_capacity(m);
        for i in 0..m {
            let row = &self.data()[i * n..(i + 1) * n];
            let ms = row.iter().map(|x| x * x).sum::<f64>() / n as f64;
            let r = 1.0 / (ms + eps).sqrt();
            inv_rms.push(r);
            for (d, x) in out[i * n..(i + 1) * n].iter_mut().zip(row) {
                *d = x * r;
            }
        }
        Tensor::from_op(m, n, out, Op::RmsNorm { input: self.clone(), inv_rms })
    }

    /// Stack row blocks in argument order.
    pub fn concat_rows(parts: &[Tensor]) -> Result<Tensor> {
        let first = parts
            .first()
            .ok_or_else(|| Error::shape("concat_rows", "no parts"))?;
        let cols = first.cols();
        if let Some(bad) = parts.iter().find(|p| p.cols() != cols) {
            return Err(Error::shape(
                "concat_rows",
                format!("column mismatch {} vs {}", cols, bad.cols()),
            ));
        }
        let rows = parts.iter().map(Tensor::rows).sum();
        let mut out = Vec::with_capacity(rows * cols);
        for p in parts {
            out.extend_from_slice(p.data());
        }
        Ok(Tensor::from_op(rows, cols, out, Op::ConcatRows(parts.to_vec())))
    }

    pub fn slice_rows(&self, start: usize, len: usize) -> Result<Tensor> {
        if start + len > self.rows() {
            return Err(Error::shape(
                "slice_rows",
                format!("rows {}..{} of {}", start, start + len, self.rows()),
            ));
        }
        let c = self.cols();
        let out = self.data()[start * c..(start + len) * c].to_vec();
        Ok(Tensor::from_op(len, c, out, Op::SliceRows { input: self.clone(), start }))
    }

    /// Embedding lookup: row `indices[i]` of `self` becomes output row `i`.
    pub fn gather_rows(&self, indices: &[usize]) -> Result<Tensor> {
        let c = self.cols();
        let mut out = Vec::with_capacity(indices.len() * c);
        for &ix in indices {
            if ix >= self.rows() {
                return Err(Error::shape(
                    "gather_rows",
                    format!("index {} out of {} rows", ix, self.rows()),
                ));
            }
            out.extend_from_slice(self.row(ix));
        }
        Ok(Tensor::from_op(
            indices.len(),
            c,
            out,
            Op::GatherRows { table: self.clone(), indices: indices.to_vec() },
        ))
    }

    pub fn sum(&self) -> Tensor {
        let total = self.data().iter().sum();
        Tensor::from_op(1, 1, vec![total], Op::Sum(self.clone()))
    }

    /// Mean cross-entropy of `targets` under row-wise softmax of `self`,
    /// counting only rows whose target is `Some`.
    pub fn masked_cross_entropy(&self, targets: &[Option<usize>]) -> Result<Tensor> {
        let (m, n) = self.shape();
        if targets.len() != m {
            return Err(Error::shape(
                "masked_cross_entropy",
                format!("{} targets for {} rows", targets.len(), m),
            ));
        }
        let count = targets.iter().filter(|t| t.is_some()).count();
        if count == 0 {
            return Err(Error::Contract("cross-entropy mask selects no positions".into()));
        }
        self.check_finite("masked_cross_entropy")?;
        let mut probs = vec![0.0; m * n];
        let mut total = 0.0;
        for (i, t) in targets.iter().enumerate() {
            let Some(t) = *t else { continue };
            if t >= n {
                return Err(Error::shape(
                    "masked_cross_entropy",
                    format!("target {} out of {} classes", t, n),
                ));
            }
            let row = &self.data()[i * n..(i + 1) * n];
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + row.iter().map(|x| (x - max).exp()).sum::<f64>().ln();
            total += lse - row[t];
            for (p, x) in probs[i * n..(i + 1) * n].iter_mut().zip(row) {
                *p = (x - lse).exp();
            }
        }
        Ok(Tensor::from_op(
            1,
            1,
            vec![total / count as f64],
            Op::CrossEntropy {
                logits: self.clone(),
                targets: targets.to_vec(),
                probs,
                count,
            },
        ))
    }

    /// Reverse-mode sweep from a scalar. Leaf gradients accumulate across calls;
    /// interior gradients are recomputed.
    pub fn backward(&self) -> Result<()> {
        if self.shape() != (1, 1) {
            return Err(Error::Contract(format!(
                "backward needs a scalar loss, got {:?}",
                self.shape()
            )));
        }
        if !self.requires_grad() {
            return Ok(());
        }
        let order = self.topo_order();
        for t in &order {
            if !t.is_leaf() {
                t.zero_grad();
            }
        }
        self.accumulate(&[1.0]);
        for t in order.iter().rev() {
            if t.is_leaf() {
                continue;
            }
            let g = match t.grad() {
                Some(g) => g,
                None => continue,
            };
            t.propagate(&g);
        }
        Ok(())
    }

    /// Nodes requiring grad, parents before children.
    fn topo_order(&self) -> Vec<Tensor> {
        let mut order = Vec::new();
        let mut seen: HashSet<*const Node> = HashSet::new();
        let mut stack: Vec<(Tensor, bool)> = vec![(self.clone(), false)];
        while let Some((t, expanded)) = stack.pop() {
            if expanded {
                order.push(t);
                continue;
            }
            if !seen.insert(Arc::as_ptr(&t.0)) {
                continue;
            }
            stack.push((t.clone(), true));
            for p in t.0.op.parents().into_iter().rev() {
                if p.requires_grad() && !seen.contains(&Arc::as_ptr(&p.0)) {
                    stack.push((p.clone(), false));
                }
            }
        }
        order
    }

    fn propagate(&self, g: &[f64]) {
        let (m, n) = self.shape();
        match &self.0.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let k = a.cols();
                if a.requires_grad() {
                    let mut da = vec![0.0; m * k];
                    kernels::gemm(m, n, k, g, false, b.data(), true, &mut da, 0.0);
                    a.accumulate(&da);
                }
                if b.requires_grad() {
                    let mut db = vec![0.0; k * n];
                    kernels::gemm(k, m, n, a.data(), true, g, false, &mut db, 0.0);
                    b.accumulate(&db);
                }
            }
            Op::Transpose(a) => {
                let mut da = vec![0.0; m * n];
                kernels::transpose_into(m, n, g, &mut da);
                a.accumulate(&da);
            }
            Op::Add(a, b) => {
                if a.requires_grad() {
                    a.accumulate(g);
                }
                if b.requires_grad() {
                    b.accumulate(g);
                }
            }
            Op::Sub(a, b) => {
                if a.requires_grad() {
                    a.accumulate(g);
                }
                if b.requires_grad() {
                    let neg: Vec<f64> = g.iter().map(|x| -x).collect();
                    b.accumulate(&neg);
                }
            }
            Op::Mul(a, b) => {
                if a.requires_grad() {
                    let da: Vec<f64> = g.iter().zip(b.data()).map(|(g, y)| g * y).collect();
                    a.accumulate(&da);
                }
                if b.requires_grad() {
                    let db: Vec<f64> = g.iter().zip(a.data()).map(|(g, x)| g * x).collect();
                    b.accumulate(&db);
                }
            }
            Op::Scale(a, f) => {
                let da: Vec<f64> = g.iter().map(|x| x * f).collect();
                a.accumulate(&da);
            }
            Op::RepeatRows(a) => {
                let mut da = vec![0.0; n];
                for row in g.chunks(n) {
                    for (d, x) in da.iter_mut().zip(row) {
                        *d += x;
                    }
                }
                a.accumulate(&da);
            }
            Op::Softmax(a) => {
                let y = self.data();
                let mut da = vec![0.0; m * n];
                for i in 0..m {
                    let yr = &y[i * n..(i + 1) * n];
                    let gr = &g[i * n..(i + 1) * n];
                    let dot: f64 = yr.iter().zip(gr).map(|(y, g)| y * g).sum();
                    for j in 0..n {
                        da[i * n + j] = yr[j] * (gr[j] - dot);
                    }
                }
                a.accumulate(&da);
            }
            Op::Gelu(a) => {
                let da: Vec<f64> = a
                    .data()
                    .iter()
                    .zip(g)
                    .map(|(&x, &g)| {
                        let t = (GELU_C * (x + GELU_K * x * x * x)).tanh();
                        let dt = (1.0 - t * t) * GELU_C * (1.0 + 3.0 * GELU_K * x * x);
                        g * (0.5 * (1.0 + t) + 0.5 * x * dt)
                    })
                    .collect();
                a.accumulate(&da);
            }
            Op::RmsNorm { input, inv_rms } => {
                let x = input.data();
                let mut dx = vec![0.0; m * n];
                for i in 0..m {
                    let r = inv_rms[i];
                    let xr = &x[i * n..(i + 1) * n];
                    let gr = &g[i * n..(i + 1) * n];
                    let dot: f64 = xr.iter().zip(gr).map(|(x, g)| x * g).sum();
                    let c = r * r * r * dot / n as f64;
                    for j in 0..n {
                        dx[i * n + j] = r * gr[j] - c * xr[j];
                    }
                }
                input.accumulate(&dx);
            }
            Op::ConcatRows(parts) => {
                let mut offset = 0;
                for p in parts {
                    let len = p.rows() * n;
                    if p.requires_grad() {
                        p.accumulate(&g[offset..offset + len]);
                    }
                    offset += len;
                }
            }
            Op::SliceRows { input, start } => {
                let mut dx = vec![0.0; input.rows() * n];
                dx[start * n..(start + m) * n].copy_from_slice(g);
                input.accumulate(&dx);
            }
            Op::GatherRows { table, indices } => {
                let mut dt = vec![0.0; table.rows() * n];
                for (i, &ix) in indices.iter().enumerate() {
                    for j in 0..n {
                        dt[ix * n + j] += g[i * n + j];
                    }
                }
                table.accumulate(&dt);
            }
            Op::Sum(a) => {
                a.accumulate(&vec![g[0]; a.rows() * a.cols()]);
            }
            Op::CrossEntropy { logits, targets, probs, count } => {
                let c = logits.cols();
                let scale = g[0] / *count as f64;
                let mut dl = vec![0.0; logits.rows() * c];
                for (i, t) in targets.iter().enumerate() {
                    let Some(t) = *t else { continue };
                    for j in 0..c {
                        dl[i * c + j] = probs[i * c + j] * scale;
                    }
                    dl[i * c + t] -= scale;
                }
                logits.accumulate(&dl);
            }
        }
    }
}
