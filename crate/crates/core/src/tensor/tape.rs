use super::Tensor;
use crate::error::{Error, Result};

/// Handle to a node recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Transpose(Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Div(Var, Var),
    Scale(Var, f64),
    AddScalar(Var),
    Exp(Var),
    Log(Var),
    Sum(Var),
    Mean(Var),
    LeakyRelu(Var, f64),
    LogSoftmax(Var),
    Pick(Var, Vec<usize>),
    SliceRows(Var, usize),
    SliceCols(Var, usize),
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
    grad: Option<Tensor>,
}

/// Records operations on matrices and replays them backward.
///
/// Nodes are appended in evaluation order, so the node list is already a
/// topological order. Gradients accumulate additively when a node feeds
/// several consumers.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    backward_done: bool,
}

/// How the right operand of an elementwise op broadcasts against the left.
#[derive(Debug, Clone, Copy, PartialEq)]
enum Broadcast {
    Same,
    Row,
    Col,
    Scalar,
}

fn broadcast_kind(op: &'static str, a: (usize, usize), b: (usize, usize)) -> Result<Broadcast> {
    if a == b {
        Ok(Broadcast::Same)
    } else if b == (1, 1) {
        Ok(Broadcast::Scalar)
    } else if b == (1, a.1) {
        Ok(Broadcast::Row)
    } else if b == (a.0, 1) {
        Ok(Broadcast::Col)
    } else {
        Err(Error::shape(op, a, b))
    }
}

fn b_index(kind: Broadcast, cols: usize, i: usize) -> usize {
    match kind {
        Broadcast::Same => i,
        Broadcast::Row => i % cols,
        Broadcast::Col => i / cols,
        Broadcast::Scalar => 0,
    }
}

fn zip_broadcast(a: &Tensor, b: &Tensor, kind: Broadcast, f: impl Fn(f64, f64) -> f64) -> Tensor {
    let cols = a.cols();
    let data = a
        .data()
        .iter()
        .enumerate()
        .map(|(i, &x)| f(x, b.data()[b_index(kind, cols, i)]))
        .collect();
    Tensor::new(a.rows(), a.cols(), data).expect("shape preserved")
}

/// Sums a full-shape gradient down to the broadcast operand's shape.
fn reduce_to(grad: &Tensor, kind: Broadcast, shape: (usize, usize)) -> Tensor {
    if kind == Broadcast::Same {
        return grad.clone();
    }
    let mut out = Tensor::zeros(shape.0, shape.1);
    let cols = grad.cols();
    for (i, &g) in grad.data().iter().enumerate() {
        out.data_mut()[b_index(kind, cols, i)] += g;
    }
    out
}

impl Tape {
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
            grad: None,
        });
        Var(self.nodes.len() - 1)
    }

    fn needs(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    /// Trainable leaf: receives a gradient on backward.
    pub fn param(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// Constant leaf: no gradient is tracked.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, false)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        self.nodes[v.0].value.shape()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Accumulated gradient, present after [`Tape::backward`] for nodes
    /// reachable from the loss that require gradients.
    pub fn grad(&self, v: Var) -> Option<&Tensor> {
        self.nodes[v.0].grad.as_ref()
    }

    /// Clears gradients so that `backward` may run again.
    pub fn reset(&mut self) {
        for n in &mut self.nodes {
            n.grad = None;
        }
        self.backward_done = false;
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).matmul(self.value(b))?;
        let rg = self.needs(&[a, b]);
        Ok(self.push(value, Op::MatMul(a, b), rg))
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let value = self.value(a).transpose();
        let rg = self.needs(&[a]);
        self.push(value, Op::Transpose(a), rg)
    }

    fn binary(
        &mut self,
        name: &'static str,
        a: Var,
        b: Var,
        f: impl Fn(f64, f64) -> f64,
        op: Op,
    ) -> Result<Var> {
        let kind = broadcast_kind(name, self.shape(a), self.shape(b))?;
        let value = zip_broadcast(self.value(a), self.value(b), kind, f);
        let rg = self.needs(&[a, b]);
        Ok(self.push(value, op, rg))
    }

    /// `a + b`; `b` may be a matching row vector, column vector or scalar.
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("add", a, b, |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("sub", a, b, |x, y| x - y, Op::Sub(a, b))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("mul", a, b, |x, y| x * y, Op::Mul(a, b))
    }

    pub fn div(&mut self, a: Var, b: Var) -> Result<Var> {
        if self.value(b).data().contains(&0.0) {
            return Err(Error::Domain("division by zero".into()));
        }
        self.binary("div", a, b, |x, y| x / y, Op::Div(a, b))
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let value = self.value(a).map(|v| v * s);
        let rg = self.needs(&[a]);
        self.push(value, Op::Scale(a, s), rg)
    }

    pub fn add_scalar(&mut self, a: Var, s: f64) -> Var {
        let value = self.value(a).map(|v| v + s);
        let rg = self.needs(&[a]);
        self.push(value, Op::AddScalar(a), rg)
    }

    pub fn exp(&mut self, a: Var) -> Var {
        let value = self.value(a).map(f64::exp);
        let rg = self.needs(&[a]);
        self.push(value, Op::Exp(a), rg)
    }

    pub fn log(&mut self, a: Var) -> Result<Var> {
        if let Some(v) = self.value(a).data().iter().find(|&&v| !(v > 0.0)) {
            return Err(Error::Domain(format!("log of non-positive value {v}")));
        }
        let value = self.value(a).map(f64::ln);
        let rg = self.needs(&[a]);
        Ok(self.push(value, Op::Log(a), rg))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let value = Tensor::scalar(self.value(a).data().iter().sum());
        let rg = self.needs(&[a]);
        self.push(value, Op::Sum(a), rg)
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let t = self.value(a);
        let value = Tensor::scalar(t.data().iter().sum::<f64>() / t.len() as f64);
        let rg = self.needs(&[a]);
        self.push(value, Op::Mean(a), rg)
    }

    /// `v` for `v >= 0`, `slope * v` otherwise. The derivative at exactly
    /// zero is taken from the positive branch.
    pub fn leaky_relu(&mut self, a: Var, slope: f64) -> Result<Var> {
        check_slope(slope)?;
        let value = self
            .value(a)
            .map(|v| if v >= 0.0 { v } else { slope * v });
        let rg = self.needs(&[a]);
        Ok(self.push(value, Op::LeakyRelu(a, slope), rg))
    }

    /// Row-wise log-softmax, stabilized by subtracting each row's maximum.
    pub fn log_softmax(&mut self, a: Var) -> Var {
        let t = self.value(a);
        let mut out = t.clone();
        for r in 0..t.rows() {
            let row = t.row_slice(r);
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
            for c in 0..t.cols() {
                out.set(r, c, row[c] - lse);
            }
        }
        let rg = self.needs(&[a]);
        self.push(out, Op::LogSoftmax(a), rg)
    }

    /// Picks column `indices[r]` from each row `r`, giving a column vector.
    pub fn pick(&mut self, a: Var, indices: &[usize]) -> Result<Var> {
        let t = self.value(a);
        if indices.len() != t.rows() {
            return Err(Error::shape("pick", t.shape(), (indices.len(), 1)));
        }
        let mut data = Vec::with_capacity(indices.len());
        for (r, &c) in indices.iter().enumerate() {
            if c >= t.cols() {
                return Err(Error::Domain(format!(
                    "index {c} out of range for {} columns",
                    t.cols()
                )));
            }
            data.push(t.get(r, c));
        }
        let value = Tensor::column(data)?;
        let rg = self.needs(&[a]);
        Ok(self.push(value, Op::Pick(a, indices.to_vec()), rg))
    }

    /// Rows `start..end`.
    pub fn slice_rows(&mut self, a: Var, start: usize, end: usize) -> Result<Var> {
        let t = self.value(a);
        if start >= end || end > t.rows() {
            return Err(Error::shape("slice_rows", t.shape(), (start, end)));
        }
        let data = t.data()[start * t.cols()..end * t.cols()].to_vec();
        let value = Tensor::new(end - start, t.cols(), data)?;
        let rg = self.needs(&[a]);
        Ok(self.push(value, Op::SliceRows(a, start), rg))
    }

    /// Columns `start..end`.
    pub fn slice_cols(&mut self, a: Var, start: usize, end: usize) -> Result<Var> {
        let t = self.value(a);
        if start >= end || end > t.cols() {
            return Err(Error::shape("slice_cols", t.shape(), (start, end)));
        }
        let mut data = Vec::with_capacity(t.rows() * (end - start));
        for r in 0..t.rows() {
            data.extend_from_slice(&t.row_slice(r)[start..end]);
        }
        let value = Tensor::new(t.rows(), end - start, data)?;
        let rg = self.needs(&[a]);
        Ok(self.push(value, Op::SliceCols(a, start), rg))
    }

    /// Propagates gradients from a scalar `loss` to every node that
    /// requires them. Fails if called twice without [`Tape::reset`].
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.backward_done {
            return Err(Error::State(
                "backward already ran on this tape; call reset() first".into(),
            ));
        }
        if self.shape(loss) != (1, 1) {
            let (r, c) = self.shape(loss);
            return Err(Error::Contract(format!(
                "backward needs a scalar loss, got {r}x{c}"
            )));
        }
        let n = loss.0 + 1;
        let mut grads: Vec<Option<Tensor>> = vec![None; n];
        grads[loss.0] = Some(Tensor::scalar(1.0));

        for i in (0..n).rev() {
            let Some(g) = grads[i].take() else { continue };
            if !self.nodes[i].requires_grad {
                continue;
            }
            let op = self.nodes[i].op.clone();
            self.propagate(i, &op, &g, &mut grads);
            self.nodes[i].grad = Some(g);
        }
        self.backward_done = true;
        Ok(())
    }

    fn propagate(&self, i: usize, op: &Op, g: &Tensor, grads: &mut [Option<Tensor>]) {
        let mut acc = |v: Var, delta: Tensor| {
            if !self.nodes[v.0].requires_grad {
                return;
            }
            match &mut grads[v.0] {
                Some(existing) => existing.add_assign(&delta),
                slot @ None => *slot = Some(delta),
            }
        };
        let val = |v: Var| &self.nodes[v.0].value;
        let out = &self.nodes[i].value;

        match op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                if self.nodes[a.0].requires_grad {
                    acc(*a, g.matmul(&val(*b).transpose()).expect("matmul grad"));
                }
                if self.nodes[b.0].requires_grad {
                    acc(*b, val(*a).transpose().matmul(g).expect("matmul grad"));
                }
            }
            Op::Transpose(a) => acc(*a, g.transpose()),
            Op::Add(a, b) | Op::Sub(a, b) => {
                let sign = if matches!(op, Op::Sub(..)) { -1.0 } else { 1.0 };
                let kind = broadcast_kind("add", val(*a).shape(), val(*b).shape())
                    .expect("checked on forward");
                acc(*a, g.clone());
                acc(*b, reduce_to(&g.map(|x| sign * x), kind, val(*b).shape()));
            }
            Op::Mul(a, b) => {
                let (ta, tb) = (val(*a), val(*b));
                let kind = broadcast_kind("mul", ta.shape(), tb.shape()).expect("checked");
                let cols = ta.cols();
                let ga: Vec<f64> = g
                    .data()
                    .iter()
                    .enumerate()
                    .map(|(k, &gv)| gv * tb.data()[b_index(kind, cols, k)])
                    .collect();
                acc(*a, Tensor::new(ta.rows(), ta.cols(), ga).expect("shape"));
                let gb_full = zip_broadcast(g, ta, Broadcast::Same, |gv, x| gv * x);
                acc(*b, reduce_to(&gb_full, kind, tb.shape()));
            }
            Op::Div(a, b) => {
                let (ta, tb) = (val(*a), val(*b));
                let kind = broadcast_kind("div", ta.shape(), tb.shape()).expect("checked");
                let cols = ta.cols();
                let mut ga = Vec::with_capacity(ta.len());
                let mut gb_full = Vec::with_capacity(ta.len());
                for (k, &gv) in g.data().iter().enumerate() {
                    let y = tb.data()[b_index(kind, cols, k)];
                    ga.push(gv / y);
                    gb_full.push(-gv * ta.data()[k] / (y * y));
                }
                acc(*a, Tensor::new(ta.rows(), ta.cols(), ga).expect("shape"));
                let gb_full = Tensor::new(ta.rows(), ta.cols(), gb_full).expect("shape");
                acc(*b, reduce_to(&gb_full, kind, tb.shape()));
            }
            Op::Scale(a, s) => acc(*a, g.map(|x| x * s)),
            Op::AddScalar(a) => acc(*a, g.clone()),
            Op::Exp(a) => acc(*a, zip_broadcast(g, out, Broadcast::Same, |gv, y| gv * y)),
            Op::Log(a) => acc(*a, zip_broadcast(g, val(*a), Broadcast::Same, |gv, x| gv / x)),
            Op::Sum(a) => {
                let (r, c) = val(*a).shape();
                acc(*a, Tensor::full(r, c, g.data()[0]));
            }
            Op::Mean(a) => {
                let (r, c) = val(*a).shape();
                acc(*a, Tensor::full(r, c, g.data()[0] / (r * c) as f64));
            }
            Op::LeakyRelu(a, slope) => {
                let s = *slope;
                acc(
                    *a,
                    zip_broadcast(g, val(*a), Broadcast::Same, |gv, x| {
                        if x >= 0.0 {
                            gv
                        } else {
                            gv * s
                        }
                    }),
                );
            }
            Op::LogSoftmax(a) => {
                let mut da = Tensor::zeros(out.rows(), out.cols());
                for r in 0..out.rows() {
                    let gsum: f64 = g.row_slice(r).iter().sum();
                    for c in 0..out.cols() {
                        da.set(r, c, g.get(r, c) - out.get(r, c).exp() * gsum);
                    }
                }
                acc(*a, da);
            }
            Op::Pick(a, indices) => {
                let (rows, cols) = val(*a).shape();
                let mut da = Tensor::zeros(rows, cols);
                for (r, &c) in indices.iter().enumerate() {
                    da.set(r, c, g.data()[r]);
                }
                acc(*a, da);
            }
            Op::SliceRows(a, start) => {
                let (rows, cols) = val(*a).shape();
                let mut da = Tensor::zeros(rows, cols);
                let off = start * cols;
                da.data_mut()[off..off + g.len()].copy_from_slice(g.data());
                acc(*a, da);
            }
            Op::SliceCols(a, start) => {
                let (rows, cols) = val(*a).shape();
                let mut da = Tensor::zeros(rows, cols);
                for r in 0..rows {
                    for c in 0..g.cols() {
                        da.set(r, start + c, g.get(r, c));
                    }
                }
                acc(*a, da);
            }
        }
    }
}

pub(crate) fn check_slope(slope: f64) -> Result<()> {
    if !(slope > 0.0 && slope < 1.0) {
        return Err(Error::Config(format!(
            "leaky relu slope must lie in (0, 1), got {slope}"
        )));
    }
    Ok(())
}
