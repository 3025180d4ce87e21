use std::sync::Arc;

use super::Matrix;
use crate::error::{Error, Result};
use crate::sparse::CsrMatrix;

/// Lower clamp applied to probabilities before taking a logarithm.
pub const PROB_FLOOR: f64 = 1e-12;

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    SpMM(Arc<CsrMatrix>, Var),
    Add(Var, Var),
    AddRow(Var, Var),
    Mul(Var, Var),
    Relu(Var),
    Sigmoid(Var),
    RowSoftmax(Var),
    Sum(Var),
    /// `-scale * Σ ln(max(x[r, c], PROB_FLOOR))` over the listed positions.
    NegLogPick {
        input: Var,
        picks: Vec<(usize, usize)>,
        scale: f64,
    },
}

#[derive(Debug)]
struct Node {
    value: Matrix,
    grad: Option<Matrix>,
    requires_grad: bool,
    op: Op,
}

/// Linear record of executed operations. Values are computed eagerly as ops
/// are recorded; [`Tape::backward`] walks the record in reverse.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
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

    pub fn leaf(&mut self, value: Matrix, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            grad: None,
            requires_grad,
            op: Op::Leaf,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Matrix {
        &self.nodes[v.0].value
    }

    pub fn grad(&self, v: Var) -> Option<&Matrix> {
        self.nodes[v.0].grad.as_ref()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Scalar value of a 1x1 node.
    pub fn scalar(&self, v: Var) -> Result<f64> {
        let m = self.value(v);
        if m.shape() != (1, 1) {
            return Err(Error::shape("scalar", format!("{:?} is not 1x1", m.shape())));
        }
        Ok(m.get(0, 0))
    }

    pub fn zero_grad(&mut self) {
        for node in &mut self.nodes {
            node.grad = None;
        }
    }

    fn push(&mut self, op_name: &'static str, value: Matrix, op: Op, inputs: &[Var]) -> Result<Var> {
        if !value.is_finite() {
            return Err(Error::NonFinite(op_name));
        }
        let requires_grad = inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        self.nodes.push(Node {
            value,
            grad: None,
            requires_grad,
            op,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).matmul(self.value(b))?;
        self.push("matmul", value, Op::MatMul(a, b), &[a, b])
    }

    pub fn spmm(&mut self, sparse: &Arc<CsrMatrix>, dense: Var) -> Result<Var> {
        let value = sparse.mul_dense(self.value(dense))?;
        self.push("spmm", value, Op::SpMM(Arc::clone(sparse), dense), &[dense])
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).zip_map(self.value(b), |x, y| x + y)?;
        self.push("add", value, Op::Add(a, b), &[a, b])
    }

    /// Adds a `1 x cols` row vector to every row of `a`.
    pub fn add_row(&mut self, a: Var, bias: Var) -> Result<Var> {
        let (rows, cols) = self.value(a).shape();
        let b = self.value(bias);
        if b.shape() != (1, cols) {
            return Err(Error::shape(
                "add_row",
                format!("bias {:?} for a {rows}x{cols} input", b.shape()),
            ));
        }
        let value = Matrix::from_fn(rows, cols, |r, c| self.value(a).get(r, c) + b.get(0, c));
        self.push("add_row", value, Op::AddRow(a, bias), &[a, bias])
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).zip_map(self.value(b), |x, y| x * y)?;
        self.push("mul", value, Op::Mul(a, b), &[a, b])
    }

    pub fn relu(&mut self, a: Var) -> Result<Var> {
        let value = self.value(a).map(|x| x.max(0.0));
        self.push("relu", value, Op::Relu(a), &[a])
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var> {
        let value = self.value(a).map(|x| 1.0 / (1.0 + (-x).exp()));
        self.push("sigmoid", value, Op::Sigmoid(a), &[a])
    }

    pub fn row_softmax(&mut self, a: Var) -> Result<Var> {
        let value = self.value(a).row_softmax();
        self.push("row_softmax", value, Op::RowSoftmax(a), &[a])
    }

    pub fn sum(&mut self, a: Var) -> Result<Var> {
        let value = Matrix::filled(1, 1, self.value(a).sum());
        self.push("sum", value, Op::Sum(a), &[a])
    }

    /// `-scale * Σ ln(max(x[r, c], PROB_FLOOR))` over `picks`, as a 1x1 node.
    pub fn neg_log_pick(&mut self, input: Var, picks: Vec<(usize, usize)>, scale: f64) -> Result<Var> {
        let x = self.value(input);
        let (rows, cols) = x.shape();
        if let Some(&(r, c)) = picks.iter().find(|&&(r, c)| r >= rows || c >= cols) {
            return Err(Error::shape(
                "neg_log_pick",
                format!("position ({r}, {c}) outside {rows}x{cols}"),
            ));
        }
        let total: f64 = picks.iter().map(|&(r, c)| x.get(r, c).max(PROB_FLOOR).ln()).sum();
        let value = Matrix::filled(1, 1, -scale * total);
        self.push(
            "neg_log_pick",
            value,
            Op::NegLogPick {
                input,
                picks,
                scale,
            },
            &[input],
        )
    }

    /// Reverse pass from a scalar `loss`. Gradients are accumulated into every
    /// node that requires them; call [`Tape::zero_grad`] to reset.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.value(loss).shape() != (1, 1) {
            return Err(Error::contract(format!(
                "backward called on a non-scalar of shape {:?}",
                self.value(loss).shape()
            )));
        }
        if !self.requires_grad(loss) {
            return Ok(());
        }
        let mut pending: Vec<Option<Matrix>> = (0..=loss.0).map(|_| None).collect();
        pending[loss.0] = Some(Matrix::filled(1, 1, 1.0));

        for idx in (0..=loss.0).rev() {
            let Some(upstream) = pending[idx].take() else {
                continue;
            };
            let contributions = self.local_grads(idx, &upstream)?;
            for (var, g) in contributions {
                if !self.nodes[var.0].requires_grad {
                    continue;
                }
                match &mut pending[var.0] {
                    Some(acc) => acc.add_assign(&g)?,
                    slot @ None => *slot = Some(g),
                }
            }
            let node = &mut self.nodes[idx];
            match &mut node.grad {
                Some(acc) => acc.add_assign(&upstream)?,
                slot @ None => *slot = Some(upstream),
            }
        }
        Ok(())
    }

    fn local_grads(&self, idx: usize, up: &Matrix) -> Result<Vec<(Var, Matrix)>> {
        let node = &self.nodes[idx];
        let wants = |v: &Var| self.nodes[v.0].requires_grad;
        let mut out = Vec::with_capacity(2);
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                if wants(a) {
                    out.push((*a, up.matmul_transpose(self.value(*b))?));
                }
                if wants(b) {
                    out.push((*b, self.value(*a).transpose_matmul(up)?));
                }
            }
            Op::SpMM(sparse, d) => {
                out.push((*d, sparse.transpose_mul_dense(up)?));
            }
            Op::Add(a, b) => {
                if wants(a) {
                    out.push((*a, up.clone()));
                }
                if wants(b) {
                    out.push((*b, up.clone()));
                }
            }
            Op::AddRow(a, bias) => {
                if wants(a) {
                    out.push((*a, up.clone()));
                }
                if wants(bias) {
                    let mut g = Matrix::zeros(1, up.cols());
                    for r in 0..up.rows() {
                        for (acc, v) in g.row_mut(0).iter_mut().zip(up.row(r)) {
                            *acc += v;
                        }
                    }
                    out.push((*bias, g));
                }
            }
            Op::Mul(a, b) => {
                if wants(a) {
                    out.push((*a, up.zip_map(self.value(*b), |g, y| g * y)?));
                }
                if wants(b) {
                    out.push((*b, up.zip_map(self.value(*a), |g, x| g * x)?));
                }
            }
            Op::Relu(a) => {
                out.push((
                    *a,
                    up.zip_map(&node.value, |g, y| if y > 0.0 { g } else { 0.0 })?,
                ));
            }
            Op::Sigmoid(a) => {
                out.push((*a, up.zip_map(&node.value, |g, s| g * s * (1.0 - s))?));
            }
            Op::RowSoftmax(a) => {
                let s = &node.value;
                let mut g = Matrix::zeros(s.rows(), s.cols());
                for r in 0..s.rows() {
                    let dot: f64 = s.row(r).iter().zip(up.row(r)).map(|(p, u)| p * u).sum();
                    for ((o, &p), &u) in g.row_mut(r).iter_mut().zip(s.row(r)).zip(up.row(r)) {
                        *o = p * (u - dot);
                    }
                }
                out.push((*a, g));
            }
            Op::Sum(a) => {
                let (rows, cols) = self.value(*a).shape();
                out.push((*a, Matrix::filled(rows, cols, up.get(0, 0))));
            }
            Op::NegLogPick {
                input,
                picks,
                scale,
            } => {
                let x = self.value(*input);
                let mut g = Matrix::zeros(x.rows(), x.cols());
                let u = up.get(0, 0);
                for &(r, c) in picks {
                    let p = x.get(r, c);
                    if p > PROB_FLOOR {
                        let cur = g.get(r, c);
                        g.set(r, c, cur - u * scale / p);
                    }
                }
                out.push((*input, g));
            }
        }
        Ok(out)
    }
}
