//! Two-layer GCN: `logits = P · relu(P · X · W1) · W2`.

use std::sync::Arc;

use rand::Rng;

use crate::error::{Error, Result};
use crate::graph::{LabelSplit, SplitKind};
use crate::sparse::CsrMatrix;
use crate::tensor::{Matrix, Parameter, Tape, Var};

#[derive(Clone, Debug)]
pub struct GcnParams {
    pub w1: Parameter,
    pub w2: Parameter,
}

/// Tape handles for a bound [`GcnParams`].
#[derive(Clone, Copy, Debug)]
pub struct GcnVars {
    pub w1: Var,
    pub w2: Var,
}

fn glorot(name: &str, fan_in: usize, fan_out: usize, rng: &mut impl Rng) -> Parameter {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let value = Matrix::from_fn(fan_in, fan_out, |_, _| rng.random_range(-limit..=limit));
    Parameter::new(name, value)
}

impl GcnParams {
    /// Glorot-uniform initialization.
    pub fn init(in_dim: usize, hidden: usize, out_dim: usize, rng: &mut impl Rng) -> Self {
        GcnParams {
            w1: glorot("w1", in_dim, hidden, rng),
            w2: glorot("w2", hidden, out_dim, rng),
        }
    }

    pub fn zeros(in_dim: usize, hidden: usize, out_dim: usize) -> Self {
        GcnParams {
            w1: Parameter::new("w1", Matrix::zeros(in_dim, hidden)),
            w2: Parameter::new("w2", Matrix::zeros(hidden, out_dim)),
        }
    }

    pub fn in_dim(&self) -> usize {
        self.w1.value.rows()
    }

    pub fn hidden(&self) -> usize {
        self.w1.value.cols()
    }

    pub fn out_dim(&self) -> usize {
        self.w2.value.cols()
    }

    pub fn bind(&self, tape: &mut Tape) -> GcnVars {
        GcnVars {
            w1: tape.leaf(self.w1.value.clone(), true),
            w2: tape.leaf(self.w2.value.clone(), true),
        }
    }

    /// Adds the tape gradients of `vars` into the parameter accumulators.
    pub fn absorb_grads(&mut self, tape: &Tape, vars: GcnVars) -> Result<()> {
        for (param, var) in [(&mut self.w1, vars.w1), (&mut self.w2, vars.w2)] {
            let g = tape
                .grad(var)
                .ok_or_else(|| Error::contract(format!("no gradient reached `{}`", param.name)))?;
            param.accumulate_grad(g)?;
        }
        Ok(())
    }

    pub fn params_mut(&mut self) -> [&mut Parameter; 2] {
        [&mut self.w1, &mut self.w2]
    }

    pub fn zero_grad(&mut self) {
        self.w1.zero_grad();
        self.w2.zero_grad();
    }
}

/// Records the forward pass on `tape` and returns the logits node.
pub fn gcn_forward(tape: &mut Tape, vars: GcnVars, x: Var, prop: &Arc<CsrMatrix>) -> Result<Var> {
    let n = tape.value(x).rows();
    if prop.rows() != n || prop.cols() != n {
        return Err(Error::shape(
            "gcn_forward",
            format!("propagation {}x{} for {n} nodes", prop.rows(), prop.cols()),
        ));
    }
    let xw = tape.matmul(x, vars.w1)?;
    let h = tape.spmm(prop, xw)?;
    let h = tape.relu(h)?;
    let hw = tape.matmul(h, vars.w2)?;
    tape.spmm(prop, hw)
}

/// Forward pass without gradient tracking.
pub fn predict_logits(params: &GcnParams, x: &Matrix, prop: &Arc<CsrMatrix>) -> Result<Matrix> {
    let mut tape = Tape::new();
    let vars = GcnVars {
        w1: tape.leaf(params.w1.value.clone(), false),
        w2: tape.leaf(params.w2.value.clone(), false),
    };
    let x = tape.leaf(x.clone(), false);
    let logits = gcn_forward(&mut tape, vars, x, prop)?;
    Ok(tape.value(logits).clone())
}

/// `−Σ_{i ∈ train} ln softmax(logits)_{i, y_i}`, summed, not averaged.
pub fn classification_loss(tape: &mut Tape, logits: Var, labels: &LabelSplit) -> Result<Var> {
    let train = labels.mask(SplitKind::Train);
    if train.is_empty() {
        return Err(Error::contract("classification loss needs a non-empty train set"));
    }
    let (rows, cols) = tape.value(logits).shape();
    if rows != labels.num_nodes() || cols != labels.num_classes() {
        return Err(Error::shape(
            "classification_loss",
            format!(
                "logits {rows}x{cols} for {} nodes and {} classes",
                labels.num_nodes(),
                labels.num_classes()
            ),
        ));
    }
    let picks = train
        .iter()
        .map(|&i| (i, labels.label(i).expect("split nodes are labelled")))
        .collect();
    let probs = tape.row_softmax(logits)?;
    tape.neg_log_pick(probs, picks, 1.0)
}

/// Fraction of nodes in `which` whose arg-max logit equals the label.
pub fn accuracy(logits: &Matrix, labels: &LabelSplit, which: SplitKind) -> Result<f64> {
    let nodes = labels.mask(which);
    if nodes.is_empty() {
        return Err(Error::contract(format!("{which} mask is empty")));
    }
    let pred = logits.argmax_rows();
    let correct = nodes
        .iter()
        .filter(|&&i| labels.label(i) == Some(pred[i]))
        .count();
    Ok(correct as f64 / nodes.len() as f64)
}
