//! Edge predictor on the line graph, its ℓ∞-bounded output perturbation, and
//! the mask it induces on the original adjacency.

use std::sync::Arc;

use rand::Rng;

use crate::backbone::{gcn_forward, GcnParams, GcnVars};
use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::sparse::CsrMatrix;
use crate::supervision::SupervisionSignal;
use crate::tensor::{Matrix, Tape, Var};

/// Column of the predictor output holding the keep logit.
pub const KEEP: usize = 0;
/// Column of the predictor output holding the drop logit.
pub const DROP: usize = 1;

/// GCN over line-graph features of width `2c` with a two-way keep/drop head.
#[derive(Clone, Debug)]
pub struct EdgePredictor {
    pub params: GcnParams,
}

impl EdgePredictor {
    pub fn init(classes: usize, hidden: usize, rng: &mut impl Rng) -> Self {
        EdgePredictor {
            params: GcnParams::init(2 * classes, hidden, 2, rng),
        }
    }
}

/// Additive offset on the predictor logits, kept inside the ℓ∞ ball of radius `epsilon`.
#[derive(Clone, Debug, PartialEq)]
pub struct Perturbation {
    pub values: Matrix,
    pub epsilon: f64,
}

impl Perturbation {
    pub fn linf(&self) -> f64 {
        self.values.max_abs()
    }
}

/// Entries drawn uniformly from `[−ε, ε]`.
pub fn init_perturbation(rows: usize, epsilon: f64, rng: &mut impl Rng) -> Result<Perturbation> {
    if !(epsilon >= 0.0 && epsilon.is_finite()) {
        return Err(Error::contract(format!("epsilon must be non-negative, got {epsilon}")));
    }
    let values = if epsilon == 0.0 {
        Matrix::zeros(rows, 2)
    } else {
        Matrix::from_fn(rows, 2, |_, _| rng.random_range(-epsilon..=epsilon))
    };
    Ok(Perturbation { values, epsilon })
}

/// Signed ascent step followed by projection onto the ε-ball:
/// `δ ← clip(δ + γ·sign(∇δ), −ε, ε)`, with `sign(0) = 0`.
pub fn pgd_step(delta: &Perturbation, grad: &Matrix, gamma: f64) -> Result<Perturbation> {
    let eps = delta.epsilon;
    let values = delta.values.zip_map(grad, |d, g| {
        let sign = if g > 0.0 {
            1.0
        } else if g < 0.0 {
            -1.0
        } else {
            0.0
        };
        (d + gamma * sign).clamp(-eps, eps)
    })?;
    Ok(Perturbation {
        values,
        epsilon: eps,
    })
}

/// `Z_lg = f_ω(X_lg, A_lg) + δ`, recorded on the tape.
pub fn predict_edges(
    tape: &mut Tape,
    omega: GcnVars,
    x_lg: Var,
    a_lg_prop: &Arc<CsrMatrix>,
    delta: Var,
) -> Result<Var> {
    let logits = gcn_forward(tape, omega, x_lg, a_lg_prop)?;
    if tape.value(logits).cols() != 2 {
        return Err(Error::shape(
            "predict_edges",
            format!("predictor emits {} columns, expected 2", tape.value(logits).cols()),
        ));
    }
    tape.add(logits, delta)
}

/// Keep-probability per line-graph node: the keep column of `softmax(Z_lg)`.
pub fn keep_probabilities(z_lg: &Matrix) -> Vec<f64> {
    z_lg.row_softmax().column(KEEP)
}

/// Per-edge keep decision over a graph's edge list.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EdgeMask {
    pub keep: Vec<bool>,
}

impl EdgeMask {
    pub fn all(len: usize) -> Self {
        EdgeMask {
            keep: vec![true; len],
        }
    }

    pub fn keep_count(&self) -> usize {
        self.keep.iter().filter(|&&k| k).count()
    }

    pub fn len(&self) -> usize {
        self.keep.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keep.is_empty()
    }
}

/// Keep edge `p` iff `keep_prob[p] >= mu`.
pub fn compute_mask(keep_prob: &[f64], mu: f64) -> Result<EdgeMask> {
    if !(0.0..=1.0).contains(&mu) {
        return Err(Error::contract(format!("mu {mu} outside [0, 1]")));
    }
    Ok(EdgeMask {
        keep: keep_prob.iter().map(|&p| p >= mu).collect(),
    })
}

/// Masked adjacency `C ⊙ A` together with where it came from.
#[derive(Clone, Debug)]
pub struct CorruptedAdjacency {
    pub graph: Graph,
    pub epoch: usize,
    pub step: usize,
}

impl CorruptedAdjacency {
    pub fn adjacency(&self) -> &CsrMatrix {
        self.graph.adjacency()
    }

    pub fn normalized(&self) -> Arc<CsrMatrix> {
        Arc::new(self.graph.normalized())
    }
}

/// Keeps both directed entries of edge `p` iff `mask.keep[p]`.
pub fn corrupt_adjacency(g: &Graph, mask: &EdgeMask) -> Result<CorruptedAdjacency> {
    Ok(CorruptedAdjacency {
        graph: g.edge_subgraph(&mask.keep)?,
        epoch: 0,
        step: 0,
    })
}

/// `−(1/κ) Σ_{p: S_p = 1} ln softmax(Z_lg)_{p, keep}`.
pub fn line_graph_loss(tape: &mut Tape, z_lg: Var, s: &SupervisionSignal) -> Result<Var> {
    if s.is_degenerate() {
        return Err(Error::contract("line-graph loss needs at least one positive edge"));
    }
    let rows = tape.value(z_lg).rows();
    if rows != s.targets.len() {
        return Err(Error::shape(
            "line_graph_loss",
            format!("{rows} predictor rows for {} targets", s.targets.len()),
        ));
    }
    let picks = s.positives().map(|p| (p, KEEP)).collect();
    let probs = tape.row_softmax(z_lg)?;
    tape.neg_log_pick(probs, picks, 1.0 / s.kappa as f64)
}
