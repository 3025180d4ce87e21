#![allow(dead_code)]

use std::collections::BTreeSet;
use std::sync::Arc;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use adedgedrop::adversary::{line_graph_loss, predict_edges, EdgePredictor};
use adedgedrop::backbone::{classification_loss, gcn_forward, GcnParams};
use adedgedrop::linegraph::build_line_graph;
use adedgedrop::sparse::CsrMatrix;
use adedgedrop::supervision::SupervisionSignal;
use adedgedrop::tensor::Tape;
use adedgedrop::{Graph, LabelSplit, Matrix};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Uniform simple graph with exactly `m` edges.
pub fn random_graph(n: usize, m: usize, seed: u64) -> Graph {
    let mut r = rng(seed);
    let pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect();
    let chosen = index::sample(&mut r, pairs.len(), m);
    Graph::from_edges(n, chosen.into_iter().map(|k| pairs[k])).unwrap().0
}

/// G(n, p) graph.
pub fn erdos_renyi(n: usize, p: f64, seed: u64) -> Graph {
    let mut r = rng(seed);
    let mut edges = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            if r.random::<f64>() < p {
                edges.push((i, j));
            }
        }
    }
    Graph::from_edges(n, edges).unwrap().0
}

pub fn random_matrix(rows: usize, cols: usize, seed: u64) -> Matrix {
    let mut r = rng(seed);
    Matrix::from_fn(rows, cols, |_, _| r.random_range(-1.0..1.0))
}

#[derive(Debug)]
pub struct GradMismatch {
    pub param: String,
    pub index: (usize, usize),
    pub analytic: f64,
    pub numeric: f64,
}

/// Worst relative error over all entries, with an absolute floor below
/// which differences are ignored.
pub struct GradReport {
    pub checked: usize,
    pub worst_rel: f64,
    pub failures: Vec<GradMismatch>,
}

pub const FD_STEP: f64 = 1e-5;
pub const FD_REL_TOL: f64 = 1e-4;
pub const FD_ABS_FLOOR: f64 = 1e-6;

/// Central differences of `loss` with respect to each matrix in `params`,
/// compared with `analytic`.
pub fn check_gradients(
    names: &[&str],
    params: &[Matrix],
    analytic: &[Matrix],
    loss: impl Fn(&[Matrix]) -> f64,
) -> GradReport {
    let mut report = GradReport {
        checked: 0,
        worst_rel: 0.0,
        failures: Vec::new(),
    };
    for (k, p) in params.iter().enumerate() {
        for r in 0..p.rows() {
            for c in 0..p.cols() {
                let mut plus = params.to_vec();
                let mut minus = params.to_vec();
                plus[k].set(r, c, p.get(r, c) + FD_STEP);
                minus[k].set(r, c, p.get(r, c) - FD_STEP);
                let numeric = (loss(&plus) - loss(&minus)) / (2.0 * FD_STEP);
                let a = analytic[k].get(r, c);
                let diff = (a - numeric).abs();
                let scale = a.abs().max(numeric.abs());
                report.checked += 1;
                // Entries that are zero up to rounding are compared absolutely.
                if scale <= FD_ABS_FLOOR {
                    if diff > FD_ABS_FLOOR {
                        report.failures.push(GradMismatch {
                            param: names[k].to_string(),
                            index: (r, c),
                            analytic: a,
                            numeric,
                        });
                    }
                    continue;
                }
                let rel = diff / scale;
                report.worst_rel = report.worst_rel.max(rel);
                if rel > FD_REL_TOL {
                    report.failures.push(GradMismatch {
                        param: names[k].to_string(),
                        index: (r, c),
                        analytic: a,
                        numeric,
                    });
                }
            }
        }
    }
    report
}

/// Backbone plus classification loss on a seeded 10-node, 20-edge graph.
pub fn backbone_gradient_report(seed: u64) -> GradReport {
    let g = random_graph(10, 20, seed);
    let prop = Arc::new(g.normalized());
    let x = random_matrix(10, 5, seed + 1);
    let labels = LabelSplit::new(
        (0..10).map(|i| Some(i % 3)).collect(),
        3,
        vec![0, 1, 2, 3, 4, 5],
        vec![6, 7],
        vec![8, 9],
    )
    .unwrap();
    let params = GcnParams::init(5, 4, 3, &mut rng(seed + 2));

    let loss_of = |w: &[Matrix], want_grad: bool| {
        let mut tape = Tape::new();
        let w1 = tape.leaf(w[0].clone(), want_grad);
        let w2 = tape.leaf(w[1].clone(), want_grad);
        let xv = tape.leaf(x.clone(), false);
        let vars = adedgedrop::backbone::GcnVars { w1, w2 };
        let logits = gcn_forward(&mut tape, vars, xv, &prop).unwrap();
        let loss = classification_loss(&mut tape, logits, &labels).unwrap();
        let value = tape.scalar(loss).unwrap();
        if want_grad {
            tape.backward(loss).unwrap();
            (value, vec![tape.grad(w1).unwrap().clone(), tape.grad(w2).unwrap().clone()])
        } else {
            (value, vec![])
        }
    };
    let w = vec![params.w1.value.clone(), params.w2.value.clone()];
    let (_, analytic) = loss_of(&w, true);
    check_gradients(&["w1", "w2"], &w, &analytic, |p| loss_of(p, false).0)
}

/// Edge predictor plus line-graph loss on the line graph of a seeded
/// 10-node, 20-edge graph; checks the weights and the perturbation.
pub fn predictor_gradient_report(seed: u64) -> GradReport {
    let g = random_graph(10, 20, seed);
    let lg = build_line_graph(&g);
    let prop: Arc<CsrMatrix> = lg.propagation();
    let classes = 3;
    let x_lg = random_matrix(lg.num_nodes(), 2 * classes, seed + 3);
    let predictor = EdgePredictor::init(classes, 4, &mut rng(seed + 4));
    let mut r = rng(seed + 5);
    let targets: Vec<bool> = (0..lg.num_nodes()).map(|_| r.random::<f64>() < 0.6).collect();
    let kappa = targets.iter().filter(|&&t| t).count();
    assert!(kappa > 0);
    let s = SupervisionSignal { targets, kappa };
    let delta = Matrix::from_fn(lg.num_nodes(), 2, |_, _| r.random_range(-0.05..0.05));

    let loss_of = |w: &[Matrix], want_grad: bool| {
        let mut tape = Tape::new();
        let w1 = tape.leaf(w[0].clone(), want_grad);
        let w2 = tape.leaf(w[1].clone(), want_grad);
        let d = tape.leaf(w[2].clone(), want_grad);
        let xv = tape.leaf(x_lg.clone(), false);
        let vars = adedgedrop::backbone::GcnVars { w1, w2 };
        let z = predict_edges(&mut tape, vars, xv, &prop, d).unwrap();
        let loss = line_graph_loss(&mut tape, z, &s).unwrap();
        let value = tape.scalar(loss).unwrap();
        if want_grad {
            tape.backward(loss).unwrap();
            let grads = [w1, w2, d].map(|v| tape.grad(v).unwrap().clone());
            (value, grads.to_vec())
        } else {
            (value, vec![])
        }
    };
    let w = vec![
        predictor.params.w1.value.clone(),
        predictor.params.w2.value.clone(),
        delta,
    ];
    let (_, analytic) = loss_of(&w, true);
    check_gradients(&["w1", "w2", "delta"], &w, &analytic, |p| loss_of(p, false).0)
}

/// Quadratic reference: every pair of edges sharing an endpoint.
pub fn brute_force_line_graph(g: &Graph) -> BTreeSet<(usize, usize)> {
    let e = g.edges();
    let mut out = BTreeSet::new();
    for p in 0..e.len() {
        for q in p + 1..e.len() {
            let (a, b) = e[p];
            let (c, d) = e[q];
            if a == c || a == d || b == c || b == d {
                out.insert((p, q));
            }
        }
    }
    out
}

pub fn built_line_graph(g: &Graph) -> BTreeSet<(usize, usize)> {
    let lg = build_line_graph(g);
    let adj = lg.adjacency();
    let mut out = BTreeSet::new();
    for p in 0..lg.num_nodes() {
        for &q in adj.row_indices(p) {
            assert!(adj.contains(q, p), "line graph not symmetric at ({p}, {q})");
            assert_ne!(p, q, "self-loop in line graph");
            out.insert((p.min(q), p.max(q)));
        }
    }
    out
}
