//! Alternating PGD/SGD training of the edge predictor and the GCN backbone.
//!
//! Each epoch:
//! 1. draw a fresh perturbation δ;
//! 2. run `eta` signed-gradient ascent steps on δ against the line-graph
//!    loss, accumulating the predictor gradient at every step;
//! 3. threshold the keep-probabilities of the perturbed predictor into an
//!    edge mask and corrupt the adjacency;
//! 4. step the predictor with the mean accumulated gradient and the backbone
//!    with the classification loss on the corrupted graph;
//! 5. blend the backbone's node embeddings into the line-graph features;
//! 6. evaluate on the complete graph and checkpoint on validation accuracy.

use std::fmt;
use std::path::Path;
use std::str::FromStr;
use std::sync::Arc;
use std::time::Instant;

use rand::Rng as _;

use crate::adversary::{
    compute_mask, corrupt_adjacency, init_perturbation, keep_probabilities, line_graph_loss,
    pgd_step, predict_edges, CorruptedAdjacency, EdgeMask, EdgePredictor, Perturbation,
};
use crate::backbone::{accuracy, classification_loss, gcn_forward, predict_logits, GcnParams};
use crate::error::{Error, Result};
use crate::graph::{write_edges, Dataset, Graph, SplitKind};
use crate::linegraph::{build_line_graph, init_features, update_features, LineGraph, LineGraphFeatures};
use crate::metrics::MetricsRecord;
use crate::rng::{self, Rng};
use crate::sparse::CsrMatrix;
use crate::supervision::{build_supervision, gaussian_similarity, pre_drop, SupervisionSignal};
use crate::tensor::{AdamConfig, Matrix, Optimizer, Tape};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OptimizerKind {
    Adam,
    Sgd,
}

impl FromStr for OptimizerKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "adam" => Ok(OptimizerKind::Adam),
            "sgd" => Ok(OptimizerKind::Sgd),
            other => Err(format!("unknown optimizer `{other}`")),
        }
    }
}

impl fmt::Display for OptimizerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            OptimizerKind::Adam => "adam",
            OptimizerKind::Sgd => "sgd",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    /// Threshold on both the supervision similarity and the keep-probability.
    pub mu: f64,
    /// Weight of the previous line-graph features in the per-epoch blend.
    pub alpha: f64,
    /// PGD step size.
    pub gamma: f64,
    /// PGD steps per epoch.
    pub eta: usize,
    /// ℓ∞ radius of the perturbation.
    pub epsilon: f64,
    pub lr: f64,
    pub epochs: usize,
    /// Stop after this many epochs without a validation improvement.
    pub patience: usize,
    pub hidden: usize,
    pub seed: u64,
    /// Pre-drop threshold on edge similarity; 0 disables pre-dropping.
    pub p_pre: f64,
    /// Kernel bandwidth; median endpoint distance when absent.
    pub sigma: Option<f64>,
    /// `false` runs the ablation with ε = 0, γ = 0, η = 1.
    pub adversarial: bool,
    /// Uniform drop rate applied each epoch to edges removed by pre-dropping.
    pub random_drop_rate: f64,
    pub optimizer: OptimizerKind,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            mu: 0.6,
            alpha: 0.5,
            gamma: 0.1,
            eta: 5,
            epsilon: 0.05,
            lr: 0.01,
            epochs: 1000,
            patience: 200,
            hidden: 16,
            seed: 0,
            p_pre: 0.0,
            sigma: None,
            adversarial: true,
            random_drop_rate: 0.5,
            optimizer: OptimizerKind::Adam,
        }
    }
}

pub const CONFIG_KEYS: &[&str] = &[
    "mu",
    "alpha",
    "gamma",
    "eta",
    "epsilon",
    "lr",
    "epochs",
    "patience",
    "hidden",
    "seed",
    "p_pre",
    "sigma",
    "adversarial",
    "random_drop_rate",
    "optimizer",
];

fn parse_value<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| Error::config(format!("invalid value `{value}` for `{key}`")))
}

impl TrainConfig {
    /// Sets one field from its textual `key = value` form.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "mu" => self.mu = parse_value(key, value)?,
            "alpha" => self.alpha = parse_value(key, value)?,
            "gamma" => self.gamma = parse_value(key, value)?,
            "eta" => self.eta = parse_value(key, value)?,
            "epsilon" => self.epsilon = parse_value(key, value)?,
            "lr" => self.lr = parse_value(key, value)?,
            "epochs" => self.epochs = parse_value(key, value)?,
            "patience" => self.patience = parse_value(key, value)?,
            "hidden" => self.hidden = parse_value(key, value)?,
            "seed" => self.seed = parse_value(key, value)?,
            "p_pre" => self.p_pre = parse_value(key, value)?,
            "sigma" => {
                self.sigma = match value.trim() {
                    "" | "auto" | "median" => None,
                    v => Some(parse_value(key, v)?),
                }
            }
            "adversarial" => self.adversarial = parse_value(key, value)?,
            "random_drop_rate" => self.random_drop_rate = parse_value(key, value)?,
            "optimizer" => {
                self.optimizer = value.trim().parse().map_err(Error::config)?;
            }
            other => return Err(Error::config(format!("unknown training key `{other}`"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let unit = |name: &str, v: f64| {
            if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(Error::config(format!("{name} = {v} outside [0, 1]")))
            }
        };
        unit("mu", self.mu)?;
        unit("alpha", self.alpha)?;
        unit("p_pre", self.p_pre)?;
        unit("random_drop_rate", self.random_drop_rate)?;
        if self.eta < 1 {
            return Err(Error::config("eta must be at least 1"));
        }
        if !(self.epsilon >= 0.0 && self.epsilon.is_finite()) {
            return Err(Error::config(format!("epsilon = {} must be >= 0", self.epsilon)));
        }
        if self.adversarial && !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return Err(Error::config(format!("gamma = {} must be > 0", self.gamma)));
        }
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return Err(Error::config(format!("lr = {} must be >= 0", self.lr)));
        }
        if self.hidden == 0 {
            return Err(Error::config("hidden must be positive"));
        }
        if let Some(s) = self.sigma {
            if !(s > 0.0 && s.is_finite()) {
                return Err(Error::config(format!("sigma = {s} must be > 0")));
            }
        }
        Ok(())
    }

    /// `(epsilon, gamma, eta)` actually used by the loop.
    pub fn pgd_schedule(&self) -> (f64, f64, usize) {
        if self.adversarial {
            (self.epsilon, self.gamma, self.eta)
        } else {
            (0.0, 0.0, 1)
        }
    }

    pub fn optimizer(&self) -> Optimizer {
        match self.optimizer {
            OptimizerKind::Adam => Optimizer::Adam(AdamConfig::with_lr(self.lr)),
            OptimizerKind::Sgd => Optimizer::Sgd { lr: self.lr },
        }
    }

    /// `key = value` lines in [`CONFIG_KEYS`] order.
    pub fn echo(&self) -> String {
        let mut out = String::new();
        for key in CONFIG_KEYS {
            let value = match *key {
                "mu" => self.mu.to_string(),
                "alpha" => self.alpha.to_string(),
                "gamma" => self.gamma.to_string(),
                "eta" => self.eta.to_string(),
                "epsilon" => self.epsilon.to_string(),
                "lr" => self.lr.to_string(),
                "epochs" => self.epochs.to_string(),
                "patience" => self.patience.to_string(),
                "hidden" => self.hidden.to_string(),
                "seed" => self.seed.to_string(),
                "p_pre" => self.p_pre.to_string(),
                "sigma" => self.sigma.map_or_else(|| "median".to_string(), |s| s.to_string()),
                "adversarial" => self.adversarial.to_string(),
                "random_drop_rate" => self.random_drop_rate.to_string(),
                "optimizer" => self.optimizer.to_string(),
                _ => unreachable!(),
            };
            out.push_str(&format!("{key} = {value}\n"));
        }
        out
    }
}

/// Parameters and mask from the epoch with the best validation accuracy.
#[derive(Clone, Debug)]
pub struct Checkpoint {
    pub epoch: usize,
    pub val_acc: f64,
    pub test_acc: f64,
    pub theta: GcnParams,
    pub omega: EdgePredictor,
    /// Keep decisions over the full edge list of the training graph.
    pub mask: EdgeMask,
}

#[derive(Clone, Debug)]
pub struct TrainState {
    pub theta: GcnParams,
    pub omega: EdgePredictor,
    pub delta: Perturbation,
    pub x_lg: LineGraphFeatures,
    pub epoch: usize,
    pub best: Option<Checkpoint>,
    pub sigma: f64,
    pub kappa: usize,
    /// Largest ‖δ‖∞ seen after any PGD step so far.
    pub max_delta_linf: f64,
}

impl TrainState {
    pub fn best_val_acc(&self) -> Option<f64> {
        self.best.as_ref().map(|b| b.val_acc)
    }

    pub fn best_mask(&self) -> Option<&EdgeMask> {
        self.best.as_ref().map(|b| &b.mask)
    }
}

/// Gradients computed for one epoch before any parameter moves.
#[derive(Clone, Debug)]
pub struct EpochGradients {
    /// Mean predictor gradient over the inner steps; `None` when skipped.
    pub omega: Option<[Matrix; 2]>,
    pub theta: [Matrix; 2],
    pub l_lg: Option<f64>,
    pub l_ce: f64,
    pub mask: EdgeMask,
    pub corrupted: CorruptedAdjacency,
    /// Backbone logits on the corrupted graph.
    pub logits: Matrix,
}

/// Training loop over one dataset.
pub struct Trainer<'a> {
    ds: &'a Dataset,
    cfg: TrainConfig,
    line_graph: LineGraph,
    lg_prop: Arc<CsrMatrix>,
    full_prop: Arc<CsrMatrix>,
    /// For each edge of the full graph, its line-graph node (None if pre-dropped).
    lg_node_of_edge: Vec<Option<usize>>,
    supervision: SupervisionSignal,
    x: Matrix,
    delta_rng: Rng,
    drop_rng: Rng,
    state: TrainState,
}

impl<'a> Trainer<'a> {
    pub fn new(ds: &'a Dataset, cfg: &TrainConfig) -> Result<Self> {
        cfg.validate()?;
        let classes = ds.labels.num_classes();
        if classes < 2 {
            return Err(Error::contract(format!("need at least 2 classes, found {classes}")));
        }
        let g = &ds.graph;
        let sim = gaussian_similarity(&ds.features, g.edges(), cfg.sigma)?;

        let (lg_graph, lg_sim) = if cfg.p_pre > 0.0 {
            let (mask, reduced) = pre_drop(g, &sim, cfg.p_pre)?;
            log::info!(
                "pre-drop kept {} of {} edges for the line graph",
                mask.kept(),
                g.num_edges()
            );
            let kept_sim = sim
                .values
                .iter()
                .zip(&mask.keep)
                .filter_map(|(&s, &k)| k.then_some(s))
                .collect();
            (
                reduced,
                crate::supervision::EdgeSimilarity {
                    values: kept_sim,
                    sigma: sim.sigma,
                },
            )
        } else {
            (g.clone(), sim.clone())
        };

        let line_graph = build_line_graph(&lg_graph);
        let lg_node_of_edge = g
            .edges()
            .iter()
            .map(|&(i, j)| line_graph.node_of_edge(i, j))
            .collect();
        let supervision = build_supervision(&lg_sim, cfg.mu)?;
        if supervision.is_degenerate() {
            log::warn!("no edge reaches similarity {}; predictor updates will be skipped", cfg.mu);
        }

        let mut theta_rng = rng::stream(cfg.seed, rng::tag::GCN_INIT);
        let mut omega_rng = rng::stream(cfg.seed, rng::tag::PREDICTOR_INIT);
        let theta = GcnParams::init(ds.features.dim(), cfg.hidden, classes, &mut theta_rng);
        let omega = EdgePredictor::init(classes, cfg.hidden, &mut omega_rng);
        let x_lg = init_features(&line_graph, &ds.features, classes, cfg.seed)?;
        let (epsilon, _, _) = cfg.pgd_schedule();

        Ok(Trainer {
            ds,
            lg_prop: line_graph.propagation(),
            full_prop: Arc::new(g.normalized()),
            lg_node_of_edge,
            x: ds.features.matrix().clone(),
            delta_rng: rng::stream(cfg.seed, rng::tag::PERTURBATION),
            drop_rng: rng::stream(cfg.seed, rng::tag::RANDOM_DROP),
            state: TrainState {
                theta,
                omega,
                delta: Perturbation {
                    values: Matrix::zeros(line_graph.num_nodes(), 2),
                    epsilon,
                },
                x_lg,
                epoch: 0,
                best: None,
                sigma: sim.sigma,
                kappa: supervision.kappa,
                max_delta_linf: 0.0,
            },
            supervision,
            line_graph,
            cfg: cfg.clone(),
        })
    }

    pub fn state(&self) -> &TrainState {
        &self.state
    }

    pub fn into_state(self) -> TrainState {
        self.state
    }

    pub fn line_graph(&self) -> &LineGraph {
        &self.line_graph
    }

    pub fn supervision(&self) -> &SupervisionSignal {
        &self.supervision
    }

    /// Keep-probabilities of the predictor under the given perturbation.
    pub fn keep_probabilities(&self, delta: &Perturbation) -> Result<Vec<f64>> {
        if self.line_graph.is_empty() {
            return Ok(Vec::new());
        }
        let mut tape = Tape::new();
        let w = self.state.omega.params.bind(&mut tape);
        let x = tape.leaf(self.state.x_lg.values().clone(), false);
        let d = tape.leaf(delta.values.clone(), false);
        let z = predict_edges(&mut tape, w, x, &self.lg_prop, d)?;
        Ok(keep_probabilities(tape.value(z)))
    }

    /// Runs the inner PGD loop and computes both gradient sets for the
    /// current epoch without moving any parameter. Advances δ and the
    /// epoch counter.
    pub fn epoch_gradients(&mut self) -> Result<EpochGradients> {
        self.state.epoch += 1;
        let (epsilon, gamma, eta) = self.cfg.pgd_schedule();
        let lg_nodes = self.line_graph.num_nodes();
        let mut delta = init_perturbation(lg_nodes, epsilon, &mut self.delta_rng)?;

        let mut omega_grads = None;
        let mut l_lg = None;
        if lg_nodes > 0 && !self.supervision.is_degenerate() {
            let mut acc = self.state.omega.params.clone();
            acc.zero_grad();
            let mut total = 0.0;
            for _ in 0..eta {
                let mut tape = Tape::new();
                let w = acc.bind(&mut tape);
                let x = tape.leaf(self.state.x_lg.values().clone(), false);
                let d = tape.leaf(delta.values.clone(), true);
                let z = predict_edges(&mut tape, w, x, &self.lg_prop, d)?;
                let loss = line_graph_loss(&mut tape, z, &self.supervision)?;
                total += tape.scalar(loss)?;
                tape.backward(loss)?;
                acc.absorb_grads(&tape, w)?;
                let grad_delta = tape
                    .grad(d)
                    .ok_or_else(|| Error::contract("no gradient reached the perturbation"))?;
                delta = pgd_step(&delta, grad_delta, gamma)?;
                self.state.max_delta_linf = self.state.max_delta_linf.max(delta.linf());
            }
            let scale = 1.0 / eta as f64;
            let mean = |g: Option<Matrix>| {
                let mut g = g.expect("accumulated above");
                g.scale(scale);
                g
            };
            omega_grads = Some([mean(acc.w1.grad), mean(acc.w2.grad)]);
            l_lg = Some(total * scale);
        } else if self.state.epoch == 1 {
            log::warn!("edge predictor has nothing to learn from; only the backbone is trained");
        }

        // Mask from the perturbation left by the last PGD step.
        let keep_prob = self.keep_probabilities(&delta)?;
        let lg_mask = compute_mask(&keep_prob, self.cfg.mu)?;
        let keep = self
            .lg_node_of_edge
            .iter()
            .map(|node| match node {
                Some(q) => lg_mask.keep[*q],
                None => self.drop_rng.random::<f64>() >= self.cfg.random_drop_rate,
            })
            .collect();
        let mask = EdgeMask { keep };
        let mut corrupted = corrupt_adjacency(&self.ds.graph, &mask)?;
        corrupted.epoch = self.state.epoch;
        corrupted.step = eta;
        self.state.delta = delta;

        let mut tape = Tape::new();
        let w = self.state.theta.bind(&mut tape);
        let x = tape.leaf(self.x.clone(), false);
        let logits = gcn_forward(&mut tape, w, x, &corrupted.normalized())?;
        let loss = classification_loss(&mut tape, logits, &self.ds.labels)?;
        let l_ce = tape.scalar(loss)?;
        tape.backward(loss)?;
        let grad = |v| tape.grad(v).cloned().expect("backbone weights require grad");
        let theta = [grad(w.w1), grad(w.w2)];

        Ok(EpochGradients {
            omega: omega_grads,
            theta,
            l_lg,
            l_ce,
            mask,
            corrupted,
            logits: tape.value(logits).clone(),
        })
    }

    /// One full epoch: gradients, parameter updates, feature blend,
    /// complete-graph evaluation and checkpointing.
    pub fn step_epoch(&mut self) -> Result<MetricsRecord> {
        let started = Instant::now();
        let grads = self.epoch_gradients()?;
        let opt = self.cfg.optimizer();

        if let Some([g1, g2]) = &grads.omega {
            let params = &mut self.state.omega.params;
            params.w1.grad = Some(g1.clone());
            params.w2.grad = Some(g2.clone());
            opt.step(&mut params.params_mut())?;
        }
        let [g1, g2] = &grads.theta;
        self.state.theta.w1.grad = Some(g1.clone());
        self.state.theta.w2.grad = Some(g2.clone());
        opt.step(&mut self.state.theta.params_mut())?;

        if !self.line_graph.is_empty() {
            let z = grads.logits.row_softmax();
            self.state.x_lg = update_features(&self.state.x_lg, &self.line_graph, &z, self.cfg.alpha)?;
        }

        let (val_acc, test_acc) = self.evaluate_current()?;
        let improved = self.state.best.as_ref().map_or(true, |b| val_acc > b.val_acc);
        if improved {
            self.state.best = Some(Checkpoint {
                epoch: self.state.epoch,
                val_acc,
                test_acc,
                theta: self.state.theta.clone(),
                omega: self.state.omega.clone(),
                mask: grads.mask.clone(),
            });
        }

        Ok(MetricsRecord {
            epoch: self.state.epoch,
            l_lg: grads.l_lg,
            l_ce: grads.l_ce,
            val_acc,
            test_acc,
            kept_edges: grads.mask.keep_count(),
            wall_ms: Some(started.elapsed().as_secs_f64() * 1e3),
        })
    }

    fn evaluate_current(&self) -> Result<(f64, f64)> {
        evaluate_params(&self.state.theta, &self.x, &self.full_prop, self.ds)
    }

    /// Trains until `epochs` or until validation accuracy stalls for `patience` epochs.
    pub fn run(mut self, mut on_epoch: impl FnMut(&MetricsRecord)) -> Result<(TrainState, Vec<MetricsRecord>)> {
        let mut records = Vec::with_capacity(self.cfg.epochs);
        for _ in 0..self.cfg.epochs {
            let rec = self.step_epoch()?;
            on_epoch(&rec);
            records.push(rec);
            let best_epoch = self.state.best.as_ref().map_or(0, |b| b.epoch);
            if self.state.epoch - best_epoch >= self.cfg.patience {
                log::debug!("early stop at epoch {}", self.state.epoch);
                break;
            }
        }
        Ok((self.state, records))
    }
}

/// Trains on `ds` and returns the final state and the per-epoch metrics.
pub fn train(ds: &Dataset, cfg: &TrainConfig) -> Result<(TrainState, Vec<MetricsRecord>)> {
    Trainer::new(ds, cfg)?.run(|_| {})
}

fn evaluate_params(
    theta: &GcnParams,
    x: &Matrix,
    prop: &Arc<CsrMatrix>,
    ds: &Dataset,
) -> Result<(f64, f64)> {
    let logits = predict_logits(theta, x, prop)?;
    Ok((
        accuracy(&logits, &ds.labels, SplitKind::Val)?,
        accuracy(&logits, &ds.labels, SplitKind::Test)?,
    ))
}

/// Validation and test accuracy of the checkpointed backbone (or the current
/// one if nothing was checkpointed) on the complete graph.
pub fn evaluate(state: &TrainState, ds: &Dataset) -> Result<(f64, f64)> {
    let theta = state.best.as_ref().map_or(&state.theta, |b| &b.theta);
    let prop = Arc::new(ds.graph.normalized());
    evaluate_params(theta, ds.features.matrix(), &prop, ds)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LearnedGraphSummary {
    pub total_edges: usize,
    pub kept_edges: usize,
    /// Percentage of edges removed.
    pub deleted_pct: f64,
}

pub fn deleted_percentage(total: usize, kept: usize) -> f64 {
    if total == 0 {
        0.0
    } else {
        100.0 * (total - kept) as f64 / total as f64
    }
}

/// The graph kept by the best checkpoint's mask.
pub fn learned_graph(state: &TrainState, g: &Graph) -> Result<Graph> {
    let mask = state
        .best_mask()
        .ok_or_else(|| Error::contract("no checkpointed mask to export"))?;
    g.edge_subgraph(&mask.keep)
}

/// Writes the surviving edges of the best checkpoint in `edges.tsv` format.
pub fn export_learned_graph(state: &TrainState, g: &Graph, out: &Path) -> Result<LearnedGraphSummary> {
    let learned = learned_graph(state, g)?;
    write_edges(out, learned.edges())?;
    Ok(LearnedGraphSummary {
        total_edges: g.num_edges(),
        kept_edges: learned.num_edges(),
        deleted_pct: deleted_percentage(g.num_edges(), learned.num_edges()),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_round_trips_through_echo() {
        let mut cfg = TrainConfig {
            sigma: Some(1.5),
            adversarial: false,
            optimizer: OptimizerKind::Sgd,
            ..TrainConfig::default()
        };
        cfg.mu = 0.8;
        let mut back = TrainConfig::default();
        for line in cfg.echo().lines() {
            let (k, v) = line.split_once(" = ").unwrap();
            back.set(k, v).unwrap();
        }
        assert_eq!(back, cfg);
    }

    #[test]
    fn config_validation() {
        let ok = TrainConfig::default();
        assert!(ok.validate().is_ok());
        for bad in [
            TrainConfig { mu: 1.1, ..ok.clone() },
            TrainConfig { alpha: -0.1, ..ok.clone() },
            TrainConfig { eta: 0, ..ok.clone() },
            TrainConfig { epsilon: -1.0, ..ok.clone() },
            TrainConfig { gamma: 0.0, ..ok.clone() },
        ] {
            assert!(matches!(bad.validate(), Err(Error::Config(_))));
        }
        let ablation = TrainConfig { gamma: 0.0, adversarial: false, ..ok.clone() };
        assert!(ablation.validate().is_ok());
        assert_eq!(ablation.pgd_schedule(), (0.0, 0.0, 1));
        let mut c = ok;
        assert!(c.set("nope", "1").is_err());
        assert!(c.set("mu", "abc").is_err());
    }

    #[test]
    fn deleted_percentage_arithmetic() {
        assert_eq!(deleted_percentage(100, 25), 75.0);
        assert_eq!(deleted_percentage(0, 0), 0.0);
    }
}
