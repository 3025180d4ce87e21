//! Plain GCN and DropEdge baselines.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;
use std::time::Instant;

use rand::Rng as _;

use crate::adversary::EdgeMask;
use crate::backbone::{accuracy, classification_loss, gcn_forward, predict_logits, GcnParams};
use crate::error::{Error, Result};
use crate::graph::{Dataset, SplitKind};
use crate::metrics::MetricsRecord;
use crate::rng;
use crate::tensor::Tape;
use crate::trainer::TrainConfig;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BaselineKind {
    Plain,
    DropEdge,
}

impl FromStr for BaselineKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "plain" => Ok(BaselineKind::Plain),
            "dropedge" => Ok(BaselineKind::DropEdge),
            other => Err(format!("unknown baseline `{other}`")),
        }
    }
}

impl fmt::Display for BaselineKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BaselineKind::Plain => "plain",
            BaselineKind::DropEdge => "dropedge",
        })
    }
}

#[derive(Clone, Debug)]
pub struct BaselineOutcome {
    pub best_epoch: usize,
    pub val_acc: f64,
    pub test_acc: f64,
    pub theta: GcnParams,
    pub records: Vec<MetricsRecord>,
}

/// Trains a GCN on `ds`. DropEdge keeps each undirected edge with
/// probability `1 − drop_rate`, redrawn every epoch. Evaluation always uses
/// the complete graph of `ds`.
pub fn run_baseline(
    kind: BaselineKind,
    ds: &Dataset,
    cfg: &TrainConfig,
    drop_rate: f64,
) -> Result<BaselineOutcome> {
    cfg.validate()?;
    if kind == BaselineKind::DropEdge && !(0.0..1.0).contains(&drop_rate) {
        return Err(Error::config(format!("drop rate {drop_rate} outside [0, 1)")));
    }
    let g = &ds.graph;
    let x = ds.features.matrix();
    let full = Arc::new(g.normalized());
    let mut init_rng = rng::stream(cfg.seed, rng::tag::GCN_INIT);
    let mut drop_rng = rng::stream(cfg.seed, rng::tag::RANDOM_DROP);
    let mut theta = GcnParams::init(ds.features.dim(), cfg.hidden, ds.labels.num_classes(), &mut init_rng);
    let opt = cfg.optimizer();

    let mut best: Option<(usize, f64, f64, GcnParams)> = None;
    let mut records = Vec::new();
    for epoch in 1..=cfg.epochs {
        let started = Instant::now();
        let (prop, kept) = match kind {
            BaselineKind::Plain => (full.clone(), g.num_edges()),
            BaselineKind::DropEdge => {
                let mask = EdgeMask {
                    keep: (0..g.num_edges())
                        .map(|_| drop_rng.random::<f64>() >= drop_rate)
                        .collect(),
                };
                let sub = g.edge_subgraph(&mask.keep)?;
                (Arc::new(sub.normalized()), mask.keep_count())
            }
        };

        let mut tape = Tape::new();
        let w = theta.bind(&mut tape);
        let xv = tape.leaf(x.clone(), false);
        let logits = gcn_forward(&mut tape, w, xv, &prop)?;
        let loss = classification_loss(&mut tape, logits, &ds.labels)?;
        let l_ce = tape.scalar(loss)?;
        tape.backward(loss)?;
        theta.absorb_grads(&tape, w)?;
        opt.step(&mut theta.params_mut())?;

        let eval = predict_logits(&theta, x, &full)?;
        let val_acc = accuracy(&eval, &ds.labels, SplitKind::Val)?;
        let test_acc = accuracy(&eval, &ds.labels, SplitKind::Test)?;
        if best.as_ref().map_or(true, |b| val_acc > b.1) {
            best = Some((epoch, val_acc, test_acc, theta.clone()));
        }
        records.push(MetricsRecord {
            epoch,
            l_lg: None,
            l_ce,
            val_acc,
            test_acc,
            kept_edges: kept,
            wall_ms: Some(started.elapsed().as_secs_f64() * 1e3),
        });
        if epoch - best.as_ref().map_or(0, |b| b.0) >= cfg.patience {
            break;
        }
    }
    let (best_epoch, val_acc, test_acc, theta) =
        best.ok_or_else(|| Error::config("epochs must be at least 1"))?;
    Ok(BaselineOutcome {
        best_epoch,
        val_acc,
        test_acc,
        theta,
        records,
    })
}
