//! Retraining a fresh GCN on a learned incomplete graph, optionally against a
//! random graph with the same number of surviving edges.

use rand::seq::index;

use crate::error::{Error, Result};
use crate::graph::{Dataset, Graph};
use crate::harness::baseline::{run_baseline, BaselineKind};
use crate::rng;
use crate::trainer::{deleted_percentage, TrainConfig};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ArmResult {
    pub val_acc: f64,
    pub test_acc: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RetrainComparison {
    pub total_edges: usize,
    pub kept_edges: usize,
    pub deleted_pct: f64,
    pub learned: ArmResult,
    pub random: Option<ArmResult>,
}

/// Uniformly keeps `kept` edges of `g`.
pub fn matched_random_graph(g: &Graph, kept: usize, seed: u64) -> Result<Graph> {
    if kept > g.num_edges() {
        return Err(Error::contract(format!(
            "cannot keep {kept} of {} edges",
            g.num_edges()
        )));
    }
    let mut rng = rng::stream(seed, rng::tag::MATCHED_RANDOM);
    let mut keep = vec![false; g.num_edges()];
    for idx in index::sample(&mut rng, g.num_edges(), kept) {
        keep[idx] = true;
    }
    g.edge_subgraph(&keep)
}

/// Trains plain GCNs on `learned` and, when `random_matched`, on a uniformly
/// thinned copy of `ds.graph` with the same edge count. Each arm trains and
/// evaluates on its own graph.
pub fn retrain_on_learned_graph(
    learned: &Graph,
    random_matched: bool,
    ds: &Dataset,
    cfg: &TrainConfig,
) -> Result<RetrainComparison> {
    let full = &ds.graph;
    if learned.num_nodes() != full.num_nodes() {
        return Err(Error::contract(format!(
            "learned graph has {} nodes, dataset {}",
            learned.num_nodes(),
            full.num_nodes()
        )));
    }
    if let Some(&(i, j)) = learned.edges().iter().find(|&&(i, j)| !full.has_edge(i, j)) {
        return Err(Error::contract(format!("learned edge ({i}, {j}) is not in the input graph")));
    }
    let arm = |g: Graph| -> Result<ArmResult> {
        let out = run_baseline(BaselineKind::Plain, &ds.with_graph(g)?, cfg, 0.0)?;
        Ok(ArmResult {
            val_acc: out.val_acc,
            test_acc: out.test_acc,
        })
    };
    let kept = learned.num_edges();
    let random = if random_matched {
        let rd = matched_random_graph(full, kept, cfg.seed)?;
        if rd.num_edges() != kept {
            return Err(Error::contract(format!(
                "matched graph has {} edges, learned graph {kept}",
                rd.num_edges()
            )));
        }
        Some(arm(rd)?)
    } else {
        None
    };
    Ok(RetrainComparison {
        total_edges: full.num_edges(),
        kept_edges: kept,
        deleted_pct: deleted_percentage(full.num_edges(), kept),
        learned: arm(learned.clone())?,
        random,
    })
}
