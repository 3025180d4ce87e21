//! Random structural attacks: uniform edge removal or addition.

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use rand::seq::index;
use rand::seq::SliceRandom;
use rand::Rng as _;

use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AttackKind {
    Add,
    Remove,
}

impl FromStr for AttackKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "add" => Ok(AttackKind::Add),
            "remove" => Ok(AttackKind::Remove),
            other => Err(format!("unknown attack `{other}`")),
        }
    }
}

impl fmt::Display for AttackKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AttackKind::Add => "add",
            AttackKind::Remove => "remove",
        })
    }
}

/// Removes or adds `⌊rate·|E|⌋` uniformly chosen edges.
pub fn attack_graph(g: &Graph, kind: AttackKind, rate: f64, seed: u64) -> Result<Graph> {
    if !(0.0..=1.0).contains(&rate) {
        return Err(Error::contract(format!("attack rate {rate} outside [0, 1]")));
    }
    let m = g.num_edges();
    let k = (rate * m as f64).floor() as usize;
    let mut rng = rng::stream(seed, rng::tag::ATTACK);
    match kind {
        AttackKind::Remove => {
            let mut keep = vec![true; m];
            for idx in index::sample(&mut rng, m, k) {
                keep[idx] = false;
            }
            g.edge_subgraph(&keep)
        }
        AttackKind::Add => {
            let n = g.num_nodes();
            let pairs = n * n.saturating_sub(1) / 2;
            let available = pairs - m;
            if k > available {
                return Err(Error::contract(format!(
                    "cannot add {k} edges: only {available} non-edges exist"
                )));
            }
            let added = if 2 * k >= available {
                let mut all: Vec<(usize, usize)> = (0..n)
                    .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
                    .filter(|&(i, j)| !g.has_edge(i, j))
                    .collect();
                all.shuffle(&mut rng);
                all.truncate(k);
                all
            } else {
                let mut chosen = HashSet::with_capacity(k);
                let mut added = Vec::with_capacity(k);
                while added.len() < k {
                    let i = rng.random_range(0..n);
                    let j = rng.random_range(0..n);
                    let pair = (i.min(j), i.max(j));
                    if i != j && !g.has_edge(i, j) && chosen.insert(pair) {
                        added.push(pair);
                    }
                }
                added
            };
            let (out, _) = Graph::from_edges(n, g.edges().iter().copied().chain(added))?;
            Ok(out)
        }
    }
}
