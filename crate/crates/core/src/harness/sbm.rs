//! Stochastic block model with injected inter-class noise edges.

use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::graph::{Dataset, FeatureMatrix, Graph, LabelSplit};
use crate::rng;
use crate::tensor::Matrix;

pub const TRAIN_PER_CLASS: usize = 20;
pub const VAL_NODES: usize = 500;
pub const VAL_FRACTION: f64 = 0.3;

#[derive(Clone, Debug, PartialEq)]
pub struct SbmSpec {
    pub blocks: Vec<usize>,
    pub p_intra: f64,
    pub p_inter: f64,
    /// Extra uniformly drawn inter-class non-edges.
    pub noise_edges: usize,
    pub dim: usize,
    /// Offset of a class's own feature dimensions from zero.
    pub separation: f64,
    pub seed: u64,
}

impl Default for SbmSpec {
    fn default() -> Self {
        SbmSpec {
            blocks: vec![100, 100],
            p_intra: 0.06,
            p_inter: 0.005,
            noise_edges: 150,
            dim: 16,
            separation: 1.0,
            seed: 0,
        }
    }
}

impl SbmSpec {
    pub fn validate(&self) -> Result<()> {
        if self.blocks.is_empty() || self.blocks.iter().any(|&b| b == 0) {
            return Err(Error::config("sbm blocks must be non-empty and at least 1 node each"));
        }
        for (name, p) in [("p_intra", self.p_intra), ("p_inter", self.p_inter)] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::config(format!("sbm {name} = {p} outside [0, 1]")));
            }
        }
        if self.dim == 0 {
            return Err(Error::config("sbm feature dimension must be positive"));
        }
        if !self.separation.is_finite() {
            return Err(Error::config("sbm separation must be finite"));
        }
        Ok(())
    }

    pub fn num_nodes(&self) -> usize {
        self.blocks.iter().sum()
    }

    pub fn labels(&self) -> Vec<usize> {
        self.blocks
            .iter()
            .enumerate()
            .flat_map(|(k, &size)| std::iter::repeat_n(k, size))
            .collect()
    }
}

#[derive(Clone, Debug)]
pub struct SyntheticGraph {
    pub dataset: Dataset,
    /// Injected noise edges, canonical `(i < j)` and sorted.
    pub noise_edges: Vec<(usize, usize)>,
}

impl SyntheticGraph {
    pub fn noise_set(&self) -> HashSet<(usize, usize)> {
        self.noise_edges.iter().copied().collect()
    }
}

pub fn gen_sbm(spec: &SbmSpec) -> Result<SyntheticGraph> {
    spec.validate()?;
    let n = spec.num_nodes();
    let classes = spec.blocks.len();
    let label = spec.labels();

    let mut edge_rng = rng::stream(spec.seed, rng::tag::SBM_EDGES);
    let mut edges = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            let p = if label[i] == label[j] { spec.p_intra } else { spec.p_inter };
            if edge_rng.random::<f64>() < p {
                edges.push((i, j));
            }
        }
    }

    let present: HashSet<(usize, usize)> = edges.iter().copied().collect();
    let mut candidates: Vec<(usize, usize)> = (0..n)
        .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
        .filter(|&(i, j)| label[i] != label[j] && !present.contains(&(i, j)))
        .collect();
    if spec.noise_edges > candidates.len() {
        return Err(Error::contract(format!(
            "requested {} noise edges but only {} inter-class non-edges exist",
            spec.noise_edges,
            candidates.len()
        )));
    }
    let mut noise_rng = rng::stream(spec.seed, rng::tag::SBM_NOISE);
    let (chosen, _) = candidates.partial_shuffle(&mut noise_rng, spec.noise_edges);
    let mut noise_edges = chosen.to_vec();
    noise_edges.sort_unstable();
    edges.extend_from_slice(&noise_edges);
    let (graph, _) = Graph::from_edges(n, edges)?;

    let mut feat_rng = rng::stream(spec.seed, rng::tag::SBM_FEATURES);
    let unit = Normal::new(0.0, 1.0).expect("unit normal");
    let features = Matrix::from_fn(n, spec.dim, |i, d| {
        let mean = if d % classes == label[i] { spec.separation } else { 0.0 };
        mean + unit.sample(&mut feat_rng)
    });

    let labels = draw_splits(&label, classes, spec.seed)?;
    let dataset = Dataset::new(graph, FeatureMatrix::new(features)?, labels)?;
    Ok(SyntheticGraph {
        dataset,
        noise_edges,
    })
}

/// Up to 20 training nodes per class, then `min(500, ⌊0.3·n⌋)` validation
/// nodes; every remaining node is a test node.
pub fn draw_splits(label: &[usize], classes: usize, seed: u64) -> Result<LabelSplit> {
    let n = label.len();
    let mut rng = rng::stream(seed, rng::tag::SBM_SPLITS);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);

    let mut taken = vec![0usize; classes];
    let mut train = Vec::new();
    let mut rest = Vec::new();
    for node in order {
        if taken[label[node]] < TRAIN_PER_CLASS {
            taken[label[node]] += 1;
            train.push(node);
        } else {
            rest.push(node);
        }
    }
    let val_size = VAL_NODES.min((VAL_FRACTION * n as f64).floor() as usize).min(rest.len());
    let test = rest.split_off(val_size);
    LabelSplit::new(label.iter().map(|&c| Some(c)).collect(), classes, train, rest, test)
}

/// How many of the dropped edges are injected noise edges.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct NoiseEnrichment {
    pub edges: usize,
    pub noise: usize,
    pub dropped: usize,
    pub dropped_noise: usize,
}

impl NoiseEnrichment {
    pub fn overall_noise_fraction(&self) -> f64 {
        if self.edges == 0 {
            0.0
        } else {
            self.noise as f64 / self.edges as f64
        }
    }

    /// `None` when nothing was dropped.
    pub fn dropped_noise_fraction(&self) -> Option<f64> {
        (self.dropped > 0).then(|| self.dropped_noise as f64 / self.dropped as f64)
    }

    /// Dropped edges are richer in noise than the graph as a whole.
    pub fn enriched(&self) -> bool {
        self.dropped_noise_fraction()
            .is_some_and(|f| f > self.overall_noise_fraction())
    }
}

/// Compares the edges removed by `keep` (aligned with `g.edges()`) against `noise`.
pub fn noise_enrichment(g: &Graph, keep: &[bool], noise: &HashSet<(usize, usize)>) -> NoiseEnrichment {
    let mut out = NoiseEnrichment {
        edges: g.num_edges(),
        noise: g.edges().iter().filter(|e| noise.contains(e)).count(),
        dropped: 0,
        dropped_noise: 0,
    };
    for (e, &k) in g.edges().iter().zip(keep) {
        if !k {
            out.dropped += 1;
            out.dropped_noise += usize::from(noise.contains(e));
        }
    }
    out
}
