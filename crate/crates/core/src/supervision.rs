//! Attribute-similarity supervision for the edge predictor, and similarity
//! based pre-dropping for edge-dense graphs.

use crate::error::{Error, Result};
use crate::graph::{FeatureMatrix, Graph};

/// Gaussian-kernel similarity of the endpoints of each edge.
#[derive(Clone, Debug, PartialEq)]
pub struct EdgeSimilarity {
    pub values: Vec<f64>,
    pub sigma: f64,
}

/// `sim_p = exp(-‖X_i − X_j‖² / 2σ²)` for every edge `p = (i, j)`.
///
/// Without an explicit `sigma` the median endpoint distance over all edges is
/// used; if that median is zero, σ falls back to 1.
pub fn gaussian_similarity(
    x: &FeatureMatrix,
    edges: &[(usize, usize)],
    sigma: Option<f64>,
) -> Result<EdgeSimilarity> {
    let n = x.num_nodes();
    if let Some(&(i, j)) = edges.iter().find(|&&(i, j)| i >= n || j >= n) {
        return Err(Error::contract(format!("edge ({i}, {j}) outside 0..{n}")));
    }
    let sq_dist: Vec<f64> = edges
        .iter()
        .map(|&(i, j)| {
            x.row(i)
                .iter()
                .zip(x.row(j))
                .map(|(a, b)| (a - b) * (a - b))
                .sum()
        })
        .collect();
    let sigma = match sigma {
        Some(s) if s > 0.0 && s.is_finite() => s,
        Some(s) => return Err(Error::contract(format!("kernel bandwidth must be positive, got {s}"))),
        None => {
            let med = median(sq_dist.iter().map(|d| d.sqrt()).collect());
            if med > 0.0 {
                med
            } else {
                log::warn!("median endpoint distance is zero; using sigma = 1");
                1.0
            }
        }
    };
    let denom = 2.0 * sigma * sigma;
    Ok(EdgeSimilarity {
        values: sq_dist.iter().map(|d| (-d / denom).exp()).collect(),
        sigma,
    })
}

fn median(mut v: Vec<f64>) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    v.sort_by(f64::total_cmp);
    let mid = v.len() / 2;
    if v.len() % 2 == 1 {
        v[mid]
    } else {
        0.5 * (v[mid - 1] + v[mid])
    }
}

/// Binary per-edge target: keep when similarity is at least `mu`.
#[derive(Clone, Debug, PartialEq)]
pub struct SupervisionSignal {
    pub targets: Vec<bool>,
    pub kappa: usize,
}

impl SupervisionSignal {
    /// No positive edge; the predictor losses are undefined.
    pub fn is_degenerate(&self) -> bool {
        self.kappa == 0
    }

    pub fn positives(&self) -> impl Iterator<Item = usize> + '_ {
        self.targets
            .iter()
            .enumerate()
            .filter_map(|(p, &t)| t.then_some(p))
    }
}

pub fn build_supervision(sim: &EdgeSimilarity, mu: f64) -> Result<SupervisionSignal> {
    if !(0.0..=1.0).contains(&mu) {
        return Err(Error::contract(format!("mu {mu} outside [0, 1]")));
    }
    let targets: Vec<bool> = sim.values.iter().map(|&s| s >= mu).collect();
    let kappa = targets.iter().filter(|&&t| t).count();
    Ok(SupervisionSignal { targets, kappa })
}

/// Per-edge pre-drop decision over the original edge list.
#[derive(Clone, Debug, PartialEq)]
pub struct PreDropMask {
    pub keep: Vec<bool>,
    pub rate: f64,
}

impl PreDropMask {
    pub fn kept(&self) -> usize {
        self.keep.iter().filter(|&&k| k).count()
    }

    /// Indices (into the original edge list) of removed edges.
    pub fn removed(&self) -> Vec<usize> {
        self.keep
            .iter()
            .enumerate()
            .filter_map(|(p, &k)| (!k).then_some(p))
            .collect()
    }
}

/// Keeps edge `p` iff `sim_p >= p_pre` and returns the reduced graph.
pub fn pre_drop(g: &Graph, sim: &EdgeSimilarity, p_pre: f64) -> Result<(PreDropMask, Graph)> {
    if !(0.0..=1.0).contains(&p_pre) {
        return Err(Error::contract(format!("pre-drop rate {p_pre} outside [0, 1]")));
    }
    if sim.values.len() != g.num_edges() {
        return Err(Error::shape(
            "pre_drop",
            format!("{} similarities for {} edges", sim.values.len(), g.num_edges()),
        ));
    }
    let keep: Vec<bool> = sim.values.iter().map(|&s| s >= p_pre).collect();
    let reduced = g.edge_subgraph(&keep)?;
    Ok((PreDropMask { keep, rate: p_pre }, reduced))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Matrix;

    fn features(rows: &[Vec<f64>]) -> FeatureMatrix {
        FeatureMatrix::new(Matrix::from_rows(rows).unwrap()).unwrap()
    }

    #[test]
    fn identical_endpoints_have_similarity_one() {
        let x = features(&[vec![1.0, 2.0], vec![1.0, 2.0]]);
        let s = gaussian_similarity(&x, &[(0, 1)], Some(0.7)).unwrap();
        assert_eq!(s.values, vec![1.0]);
    }

    #[test]
    fn analytic_point() {
        // ‖x_i − x_j‖² = 2 = 2σ² with σ = 1.
        let x = features(&[vec![0.0, 0.0], vec![1.0, 1.0]]);
        let s = gaussian_similarity(&x, &[(0, 1)], Some(1.0)).unwrap();
        assert!((s.values[0] - (-1.0f64).exp()).abs() < 1e-15);
        assert!((s.values[0] - 0.36788).abs() < 1e-5);
    }

    #[test]
    fn similarity_decays_with_distance() {
        let x = features(&[vec![0.0], vec![1.0], vec![3.0], vec![30.0]]);
        let s = gaussian_similarity(&x, &[(0, 1), (0, 2), (0, 3)], Some(1.0)).unwrap();
        assert!(s.values[0] > s.values[1] && s.values[1] > s.values[2]);
        assert!(s.values[2] < 1e-100);
    }

    #[test]
    fn median_heuristic_and_fallback() {
        let x = features(&[vec![0.0], vec![1.0], vec![3.0]]);
        let s = gaussian_similarity(&x, &[(0, 1), (0, 2), (1, 2)], None).unwrap();
        assert_eq!(s.sigma, 2.0);
        let flat = features(&[vec![2.0], vec![2.0]]);
        let s = gaussian_similarity(&flat, &[(0, 1)], None).unwrap();
        assert_eq!(s.sigma, 1.0);
        assert!(gaussian_similarity(&flat, &[(0, 1)], Some(0.0)).is_err());
    }

    #[test]
    fn supervision_thresholds() {
        let sim = EdgeSimilarity {
            values: vec![0.7, 0.6, 0.2],
            sigma: 1.0,
        };
        let s = build_supervision(&sim, 0.6).unwrap();
        assert_eq!(s.targets, vec![true, true, false]);
        assert_eq!(s.kappa, 2);
        let none = build_supervision(&sim, 0.9).unwrap();
        assert!(none.is_degenerate());
        assert!(build_supervision(&sim, 1.2).is_err());
    }

    #[test]
    fn pre_drop_endpoints_and_mixed() {
        let (g, _) = Graph::from_edges(4, [(0, 1), (1, 2), (2, 3)]).unwrap();
        let sim = EdgeSimilarity {
            values: vec![0.2, 0.6, 0.9],
            sigma: 1.0,
        };
        let (m, all) = pre_drop(&g, &sim, 0.0).unwrap();
        assert_eq!(all, g);
        assert_eq!(m.kept(), 3);
        let (_, none) = pre_drop(&g, &sim, 0.95).unwrap();
        assert_eq!(none.num_edges(), 0);
        let (m, mixed) = pre_drop(&g, &sim, 0.5).unwrap();
        assert_eq!(mixed.num_edges(), 2);
        assert_eq!(m.removed(), vec![0]);
        assert!(mixed.adjacency().is_symmetric());
    }
}
