//! Line graph of an undirected graph and its evolving node features.
//!
//! Line-graph node `p` stands for the undirected edge `edges[p] = (i, j)`,
//! `i < j`. Two line-graph nodes are adjacent when their edges are distinct
//! and share an endpoint.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::graph::{FeatureMatrix, Graph};
use crate::reduce;
use crate::sparse::CsrMatrix;
use crate::tensor::{softmax_in_place, Matrix};

#[derive(Clone, Debug)]
pub struct LineGraph {
    adjacency: CsrMatrix,
    edges: Vec<(usize, usize)>,
    num_edges: usize,
}

/// Builds the line graph by bucketing edges on their endpoints and linking
/// every pair inside a bucket, in `O(Σ d_i²)`.
pub fn build_line_graph(g: &Graph) -> LineGraph {
    let edges = g.edges().to_vec();
    let mut incident: Vec<Vec<usize>> = vec![Vec::new(); g.num_nodes()];
    for (p, &(i, j)) in edges.iter().enumerate() {
        incident[i].push(p);
        incident[j].push(p);
    }
    let mut neighbors: Vec<Vec<usize>> = vec![Vec::new(); edges.len()];
    let mut num_edges = 0;
    for bucket in &incident {
        for (a, &p) in bucket.iter().enumerate() {
            for &q in &bucket[a + 1..] {
                neighbors[p].push(q);
                neighbors[q].push(p);
                num_edges += 1;
            }
        }
    }
    // Two distinct simple edges share at most one endpoint, so no pair is
    // produced twice.
    for row in &mut neighbors {
        row.sort_unstable();
    }
    if edges.is_empty() {
        log::warn!("graph has no edges; line graph is empty");
    }
    LineGraph {
        adjacency: CsrMatrix::pattern_from_rows(edges.len(), &neighbors),
        edges,
        num_edges,
    }
}

impl LineGraph {
    pub fn num_nodes(&self) -> usize {
        self.edges.len()
    }

    /// Number of undirected line-graph edges.
    pub fn num_edges(&self) -> usize {
        self.num_edges
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }

    pub fn adjacency(&self) -> &CsrMatrix {
        &self.adjacency
    }

    pub fn edge_of_node(&self, p: usize) -> (usize, usize) {
        self.edges[p]
    }

    pub fn node_of_edge(&self, u: usize, v: usize) -> Option<usize> {
        self.edges.binary_search(&(u.min(v), u.max(v))).ok()
    }

    pub fn source_edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    /// Normalized propagation matrix of the line graph.
    pub fn propagation(&self) -> Arc<CsrMatrix> {
        Arc::new(crate::graph::normalize_adjacency(
            &self.adjacency,
            self.num_nodes(),
        ))
    }
}

/// Line-graph node features, `|E| x 2c`.
#[derive(Clone, Debug, PartialEq)]
pub struct LineGraphFeatures {
    values: Matrix,
    pub epoch_stamp: usize,
}

impl LineGraphFeatures {
    pub fn values(&self) -> &Matrix {
        &self.values
    }

    /// Half-width `c`.
    pub fn classes(&self) -> usize {
        self.values.cols() / 2
    }
}

/// Row `p` becomes `concat(r(X_i), r(X_j))`, where `r` is the seeded rank-`c`
/// truncated SVD projection of the node features.
pub fn init_features(
    lg: &LineGraph,
    x: &FeatureMatrix,
    classes: usize,
    seed: u64,
) -> Result<LineGraphFeatures> {
    if classes < 2 {
        return Err(Error::contract(format!(
            "line-graph features need at least 2 classes, got {classes}"
        )));
    }
    let reduced = reduce::reduce(x.matrix(), classes, seed)?.scores;
    Ok(LineGraphFeatures {
        values: concat_endpoint_rows(lg.source_edges(), &reduced, false),
        epoch_stamp: 0,
    })
}

/// Blends the previous features with `softmax(concat(Z_i, Z_j))`, the softmax
/// taken over the full `2c`-vector.
pub fn update_features(
    prev: &LineGraphFeatures,
    lg: &LineGraph,
    z: &Matrix,
    alpha: f64,
) -> Result<LineGraphFeatures> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::contract(format!("alpha {alpha} outside [0, 1]")));
    }
    if 2 * z.cols() != prev.values.cols() || prev.values.rows() != lg.num_nodes() {
        return Err(Error::shape(
            "update_features",
            format!(
                "embeddings of width {} for features {:?}",
                z.cols(),
                prev.values.shape()
            ),
        ));
    }
    let fresh = concat_endpoint_rows(lg.source_edges(), z, true);
    let values = prev
        .values
        .zip_map(&fresh, |old, new| alpha * old + (1.0 - alpha) * new)?;
    Ok(LineGraphFeatures {
        values,
        epoch_stamp: prev.epoch_stamp + 1,
    })
}

fn concat_endpoint_rows(edges: &[(usize, usize)], node_rows: &Matrix, softmax: bool) -> Matrix {
    let c = node_rows.cols();
    let mut out = Matrix::zeros(edges.len(), 2 * c);
    for (p, &(i, j)) in edges.iter().enumerate() {
        let row = out.row_mut(p);
        row[..c].copy_from_slice(node_rows.row(i));
        row[c..].copy_from_slice(node_rows.row(j));
        if softmax {
            softmax_in_place(row);
        }
    }
    out
}
