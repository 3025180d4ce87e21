//! Adversarial edge dropping for graph neural networks.
//!
//! The crate builds the line graph of an attributed graph, trains an edge
//! predictor on it whose outputs are perturbed by a projected-gradient
//! adversary, and uses the predictor's keep/drop decisions to corrupt the
//! adjacency seen by a two-layer GCN during training. Evaluation always runs
//! on the complete graph.
//!
//! Module map:
//! - [`graph`]: CSR graphs, features, labels and the normalized propagation matrix.
//! - [`tensor`]: dense matrices, a reverse-mode tape and optimizers.
//! - [`linegraph`]: line-graph construction and its evolving node features.
//! - [`supervision`]: Gaussian similarities, the per-edge supervision signal and pre-dropping.
//! - [`backbone`]: the GCN, its classification loss and accuracy.
//! - [`adversary`]: edge predictor, perturbation, masking and the line-graph loss.
//! - [`trainer`]: the alternating PGD/SGD loop, checkpointing and evaluation.
//! - [`harness`]: synthetic data, attacks, baselines, retraining and reports.

pub mod adversary;
pub mod backbone;
pub mod error;
pub mod graph;
pub mod harness;
pub mod linegraph;
pub mod metrics;
pub mod reduce;
pub mod rng;
pub mod sparse;
pub mod supervision;
pub mod tensor;
pub mod trainer;

pub use error::{Error, Result};
pub use graph::{Dataset, FeatureMatrix, Graph, LabelSplit, SplitKind};
pub use tensor::Matrix;
pub use trainer::{train, TrainConfig, TrainState};
