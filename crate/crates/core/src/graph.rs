//! Undirected attributed graphs and their tab-separated file formats.
//!
//! File formats (0-based node ids, `#` starts a comment line):
//! - `edges.tsv`: `u<TAB>v`
//! - `features.tsv`: `node<TAB>x_1<TAB>...<TAB>x_m`
//! - `labels.tsv`: `node<TAB>class`
//! - `splits.tsv`: `node<TAB>train|val|test`

use std::fmt;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::sparse::CsrMatrix;
use crate::tensor::Matrix;

/// Simple undirected graph. Self-loops are never stored.
#[derive(Clone, Debug, PartialEq)]
pub struct Graph {
    num_nodes: usize,
    adjacency: CsrMatrix,
    edges: Vec<(usize, usize)>,
    degrees: Vec<usize>,
}

/// What was discarded while canonicalizing an edge list.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct MergeReport {
    /// Duplicate or reversed copies of an edge already seen.
    pub merged: usize,
    pub self_loops: usize,
}

impl Graph {
    /// Builds a graph from arbitrary `(u, v)` pairs, merging duplicates and
    /// reversed copies and discarding self-loops.
    pub fn from_edges(
        num_nodes: usize,
        pairs: impl IntoIterator<Item = (usize, usize)>,
    ) -> Result<(Graph, MergeReport)> {
        let mut report = MergeReport::default();
        let mut canon = Vec::new();
        for (u, v) in pairs {
            if u >= num_nodes || v >= num_nodes {
                return Err(Error::contract(format!(
                    "edge ({u}, {v}) references a node outside 0..{num_nodes}"
                )));
            }
            if u == v {
                report.self_loops += 1;
                continue;
            }
            canon.push((u.min(v), u.max(v)));
        }
        let before = canon.len();
        canon.sort_unstable();
        canon.dedup();
        report.merged = before - canon.len();
        Ok((Self::from_canonical(num_nodes, canon), report))
    }

    /// `edges` must be sorted, unique and satisfy `i < j < num_nodes`.
    fn from_canonical(num_nodes: usize, edges: Vec<(usize, usize)>) -> Graph {
        let mut neighbors = vec![Vec::new(); num_nodes];
        for &(i, j) in &edges {
            neighbors[i].push(j);
            neighbors[j].push(i);
        }
        for list in &mut neighbors {
            list.sort_unstable();
        }
        let degrees = neighbors.iter().map(Vec::len).collect();
        Graph {
            num_nodes,
            adjacency: CsrMatrix::pattern_from_rows(num_nodes, &neighbors),
            edges,
            degrees,
        }
    }

    pub fn empty(num_nodes: usize) -> Graph {
        Self::from_canonical(num_nodes, Vec::new())
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    /// Canonical edge list, `i < j`, sorted lexicographically.
    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn adjacency(&self) -> &CsrMatrix {
        &self.adjacency
    }

    pub fn degrees(&self) -> &[usize] {
        &self.degrees
    }

    pub fn neighbors(&self, node: usize) -> &[usize] {
        self.adjacency.row_indices(node)
    }

    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        u < self.num_nodes && v < self.num_nodes && self.adjacency.contains(u, v)
    }

    /// Position of edge `{u, v}` in [`Graph::edges`].
    pub fn edge_index(&self, u: usize, v: usize) -> Option<usize> {
        self.edges.binary_search(&(u.min(v), u.max(v))).ok()
    }

    /// Subgraph on the same node set keeping edge `p` iff `keep[p]`.
    pub fn edge_subgraph(&self, keep: &[bool]) -> Result<Graph> {
        if keep.len() != self.edges.len() {
            return Err(Error::shape(
                "edge_subgraph",
                format!("{} flags for {} edges", keep.len(), self.edges.len()),
            ));
        }
        let edges = self
            .edges
            .iter()
            .zip(keep)
            .filter_map(|(&e, &k)| k.then_some(e))
            .collect();
        Ok(Self::from_canonical(self.num_nodes, edges))
    }

    /// Symmetrically normalized propagation matrix with self-loops.
    pub fn normalized(&self) -> CsrMatrix {
        normalize_adjacency(&self.adjacency, self.num_nodes)
    }
}

/// `D̂^{-1/2} (A + I) D̂^{-1/2}` where `D̂` is the degree matrix of `A + I`.
///
/// `adj` must be a symmetric 0/1 pattern without self-loops.
pub fn normalize_adjacency(adj: &CsrMatrix, num_nodes: usize) -> CsrMatrix {
    debug_assert_eq!(adj.rows(), num_nodes);
    let deg: Vec<f64> = (0..num_nodes)
        .map(|i| (adj.row_indices(i).len() + 1) as f64)
        .collect();
    let mut triplets = Vec::with_capacity(adj.nnz() + num_nodes);
    for i in 0..num_nodes {
        triplets.push((i, i, 1.0 / deg[i]));
        for &j in adj.row_indices(i) {
            triplets.push((i, j, 1.0 / (deg[i] * deg[j]).sqrt()));
        }
    }
    CsrMatrix::from_triplets(num_nodes, num_nodes, triplets).expect("indices within bounds")
}

/// Dense node features, one row per node.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureMatrix(Matrix);

impl FeatureMatrix {
    pub fn new(values: Matrix) -> Result<Self> {
        if !values.is_finite() {
            return Err(Error::contract("feature matrix contains non-finite values"));
        }
        Ok(FeatureMatrix(values))
    }

    pub fn num_nodes(&self) -> usize {
        self.0.rows()
    }

    pub fn dim(&self) -> usize {
        self.0.cols()
    }

    pub fn row(&self, node: usize) -> &[f64] {
        self.0.row(node)
    }

    pub fn matrix(&self) -> &Matrix {
        &self.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SplitKind {
    Train,
    Val,
    Test,
}

impl fmt::Display for SplitKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SplitKind::Train => "train",
            SplitKind::Val => "val",
            SplitKind::Test => "test",
        })
    }
}

impl FromStr for SplitKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "train" => Ok(SplitKind::Train),
            "val" => Ok(SplitKind::Val),
            "test" => Ok(SplitKind::Test),
            other => Err(format!("unknown split `{other}`")),
        }
    }
}

/// Node labels and disjoint train/val/test node sets.
#[derive(Clone, Debug, PartialEq)]
pub struct LabelSplit {
    labels: Vec<Option<usize>>,
    num_classes: usize,
    train: Vec<usize>,
    val: Vec<usize>,
    test: Vec<usize>,
}

impl LabelSplit {
    pub fn new(
        labels: Vec<Option<usize>>,
        num_classes: usize,
        mut train: Vec<usize>,
        mut val: Vec<usize>,
        mut test: Vec<usize>,
    ) -> Result<Self> {
        let n = labels.len();
        let mut owner: Vec<Option<SplitKind>> = vec![None; n];
        for (kind, set) in [
            (SplitKind::Train, &mut train),
            (SplitKind::Val, &mut val),
            (SplitKind::Test, &mut test),
        ] {
            set.sort_unstable();
            for &node in set.iter() {
                if node >= n {
                    return Err(Error::contract(format!("{kind} node {node} outside 0..{n}")));
                }
                if let Some(prev) = owner[node] {
                    return Err(Error::contract(format!(
                        "node {node} appears in both {prev} and {kind}"
                    )));
                }
                owner[node] = Some(kind);
                match labels[node] {
                    Some(c) if c < num_classes => {}
                    Some(c) => {
                        return Err(Error::contract(format!(
                            "node {node} has label {c} outside 0..{num_classes}"
                        )))
                    }
                    None => {
                        return Err(Error::contract(format!("{kind} node {node} has no label")))
                    }
                }
            }
        }
        Ok(LabelSplit {
            labels,
            num_classes,
            train,
            val,
            test,
        })
    }

    pub fn num_nodes(&self) -> usize {
        self.labels.len()
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn label(&self, node: usize) -> Option<usize> {
        self.labels[node]
    }

    pub fn labels(&self) -> &[Option<usize>] {
        &self.labels
    }

    pub fn mask(&self, kind: SplitKind) -> &[usize] {
        match kind {
            SplitKind::Train => &self.train,
            SplitKind::Val => &self.val,
            SplitKind::Test => &self.test,
        }
    }
}

/// Graph, features and labels over the same node set.
#[derive(Clone, Debug)]
pub struct Dataset {
    pub graph: Graph,
    pub features: FeatureMatrix,
    pub labels: LabelSplit,
}

impl Dataset {
    pub fn new(graph: Graph, features: FeatureMatrix, labels: LabelSplit) -> Result<Self> {
        let n = graph.num_nodes();
        if features.num_nodes() != n || labels.num_nodes() != n {
            return Err(Error::contract(format!(
                "node counts disagree: graph {n}, features {}, labels {}",
                features.num_nodes(),
                labels.num_nodes()
            )));
        }
        Ok(Dataset {
            graph,
            features,
            labels,
        })
    }

    pub fn with_graph(&self, graph: Graph) -> Result<Self> {
        Self::new(graph, self.features.clone(), self.labels.clone())
    }

    /// Reads `edges.tsv`, `features.tsv`, `labels.tsv` and `splits.tsv` from `dir`.
    /// The node count is taken from the feature file.
    pub fn load(dir: &Path) -> Result<Self> {
        let features = load_features(&dir.join("features.tsv"))?;
        let n = features.num_nodes();
        let (graph, report) = load_graph(&dir.join("edges.tsv"), n)?;
        if report.merged > 0 || report.self_loops > 0 {
            log::info!(
                "edges.tsv: merged {} duplicate/reversed lines, dropped {} self-loops",
                report.merged,
                report.self_loops
            );
        }
        let labels = load_labels(&dir.join("labels.tsv"), &dir.join("splits.tsv"), n)?;
        Self::new(graph, features, labels)
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        write_edges(&dir.join("edges.tsv"), self.graph.edges())?;
        write_features(&dir.join("features.tsv"), &self.features)?;
        write_labels(&dir.join("labels.tsv"), &self.labels)?;
        write_splits(&dir.join("splits.tsv"), &self.labels)
    }
}

fn read_lines(path: &Path) -> Result<Vec<(usize, String)>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(text
        .lines()
        .enumerate()
        .filter(|(_, l)| {
            let t = l.trim();
            !t.is_empty() && !t.starts_with('#')
        })
        .map(|(i, l)| (i + 1, l.trim().to_string()))
        .collect())
}

fn parse_node(path: &Path, line: usize, field: &str, n: usize) -> Result<usize> {
    let id: usize = field
        .trim()
        .parse()
        .map_err(|_| Error::parse(path, line, format!("invalid node id `{field}`")))?;
    if id >= n {
        return Err(Error::parse(
            path,
            line,
            format!("node id {id} out of range 0..{n}"),
        ));
    }
    Ok(id)
}

/// Loads an `edges.tsv` file into a canonical graph on `num_nodes` nodes.
pub fn load_graph(path: &Path, num_nodes: usize) -> Result<(Graph, MergeReport)> {
    let mut pairs = Vec::new();
    for (line, text) in read_lines(path)? {
        let mut fields = text.split('\t');
        let (Some(u), Some(v), None) = (fields.next(), fields.next(), fields.next()) else {
            return Err(Error::parse(path, line, "expected `u<TAB>v`"));
        };
        pairs.push((
            parse_node(path, line, u, num_nodes)?,
            parse_node(path, line, v, num_nodes)?,
        ));
    }
    Graph::from_edges(num_nodes, pairs)
}

pub fn load_features(path: &Path) -> Result<FeatureMatrix> {
    let mut rows: Vec<(usize, usize, Vec<f64>)> = Vec::new();
    for (line, text) in read_lines(path)? {
        let mut fields = text.split('\t');
        let node_field = fields.next().unwrap_or_default();
        let node: usize = node_field
            .trim()
            .parse()
            .map_err(|_| Error::parse(path, line, format!("invalid node id `{node_field}`")))?;
        let values = fields
            .map(|f| {
                f.trim()
                    .parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| Error::parse(path, line, format!("invalid feature value `{f}`")))
            })
            .collect::<Result<Vec<_>>>()?;
        rows.push((line, node, values));
    }
    let n = rows.iter().map(|r| r.1 + 1).max().unwrap_or(0);
    let dim = rows.first().map_or(0, |r| r.2.len());
    let mut seen = vec![false; n];
    let mut values = Matrix::zeros(n, dim);
    for (line, node, row) in rows {
        if row.len() != dim {
            return Err(Error::parse(
                path,
                line,
                format!("expected {dim} feature values, found {}", row.len()),
            ));
        }
        if std::mem::replace(&mut seen[node], true) {
            return Err(Error::parse(path, line, format!("duplicate row for node {node}")));
        }
        values.row_mut(node).copy_from_slice(&row);
    }
    if let Some(missing) = seen.iter().position(|s| !s) {
        return Err(Error::parse(path, 0, format!("no feature row for node {missing}")));
    }
    FeatureMatrix::new(values)
}

/// Reads `labels.tsv` and `splits.tsv`. The class count is the largest label plus one.
pub fn load_labels(labels_path: &Path, splits_path: &Path, num_nodes: usize) -> Result<LabelSplit> {
    let mut labels = vec![None; num_nodes];
    for (line, text) in read_lines(labels_path)? {
        let (node, class) = text
            .split_once('\t')
            .ok_or_else(|| Error::parse(labels_path, line, "expected `node<TAB>class`"))?;
        let node = parse_node(labels_path, line, node, num_nodes)?;
        let class: usize = class
            .trim()
            .parse()
            .map_err(|_| Error::parse(labels_path, line, format!("invalid class `{class}`")))?;
        labels[node] = Some(class);
    }
    let num_classes = labels.iter().flatten().max().map_or(0, |c| c + 1);
    let (mut train, mut val, mut test) = (Vec::new(), Vec::new(), Vec::new());
    for (line, text) in read_lines(splits_path)? {
        let (node, kind) = text
            .split_once('\t')
            .ok_or_else(|| Error::parse(splits_path, line, "expected `node<TAB>split`"))?;
        let node = parse_node(splits_path, line, node, num_nodes)?;
        match kind.trim().parse::<SplitKind>() {
            Ok(SplitKind::Train) => train.push(node),
            Ok(SplitKind::Val) => val.push(node),
            Ok(SplitKind::Test) => test.push(node),
            Err(msg) => return Err(Error::parse(splits_path, line, msg)),
        }
    }
    LabelSplit::new(labels, num_classes, train, val, test)
}

fn write_file(path: &Path, body: impl FnOnce(&mut BufWriter<fs::File>) -> std::io::Result<()>) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    body(&mut w)
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(path, e))
}

pub fn write_edges(path: &Path, edges: &[(usize, usize)]) -> Result<()> {
    write_file(path, |w| {
        for (u, v) in edges {
            writeln!(w, "{u}\t{v}")?;
        }
        Ok(())
    })
}

pub fn write_features(path: &Path, features: &FeatureMatrix) -> Result<()> {
    write_file(path, |w| {
        for node in 0..features.num_nodes() {
            write!(w, "{node}")?;
            for v in features.row(node) {
                write!(w, "\t{v}")?;
            }
            writeln!(w)?;
        }
        Ok(())
    })
}

pub fn write_labels(path: &Path, labels: &LabelSplit) -> Result<()> {
    write_file(path, |w| {
        for (node, label) in labels.labels().iter().enumerate() {
            if let Some(c) = label {
                writeln!(w, "{node}\t{c}")?;
            }
        }
        Ok(())
    })
}

pub fn write_splits(path: &Path, labels: &LabelSplit) -> Result<()> {
    let mut rows: Vec<(usize, SplitKind)> = [SplitKind::Train, SplitKind::Val, SplitKind::Test]
        .into_iter()
        .flat_map(|k| labels.mask(k).iter().map(move |&n| (n, k)))
        .collect();
    rows.sort_unstable();
    write_file(path, |w| {
        for (node, kind) in rows {
            writeln!(w, "{node}\t{kind}")?;
        }
        Ok(())
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write_tmp(contents: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f
    }

    #[test]
    fn empty_file_gives_edgeless_graph() {
        let f = write_tmp("");
        let (g, _) = load_graph(f.path(), 4).unwrap();
        assert_eq!(g.num_edges(), 0);
        assert_eq!(g.degrees(), &[0, 0, 0, 0]);
    }

    #[test]
    fn triangle_degrees() {
        let f = write_tmp("0\t1\n1\t2\n# comment\n0\t2\n");
        let (g, _) = load_graph(f.path(), 3).unwrap();
        assert_eq!(g.num_edges(), 3);
        assert_eq!(g.degrees(), &[2, 2, 2]);
        assert!(g.adjacency().is_symmetric());
    }

    #[test]
    fn duplicates_and_reversals_merge() {
        let f = write_tmp("0\t1\n1\t0\n0\t1\n");
        let (g, report) = load_graph(f.path(), 2).unwrap();
        assert_eq!(g.edges(), &[(0, 1)]);
        assert_eq!(report.merged, 2);
        assert_eq!(g.adjacency().nnz(), 2 * g.num_edges());
    }

    #[test]
    fn out_of_range_reports_line() {
        let f = write_tmp("0\t1\n\n1\t7\n");
        match load_graph(f.path(), 3) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn missing_file_is_io_error() {
        let err = load_graph(Path::new("/nonexistent/edges.tsv"), 3).unwrap_err();
        assert!(matches!(err, Error::Io { .. }));
        assert_eq!(err.exit_code(), 3);
    }

    #[test]
    fn normalize_isolated_node() {
        let g = Graph::empty(1);
        assert_eq!(g.normalized().to_dense().as_slice(), &[1.0]);
    }

    #[test]
    fn normalize_single_edge() {
        let (g, _) = Graph::from_edges(2, [(0, 1)]).unwrap();
        assert_eq!(g.normalized().to_dense().as_slice(), &[0.5; 4]);
    }

    #[test]
    fn normalize_triangle() {
        let (g, _) = Graph::from_edges(3, [(0, 1), (1, 2), (0, 2)]).unwrap();
        for v in g.normalized().to_dense().as_slice() {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn split_masks_must_be_disjoint() {
        let labels = vec![Some(0), Some(1), Some(0)];
        assert!(LabelSplit::new(labels.clone(), 2, vec![0], vec![0], vec![]).is_err());
        assert!(LabelSplit::new(labels, 2, vec![0], vec![1], vec![2]).is_ok());
        assert!(LabelSplit::new(vec![None, Some(0)], 2, vec![0], vec![], vec![]).is_err());
    }

    #[test]
    fn dataset_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let (graph, _) = Graph::from_edges(3, [(0, 1), (2, 1)]).unwrap();
        let features = FeatureMatrix::new(
            Matrix::from_rows(&[vec![0.5, -1.0], vec![0.25, 2.0], vec![1e-3, 3.5]]).unwrap(),
        )
        .unwrap();
        let labels = LabelSplit::new(vec![Some(0), Some(1), Some(1)], 2, vec![0], vec![1], vec![2]).unwrap();
        let ds = Dataset::new(graph, features, labels).unwrap();
        ds.save(dir.path()).unwrap();
        let back = Dataset::load(dir.path()).unwrap();
        assert_eq!(back.graph, ds.graph);
        assert_eq!(back.features, ds.features);
        assert_eq!(back.labels, ds.labels);
    }

    #[test]
    fn bad_split_name_is_parse_error() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("labels.tsv"), "0\t0\n").unwrap();
        fs::write(dir.path().join("splits.tsv"), "0\ttrian\n").unwrap();
        let err = load_labels(&dir.path().join("labels.tsv"), &dir.path().join("splits.tsv"), 1).unwrap_err();
        assert_eq!(err.exit_code(), 2);
    }
}
