//! Graph loading, aggregation weights, data splits, and negative sampling.

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::path::Path;
use std::sync::Arc;

use curvgnn_autodiff::{CsrMatrix, Matrix};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{stream, Stream};

/// Undirected edge stored with the smaller endpoint first.
pub type Edge = (usize, usize);

#[derive(Debug, Clone, PartialEq)]
pub struct Graph {
    pub num_nodes: usize,
    /// Sorted, deduplicated, `u < v`, no self-loops.
    pub edges: Vec<Edge>,
    /// `num_nodes x feature_dim`.
    pub features: Matrix,
    /// `-1` marks an unlabeled node.
    pub labels: Vec<i64>,
    pub num_classes: usize,
}

/// Counts gathered while reading the edge file.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct LoadStats {
    pub edge_lines: usize,
    pub duplicate_edges: usize,
    pub self_loops: usize,
}

fn canonical(u: usize, v: usize) -> Edge {
    if u < v {
        (u, v)
    } else {
        (v, u)
    }
}

impl Graph {
    /// Builds a graph, canonicalizing and deduplicating `edges` and dropping self-loops.
    pub fn new(features: Matrix, edges: impl IntoIterator<Item = Edge>, labels: Vec<i64>) -> Result<Self> {
        let num_nodes = features.nrows();
        if labels.len() != num_nodes {
            return Err(Error::DimensionMismatch(format!("{} labels for {num_nodes} nodes", labels.len())));
        }
        let mut list = Vec::new();
        for (u, v) in edges {
            if u >= num_nodes || v >= num_nodes {
                return Err(Error::DimensionMismatch(format!("edge ({u}, {v}) outside {num_nodes} nodes")));
            }
            if u != v {
                list.push(canonical(u, v));
            }
        }
        list.sort_unstable();
        list.dedup();
        if let Some(&bad) = labels.iter().find(|&&l| l < -1) {
            return Err(Error::Contract(format!("label {bad} below -1")));
        }
        let num_classes = labels.iter().copied().max().map_or(0, |m| (m + 1).max(0) as usize);
        Ok(Self { num_nodes, edges: list, features, labels, num_classes })
    }

    pub fn feature_dim(&self) -> usize {
        self.features.ncols()
    }

    pub fn edge_set(&self) -> HashSet<Edge> {
        self.edges.iter().copied().collect()
    }

    /// Divides each feature row by its sum (rows summing to zero stay zero).
    pub fn row_normalize_features(&mut self) {
        for mut row in self.features.rows_mut() {
            let s: f64 = row.sum();
            if s != 0.0 {
                row.mapv_inplace(|v| v / s);
            }
        }
    }

    /// Node ids whose label is known.
    pub fn labeled_nodes(&self) -> Vec<usize> {
        (0..self.num_nodes).filter(|&i| self.labels[i] >= 0).collect()
    }
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn parse_err(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Parse { path: path.to_path_buf(), line, message: message.into() }
}

fn parse_id(path: &Path, line: usize, token: &str, num_nodes: usize) -> Result<usize> {
    let id: usize = token.parse().map_err(|_| parse_err(path, line, format!("invalid node id `{token}`")))?;
    if id >= num_nodes {
        return Err(parse_err(path, line, format!("node id {id} out of range for {num_nodes} nodes")));
    }
    Ok(id)
}

/// Reads the whitespace-separated text format:
/// edges `u v`, features `id x_1 ... x_F`, labels `id label` with `-1` for unlabeled.
/// The node count is the number of feature rows; ids must cover `0..n`.
pub fn load_graph(edges_path: &Path, features_path: &Path, labels_path: &Path) -> Result<(Graph, LoadStats)> {
    let feature_text = read(features_path)?;
    let mut rows: BTreeMap<usize, (usize, Vec<f64>)> = BTreeMap::new();
    let mut width = None;
    for (i, line) in feature_text.lines().enumerate() {
        let lineno = i + 1;
        let mut tokens = line.split_whitespace();
        let Some(id_tok) = tokens.next() else { continue };
        let id: usize = id_tok.parse().map_err(|_| parse_err(features_path, lineno, format!("invalid node id `{id_tok}`")))?;
        let values = tokens
            .map(|t| t.parse::<f64>().map_err(|_| parse_err(features_path, lineno, format!("invalid feature value `{t}`"))))
            .collect::<Result<Vec<f64>>>()?;
        match width {
            None => width = Some(values.len()),
            Some(w) if w != values.len() => {
                return Err(parse_err(features_path, lineno, format!("ragged row: {} values, expected {w}", values.len())));
            }
            _ => {}
        }
        if rows.insert(id, (lineno, values)).is_some() {
            return Err(parse_err(features_path, lineno, format!("duplicate node id {id}")));
        }
    }
    let num_nodes = rows.len();
    if num_nodes == 0 {
        return Err(parse_err(features_path, 0, "no feature rows"));
    }
    let width = width.unwrap_or(0);
    let mut features = Matrix::zeros((num_nodes, width));
    for (id, (lineno, values)) in rows {
        if id >= num_nodes {
            return Err(parse_err(features_path, lineno, format!("node id {id} out of range: ids must cover 0..{num_nodes}")));
        }
        features.row_mut(id).assign(&ndarray::Array1::from(values));
    }

    let label_text = read(labels_path)?;
    let mut labels = vec![-1i64; num_nodes];
    for (i, line) in label_text.lines().enumerate() {
        let lineno = i + 1;
        let tokens: Vec<&str> = line.split_whitespace().collect();
        if tokens.is_empty() {
            continue;
        }
        if tokens.len() != 2 {
            return Err(parse_err(labels_path, lineno, "expected `node_id label`"));
        }
        let id = parse_id(labels_path, lineno, tokens[0], num_nodes)?;
        let label: i64 = tokens[1].parse().map_err(|_| parse_err(labels_path, lineno, format!("unknown label `{}`", tokens[1])))?;
        if label < -1 {
            return Err(parse_err(labels_path, lineno, format!("unknown label `{}`", tokens[1])));
        }
        labels[id] = label;
    }

    let edge_text = read(edges_path)?;
    let mut stats = LoadStats::default();
    let mut seen = HashSet::new();
    let mut edges = Vec::new();
    for (i, line) in edge_text.lines().enumerate() {
        let lineno = i + 1;
        let tokens: Vec<&str> = line.split_whitespace().collect();
        if tokens.is_empty() {
            continue;
        }
        if tokens.len() != 2 {
            return Err(parse_err(edges_path, lineno, "expected two node ids"));
        }
        stats.edge_lines += 1;
        let u = parse_id(edges_path, lineno, tokens[0], num_nodes)?;
        let v = parse_id(edges_path, lineno, tokens[1], num_nodes)?;
        if u == v {
            stats.self_loops += 1;
            continue;
        }
        if !seen.insert(canonical(u, v)) {
            stats.duplicate_edges += 1;
            continue;
        }
        edges.push((u, v));
    }
    Ok((Graph::new(features, edges, labels)?, stats))
}

/// Symmetric degree normalization with self-loops: `c_ij = 1 / sqrt(d_i d_j)`,
/// where `d` counts neighbors plus one.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedAdjacency {
    /// Row `i` holds the self-loop first, then neighbors in ascending order.
    pub matrix: Arc<CsrMatrix>,
    /// Degrees after self-loop insertion.
    pub degrees: Vec<usize>,
}

impl NormalizedAdjacency {
    pub fn coefficient(&self, i: usize, j: usize) -> Option<f64> {
        self.matrix.row(i).find(|&(c, _)| c == j).map(|(_, v)| v)
    }
}

pub fn normalize_adjacency(num_nodes: usize, edges: &[Edge]) -> Result<NormalizedAdjacency> {
    let mut neighbors = vec![Vec::new(); num_nodes];
    for &(u, v) in edges {
        if u >= num_nodes || v >= num_nodes {
            return Err(Error::DimensionMismatch(format!("edge ({u}, {v}) outside {num_nodes} nodes")));
        }
        if u != v {
            neighbors[u].push(v);
            neighbors[v].push(u);
        }
    }
    for list in &mut neighbors {
        list.sort_unstable();
        list.dedup();
    }
    let degrees: Vec<usize> = neighbors.iter().map(|n| n.len() + 1).collect();
    let coef = |i: usize, j: usize| 1.0 / ((degrees[i] * degrees[j]) as f64).sqrt();
    let mut triplets = Vec::with_capacity(num_nodes + 2 * edges.len());
    for (i, list) in neighbors.iter().enumerate() {
        triplets.push((i, i, coef(i, i)));
        triplets.extend(list.iter().map(|&j| (i, j, coef(i, j))));
    }
    let matrix = CsrMatrix::from_triplets(num_nodes, num_nodes, &triplets)?;
    Ok(NormalizedAdjacency { matrix: Arc::new(matrix), degrees })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Nc,
    Lp,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitPolicy {
    /// 20 labeled nodes per class for training, then 500 validation and 1000 test nodes.
    StandardPlanetoid,
    Fractional { train: f64, val: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "task", rename_all = "lowercase")]
pub enum SplitManifest {
    Nc { seed: u64, train: Vec<usize>, val: Vec<usize>, test: Vec<usize> },
    Lp { seed: u64, train: Vec<Edge>, val: Vec<Edge>, test: Vec<Edge>, neg_val: Vec<Edge>, neg_test: Vec<Edge> },
}

impl SplitManifest {
    pub fn task(&self) -> Task {
        match self {
            SplitManifest::Nc { .. } => Task::Nc,
            SplitManifest::Lp { .. } => Task::Lp,
        }
    }

    pub fn seed(&self) -> u64 {
        match self {
            SplitManifest::Nc { seed, .. } | SplitManifest::Lp { seed, .. } => *seed,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Split(format!("bad split manifest: {e}")))
    }
}

fn shuffled(mut items: Vec<usize>, rng: &mut ChaCha8Rng) -> Vec<usize> {
    items.shuffle(rng);
    items
}

fn sorted(mut v: Vec<usize>) -> Vec<usize> {
    v.sort_unstable();
    v
}

pub fn make_nc_split(g: &Graph, policy: SplitPolicy, seed: u64) -> Result<SplitManifest> {
    let mut rng = stream(seed, Stream::Split);
    let mut by_class = vec![Vec::new(); g.num_classes];
    for i in g.labeled_nodes() {
        by_class[g.labels[i] as usize].push(i);
    }
    if let Some(c) = by_class.iter().position(|v| v.is_empty()) {
        return Err(Error::Split(format!("class {c} has no labeled nodes")));
    }
    if g.num_classes == 0 {
        return Err(Error::Split("graph has no labeled nodes".into()));
    }
    let (train, val, test) = match policy {
        SplitPolicy::StandardPlanetoid => {
            let mut train = Vec::new();
            let mut rest = Vec::new();
            for nodes in by_class {
                let nodes = shuffled(nodes, &mut rng);
                let take = nodes.len().min(20);
                train.extend_from_slice(&nodes[..take]);
                rest.extend_from_slice(&nodes[take..]);
            }
            let rest = shuffled(sorted(rest), &mut rng);
            let (n_val, n_test) = if rest.len() >= 1500 {
                (500, 1000)
            } else {
                let v = (rest.len() as f64 / 3.0).round() as usize;
                (v, rest.len() - v)
            };
            (train, rest[..n_val].to_vec(), rest[n_val..n_val + n_test].to_vec())
        }
        SplitPolicy::Fractional { train, val } => {
            if !(0.0..=1.0).contains(&train) || !(0.0..=1.0).contains(&val) || train + val > 1.0 + 1e-12 {
                return Err(Error::Split(format!("invalid fractions train {train}, val {val}")));
            }
            let nodes = shuffled(g.labeled_nodes(), &mut rng);
            let n = nodes.len();
            let n_train = (train * n as f64).round() as usize;
            let n_val = ((val * n as f64).round() as usize).min(n - n_train);
            (nodes[..n_train].to_vec(), nodes[n_train..n_train + n_val].to_vec(), nodes[n_train + n_val..].to_vec())
        }
    };
    if train.is_empty() || val.is_empty() || test.is_empty() {
        return Err(Error::Split(format!("empty split: {} train, {} val, {} test", train.len(), val.len(), test.len())));
    }
    Ok(SplitManifest::Nc { seed, train: sorted(train), val: sorted(val), test: sorted(test) })
}

/// Draws `count` distinct node pairs absent from `exclude`, uniformly among all non-edges.
pub fn sample_non_edges(num_nodes: usize, exclude: &HashSet<Edge>, count: usize, rng: &mut ChaCha8Rng) -> Result<Vec<Edge>> {
    let total_pairs = num_nodes * num_nodes.saturating_sub(1) / 2;
    let available = total_pairs - exclude.iter().filter(|&&(u, v)| u != v && u < num_nodes && v < num_nodes).count();
    if count > available {
        return Err(Error::Sampling(format!("requested {count} negative edges but only {available} non-edges exist")));
    }
    if count == 0 {
        return Ok(Vec::new());
    }
    if available <= 4 * count {
        let mut all = Vec::with_capacity(available);
        for u in 0..num_nodes {
            for v in u + 1..num_nodes {
                if !exclude.contains(&(u, v)) {
                    all.push((u, v));
                }
            }
        }
        all.shuffle(rng);
        all.truncate(count);
        return Ok(all);
    }
    let mut chosen = HashSet::with_capacity(count);
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let u = rng.random_range(0..num_nodes);
        let v = rng.random_range(0..num_nodes);
        if u == v {
            continue;
        }
        let e = canonical(u, v);
        if !exclude.contains(&e) && chosen.insert(e) {
            out.push(e);
        }
    }
    Ok(out)
}

/// 85/5/10 edge split; validation and test positives are removed from the
/// training edge set and matched by equally many sampled non-edges.
pub fn make_lp_split(g: &Graph, seed: u64) -> Result<SplitManifest> {
    let m = g.edges.len();
    if m < 20 {
        return Err(Error::Split(format!("link prediction needs at least 20 edges, got {m}")));
    }
    let mut rng = stream(seed, Stream::Split);
    let mut edges = g.edges.clone();
    edges.shuffle(&mut rng);
    let n_test = (0.10 * m as f64).round() as usize;
    let n_val = (0.05 * m as f64).round() as usize;
    let test = edges[..n_test].to_vec();
    let val = edges[n_test..n_test + n_val].to_vec();
    let mut train = edges[n_test + n_val..].to_vec();
    train.sort_unstable();
    let mut neg_rng = stream(seed, Stream::Negatives);
    let negatives = sample_non_edges(g.num_nodes, &g.edge_set(), n_val + n_test, &mut neg_rng)?;
    let neg_val = negatives[..n_val].to_vec();
    let neg_test = negatives[n_val..].to_vec();
    Ok(SplitManifest::Lp { seed, train, val, test, neg_val, neg_test })
}
