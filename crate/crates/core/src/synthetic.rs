//! Stochastic-block-model graphs with class-dependent sparse features, used
//! for demos and for exercising the full pipeline without external data.

use std::fs;
use std::io::Write;
use std::path::Path;

use curvgnn_autodiff::Matrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::Graph;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SbmConfig {
    pub nodes: usize,
    pub classes: usize,
    pub feature_dim: usize,
    /// Expected within-class neighbors per node.
    pub degree_in: f64,
    /// Expected cross-class neighbors per node.
    pub degree_out: f64,
    /// Active features per node.
    pub words_per_node: usize,
    /// Probability that an active feature comes from the node's class block.
    pub feature_signal: f64,
    pub seed: u64,
}

impl Default for SbmConfig {
    fn default() -> Self {
        Self {
            nodes: 300,
            classes: 3,
            feature_dim: 60,
            degree_in: 4.0,
            degree_out: 1.0,
            words_per_node: 6,
            feature_signal: 0.6,
            seed: 0,
        }
    }
}

pub fn stochastic_block_model(cfg: &SbmConfig) -> Result<Graph> {
    if cfg.nodes < 2 || cfg.classes == 0 || cfg.classes > cfg.nodes || cfg.feature_dim < cfg.classes {
        return Err(Error::Config(format!("invalid block model {cfg:?}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let labels: Vec<i64> = (0..cfg.nodes).map(|i| (i % cfg.classes) as i64).collect();
    let per_class = cfg.nodes as f64 / cfg.classes as f64;
    let p_in = (cfg.degree_in / (per_class - 1.0).max(1.0)).min(1.0);
    let p_out = (cfg.degree_out / (cfg.nodes as f64 - per_class).max(1.0)).min(1.0);
    let mut edges = Vec::new();
    for u in 0..cfg.nodes {
        for v in u + 1..cfg.nodes {
            let p = if labels[u] == labels[v] { p_in } else { p_out };
            if rng.random::<f64>() < p {
                edges.push((u, v));
            }
        }
    }
    let block = cfg.feature_dim / cfg.classes;
    let mut features = Matrix::zeros((cfg.nodes, cfg.feature_dim));
    for (i, mut row) in features.rows_mut().into_iter().enumerate() {
        let c = labels[i] as usize;
        for _ in 0..cfg.words_per_node {
            let f = if rng.random::<f64>() < cfg.feature_signal {
                c * block + rng.random_range(0..block)
            } else {
                rng.random_range(0..cfg.feature_dim)
            };
            row[f] = 1.0;
        }
    }
    Graph::new(features, edges, labels)
}

/// Writes `edges.txt`, `features.txt`, and `labels.txt` into `dir`.
pub fn write_graph(g: &Graph, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let write = |name: &str, body: String| -> Result<()> {
        let path = dir.join(name);
        let mut f = fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
        f.write_all(body.as_bytes()).map_err(|e| Error::io(&path, e))
    };
    let mut edges = String::new();
    for (u, v) in &g.edges {
        edges.push_str(&format!("{u} {v}\n"));
    }
    let mut features = String::new();
    for (i, row) in g.features.rows().into_iter().enumerate() {
        features.push_str(&i.to_string());
        for v in row {
            features.push(' ');
            features.push_str(&v.to_string());
        }
        features.push('\n');
    }
    let mut labels = String::new();
    for (i, l) in g.labels.iter().enumerate() {
        labels.push_str(&format!("{i} {l}\n"));
    }
    write("edges.txt", edges)?;
    write("features.txt", features)?;
    write("labels.txt", labels)
}
