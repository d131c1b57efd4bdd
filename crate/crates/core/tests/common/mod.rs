#![allow(dead_code)]

use curvgnn::manifold::{exp_origin, norm, TangentVec};
use curvgnn::{Graph, ManifoldKind, ManifoldPoint, SplitManifest, TrainConfig};
use curvgnn_autodiff::Matrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian_vec(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-1.0..1.0) * scale).collect()
}

pub fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize, scale: f64) -> Matrix {
    Matrix::from_shape_simple_fn((rows, cols), || rng.random_range(-1.0..1.0) * scale)
}

/// A point at a random origin-tangent offset of length at most `spread`.
pub fn random_point(rng: &mut ChaCha8Rng, kind: ManifoldKind, dim: usize, spread: f64) -> ManifoldPoint {
    let v = gaussian_vec(rng, dim, 1.0);
    let n = norm(&v).max(1e-12);
    let r = rng.random_range(0.0..spread);
    let v: Vec<f64> = v.iter().map(|x| x / n * r).collect();
    exp_origin(kind, &v).unwrap()
}

/// A tangent vector at `base` with manifold norm uniform in `[0, max_norm)`.
pub fn random_tangent(rng: &mut ChaCha8Rng, base: &ManifoldPoint, max_norm: f64) -> TangentVec {
    let len = base.coords().len();
    let raw = TangentVec::project(base.clone(), gaussian_vec(rng, len, 1.0)).unwrap();
    let n = raw.norm().max(1e-12);
    let r = rng.random_range(0.0..max_norm);
    let coords: Vec<f64> = raw.coords().iter().map(|x| x / n * r).collect();
    TangentVec::new(base.clone(), coords).unwrap()
}

/// Two triangles joined by the edge 2-3; classes follow the triangles.
pub fn toy_graph() -> Graph {
    let features = Matrix::from_shape_vec(
        (6, 4),
        vec![
            1.0, 0.0, 0.2, 0.0, //
            0.9, 0.1, 0.0, 0.0, //
            0.8, 0.0, 0.0, 0.3, //
            0.0, 0.2, 1.0, 0.0, //
            0.1, 0.0, 0.9, 0.1, //
            0.0, 0.0, 0.8, 1.0,
        ],
    )
    .unwrap();
    let edges = vec![(0, 1), (0, 2), (1, 2), (2, 3), (3, 4), (3, 5), (4, 5)];
    Graph::new(features, edges, vec![0, 0, 0, 1, 1, 1]).unwrap()
}

/// Every node in every mask, for overfitting checks.
pub fn toy_split() -> SplitManifest {
    let all: Vec<usize> = (0..6).collect();
    SplitManifest::Nc { seed: 0, train: all.clone(), val: all.clone(), test: all }
}

pub fn small_config() -> TrainConfig {
    TrainConfig {
        epochs: 30,
        patience: 30,
        hidden_dim: 8,
        coreset_size: 6,
        candidates: 40,
        kmeans_restarts: 1,
        dropout: 0.0,
        ..TrainConfig::default()
    }
}

pub fn assert_close(a: f64, b: f64, tol: f64) {
    assert!((a - b).abs() <= tol, "{a} vs {b} (tol {tol})");
}

pub fn assert_vec_close(a: &[f64], b: &[f64], tol: f64) {
    assert_eq!(a.len(), b.len());
    for (x, y) in a.iter().zip(b) {
        assert!((x - y).abs() <= tol, "{a:?} vs {b:?} (tol {tol})");
    }
}
