//! Frozen landmark sets (KMeans centroids of random candidates) and the
//! distance features computed against them.

use std::sync::Arc;

use curvgnn_autodiff::{Matrix, Result as TensorResult, Var};
use ndarray::Axis;
use rand::seq::index::sample;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::centroid_distance;
use crate::manifold::{exp_origin, ManifoldKind};
use crate::rng::{stream, Stream};
use crate::serde_matrix;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoresetConfig {
    /// Number of random candidate points.
    pub candidates: usize,
    /// Number of centroids kept.
    pub size: usize,
    pub seed: u64,
    pub max_iterations: usize,
    pub tolerance: f64,
    /// Independent Lloyd runs; the lowest-cost result wins.
    pub restarts: usize,
}

impl Default for CoresetConfig {
    fn default() -> Self {
        Self { candidates: 1000, size: 100, seed: 0, max_iterations: 100, tolerance: 1e-6, restarts: 10 }
    }
}

impl CoresetConfig {
    pub fn validate(&self) -> Result<()> {
        if self.size == 0 || self.size > self.candidates {
            return Err(Error::Config(format!("coreset size {} must be in 1..={}", self.size, self.candidates)));
        }
        if !(self.tolerance > 0.0) {
            return Err(Error::Config(format!("kmeans tolerance {} must be positive", self.tolerance)));
        }
        if self.restarts == 0 {
            return Err(Error::Config("kmeans restarts must be at least 1".into()));
        }
        Ok(())
    }
}

/// `n x dim` i.i.d. standard normals scaled by `1/sqrt(dim)`.
pub fn sample_candidates(n: usize, dim: usize, rng: &mut ChaCha8Rng) -> Matrix {
    let scale = 1.0 / (dim as f64).sqrt();
    Matrix::from_shape_simple_fn((n, dim), || {
        let z: f64 = StandardNormal.sample(rng);
        z * scale
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansResult {
    /// `k x dim`.
    pub centroids: Matrix,
    pub assignment: Vec<usize>,
    /// Sum of squared distances to the assigned centroid.
    pub cost: f64,
    pub iterations: usize,
    /// Cost after each assignment step of the winning run.
    pub cost_history: Vec<f64>,
    /// Cost histories of every restart.
    pub all_histories: Vec<Vec<f64>>,
}

fn sq_dist(a: ndarray::ArrayView1<f64>, b: ndarray::ArrayView1<f64>) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn assign(points: &Matrix, centroids: &Matrix, assignment: &mut [usize]) -> f64 {
    let mut cost = 0.0;
    for (i, p) in points.rows().into_iter().enumerate() {
        let mut best = (f64::INFINITY, 0);
        for (j, c) in centroids.rows().into_iter().enumerate() {
            let d = sq_dist(p, c);
            if d < best.0 {
                best = (d, j);
            }
        }
        assignment[i] = best.1;
        cost += best.0;
    }
    cost
}

fn distinct_rows(points: &Matrix) -> Vec<usize> {
    let mut keep: Vec<usize> = Vec::new();
    for (i, row) in points.rows().into_iter().enumerate() {
        if !keep.iter().any(|&j| points.row(j) == row) {
            keep.push(i);
        }
    }
    keep
}

/// Inputs with at most this many distinct k-subsets are seeded from every subset.
pub const EXHAUSTIVE_INIT_LIMIT: usize = 256;

fn binomial_capped(n: usize, k: usize, cap: usize) -> usize {
    let mut c: usize = 1;
    for i in 0..k.min(n - k) {
        c = c * (n - i) / (i + 1);
        if c > cap {
            return cap + 1;
        }
    }
    c
}

fn subsets(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut idx: Vec<usize> = (0..k).collect();
    loop {
        out.push(idx.clone());
        let Some(i) = (0..k).rev().find(|&i| idx[i] < n - k + i) else {
            return out;
        };
        idx[i] += 1;
        for j in i + 1..k {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

fn lloyd_once(points: &Matrix, init: &[usize], max_iterations: usize, tolerance: f64) -> KMeansResult {
    let n = points.nrows();
    let k = init.len();
    let mut centroids = points.select(Axis(0), init);
    let mut assignment = vec![0; n];
    let mut history = Vec::new();
    let mut iterations = 0;
    loop {
        let cost = assign(points, &centroids, &mut assignment);
        history.push(cost);
        if iterations >= max_iterations {
            break;
        }
        iterations += 1;
        let mut sums = Matrix::zeros(centroids.dim());
        let mut counts = vec![0usize; k];
        for (i, p) in points.rows().into_iter().enumerate() {
            sums.row_mut(assignment[i]).scaled_add(1.0, &p);
            counts[assignment[i]] += 1;
        }
        let mut next = centroids.clone();
        let mut taken = vec![false; n];
        for j in 0..k {
            if counts[j] > 0 {
                next.row_mut(j).assign(&sums.row(j).mapv(|v| v / counts[j] as f64));
            } else {
                // Re-seed with the point farthest from its current centroid.
                let far = (0..n)
                    .filter(|&i| !taken[i])
                    .map(|i| (sq_dist(points.row(i), centroids.row(assignment[i])), i))
                    .fold((f64::NEG_INFINITY, 0), |best, cur| if cur.0 > best.0 { cur } else { best });
                taken[far.1] = true;
                next.row_mut(j).assign(&points.row(far.1));
            }
        }
        let shift = centroids
            .rows()
            .into_iter()
            .zip(next.rows())
            .map(|(a, b)| sq_dist(a, b).sqrt())
            .fold(0.0, f64::max);
        centroids = next;
        if shift < tolerance {
            let cost = assign(points, &centroids, &mut assignment);
            history.push(cost);
            break;
        }
    }
    let cost = *history.last().expect("at least one assignment");
    KMeansResult { centroids, assignment, cost, iterations, cost_history: history, all_histories: Vec::new() }
}

/// Lloyd's algorithm in Euclidean coordinates, best of `restarts` random
/// initializations. Small inputs are instead seeded from every k-subset of
/// distinct points (see [`EXHAUSTIVE_INIT_LIMIT`]).
pub fn lloyd_kmeans(points: &Matrix, k: usize, max_iterations: usize, tolerance: f64, restarts: usize, rng: &mut ChaCha8Rng) -> Result<KMeansResult> {
    let distinct = distinct_rows(points);
    if k == 0 || k > distinct.len() {
        return Err(Error::Infeasible(format!("k = {k} with {} distinct points", distinct.len())));
    }
    let mut best: Option<KMeansResult> = None;
    let inits: Vec<Vec<usize>> = if binomial_capped(distinct.len(), k, EXHAUSTIVE_INIT_LIMIT) <= EXHAUSTIVE_INIT_LIMIT {
        subsets(distinct.len(), k)
    } else {
        (0..restarts.max(1)).map(|_| sample(rng, distinct.len(), k).into_vec()).collect()
    };
    let mut histories = Vec::with_capacity(inits.len());
    for init in inits {
        let init: Vec<usize> = init.into_iter().map(|i| distinct[i]).collect();
        let run = lloyd_once(points, &init, max_iterations, tolerance);
        histories.push(run.cost_history.clone());
        if best.as_ref().is_none_or(|b| run.cost < b.cost) {
            best = Some(run);
        }
    }
    let mut best = best.expect("at least one restart");
    best.all_histories = histories;
    Ok(best)
}

/// Per-manifold landmark points; frozen once built.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoresetAtlas {
    pub seed: u64,
    pub k: usize,
    pub n: usize,
    pub dim: usize,
    /// `k x dim`.
    #[serde(with = "serde_matrix::arc")]
    pub euclidean: Arc<Matrix>,
    /// `k x (dim + 1)` hyperboloid points.
    #[serde(with = "serde_matrix::arc")]
    pub hyperbolic: Arc<Matrix>,
    /// `k x (dim + 1)` sphere points.
    #[serde(with = "serde_matrix::arc")]
    pub spherical: Arc<Matrix>,
}

impl CoresetAtlas {
    pub fn centroids(&self, kind: ManifoldKind) -> &Arc<Matrix> {
        match kind {
            ManifoldKind::Euclidean => &self.euclidean,
            ManifoldKind::Hyperbolic => &self.hyperbolic,
            ManifoldKind::Spherical => &self.spherical,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("atlas serializes")
    }
}

/// One candidate set and one KMeans run; centroids are read as origin tangent
/// vectors and pushed onto each manifold by the origin exp map.
pub fn build_atlas(cfg: &CoresetConfig, dim: usize) -> Result<CoresetAtlas> {
    cfg.validate()?;
    if dim == 0 {
        return Err(Error::InvalidDimension("atlas dimension must be at least 1".into()));
    }
    let mut rng = stream(cfg.seed, Stream::Atlas);
    let candidates = sample_candidates(cfg.candidates, dim, &mut rng);
    let km = lloyd_kmeans(&candidates, cfg.size, cfg.max_iterations, cfg.tolerance, cfg.restarts, &mut rng)?;
    let lift = |kind: ManifoldKind| -> Result<Matrix> {
        let mut out = Matrix::zeros((cfg.size, dim + 1));
        for (row, mut o) in km.centroids.rows().into_iter().zip(out.rows_mut()) {
            let p = exp_origin(kind, row.as_slice().expect("standard layout"))?;
            o.assign(&ndarray::ArrayView1::from(p.coords()));
        }
        Ok(out)
    };
    Ok(CoresetAtlas {
        seed: cfg.seed,
        k: cfg.size,
        n: cfg.candidates,
        dim,
        hyperbolic: Arc::new(lift(ManifoldKind::Hyperbolic)?),
        spherical: Arc::new(lift(ManifoldKind::Spherical)?),
        euclidean: Arc::new(km.centroids),
    })
}

/// `n x k` matrix of manifold distances from each embedding row to each centroid.
pub fn distance_features<'t>(kind: ManifoldKind, embeddings: Var<'t>, atlas: &CoresetAtlas) -> TensorResult<Var<'t>> {
    centroid_distance(kind, embeddings, Arc::clone(atlas.centroids(kind)))
}
