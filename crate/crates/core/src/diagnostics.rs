//! Stability of final embeddings across training seeds: per-run centroids,
//! their mean pairwise distance (offset), the mean distance of nodes to their
//! centroid (scale), and the ratio of the two.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use curvgnn_autodiff::Matrix;
use ndarray::Array1;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::projected_mean;
use crate::graph::{Graph, SplitManifest};
use crate::manifold::{dist_coords, ManifoldKind};
use crate::training::{train, Metric, TrainConfig};

/// Mean of the rows; for the hyperboloid and sphere the mean is projected back
/// onto the manifold. Euclidean kind covers the fused feature space.
pub fn embedding_centroid(x: &Matrix, kind: ManifoldKind) -> Result<Array1<f64>> {
    if x.nrows() == 0 {
        return Err(Error::Contract("centroid of an empty embedding".into()));
    }
    projected_mean(kind, x).ok_or_else(|| Error::Contract("centroid of an empty embedding".into()))
}

/// Distances for every unordered pair `(i, j)` with `i < j`.
pub fn pairwise_centroid_distances(centroids: &[Array1<f64>], kind: ManifoldKind) -> Vec<(usize, usize, f64)> {
    let mut out = Vec::new();
    for i in 0..centroids.len() {
        for j in i + 1..centroids.len() {
            let d = dist_coords(kind, centroids[i].as_slice().expect("contiguous"), centroids[j].as_slice().expect("contiguous"));
            out.push((i, j, d));
        }
    }
    out
}

/// Mean pairwise distance over the `T (T - 1) / 2` unordered pairs.
pub fn centroid_offset(centroids: &[Array1<f64>], kind: ManifoldKind) -> Result<f64> {
    if centroids.len() < 2 {
        return Err(Error::Contract(format!("offset needs at least 2 centroids, got {}", centroids.len())));
    }
    let pairs = pairwise_centroid_distances(centroids, kind);
    Ok(pairs.iter().map(|p| p.2).sum::<f64>() / pairs.len() as f64)
}

/// Mean distance from each row to `centroid`.
pub fn embedding_scale(x: &Matrix, centroid: &Array1<f64>, kind: ManifoldKind) -> Result<f64> {
    if x.nrows() == 0 {
        return Err(Error::Contract("scale of an empty embedding".into()));
    }
    if x.ncols() != centroid.len() {
        return Err(Error::DimensionMismatch(format!("rows of width {} vs centroid of width {}", x.ncols(), centroid.len())));
    }
    let c = centroid.as_slice().expect("contiguous");
    let total: f64 = x.rows().into_iter().map(|r| dist_coords(kind, &r.to_vec(), c)).sum();
    Ok(total / x.nrows() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailedRun {
    pub seed: u64,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    pub model_tag: String,
    /// Distance used for centroids: `euclidean`, `hyperbolic` or `spherical`.
    pub space: String,
    /// Number of successful runs.
    pub runs: usize,
    pub seeds: Vec<u64>,
    /// Mean over runs of the mean node-to-centroid distance.
    pub scale: Option<f64>,
    pub offset: Option<f64>,
    pub normalized_offset: Option<f64>,
    pub centroids: Vec<Vec<f64>>,
    pub metric_name: Option<Metric>,
    pub metrics: Vec<f64>,
    pub metric_mean: Option<f64>,
    pub metric_std: Option<f64>,
    pub complete: bool,
    pub failed: Vec<FailedRun>,
}

impl StabilityReport {
    /// `i,j,distance` rows for every pair of run centroids.
    pub fn pairs_csv(&self) -> String {
        let kind = match self.space.as_str() {
            "hyperbolic" => ManifoldKind::Hyperbolic,
            "spherical" => ManifoldKind::Spherical,
            _ => ManifoldKind::Euclidean,
        };
        let centroids: Vec<Array1<f64>> = self.centroids.iter().map(|c| Array1::from(c.clone())).collect();
        let mut out = String::from("i,j,distance\n");
        for (i, j, d) in pairwise_centroid_distances(&centroids, kind) {
            out.push_str(&format!("{},{},{d}\n", self.seeds[i], self.seeds[j]));
        }
        out
    }
}

fn mean_std(values: &[f64]) -> (Option<f64>, Option<f64>) {
    if values.is_empty() {
        return (None, None);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let std = if values.len() > 1 {
        (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    (Some(mean), Some(std))
}

/// Assembles a report from per-run embeddings measured with `kind`'s distance.
pub fn stability_report(
    model_tag: &str,
    kind: ManifoldKind,
    seeds: &[u64],
    embeddings: &[Matrix],
    metric_name: Option<Metric>,
    metrics: &[f64],
    failed: Vec<FailedRun>,
) -> Result<StabilityReport> {
    if seeds.len() != embeddings.len() {
        return Err(Error::Contract(format!("{} seeds for {} embeddings", seeds.len(), embeddings.len())));
    }
    let centroids = embeddings.iter().map(|x| embedding_centroid(x, kind)).collect::<Result<Vec<_>>>()?;
    let scales = embeddings
        .iter()
        .zip(&centroids)
        .map(|(x, c)| embedding_scale(x, c, kind))
        .collect::<Result<Vec<_>>>()?;
    let scale = mean_std(&scales).0;
    let offset = if centroids.len() >= 2 { Some(centroid_offset(&centroids, kind)?) } else { None };
    let normalized_offset = match (offset, scale) {
        (Some(o), Some(s)) if s > 0.0 => Some(o / s),
        _ => None,
    };
    let (metric_mean, metric_std) = mean_std(metrics);
    Ok(StabilityReport {
        model_tag: model_tag.to_string(),
        space: kind.name().to_string(),
        runs: embeddings.len(),
        seeds: seeds.to_vec(),
        scale,
        offset,
        normalized_offset,
        centroids: centroids.iter().map(|c| c.to_vec()).collect(),
        metric_name,
        metrics: metrics.to_vec(),
        metric_mean,
        metric_std,
        complete: failed.is_empty() && embeddings.len() >= 2,
        failed,
    })
}

/// Trains once per seed on a fixed split and measures embedding stability.
/// Multi-manifold configurations are measured on the fused representation with
/// Euclidean distance; single-manifold ones on that manifold's final embedding.
/// Runs execute on up to `jobs` threads; results are assembled in seed order.
pub fn seed_sweep(g: &Graph, split: &SplitManifest, cfg: &TrainConfig, seeds: &[u64], jobs: usize) -> Result<StabilityReport> {
    if seeds.len() < 2 {
        return Err(Error::Contract(format!("a seed sweep needs at least 2 seeds, got {}", seeds.len())));
    }
    let single = cfg.manifolds.len() == 1;
    let kind = if single { cfg.manifolds.kinds()[0] } else { ManifoldKind::Euclidean };
    type RunOutput = (Matrix, f64, Metric);
    let run = |seed: u64| -> Result<RunOutput> {
        let cfg = TrainConfig { seed, ..cfg.clone() };
        let (report, checkpoint) = train(g, split, &cfg)?;
        let emb = checkpoint.embed(g)?;
        let x = if single { emb.manifolds.into_iter().next().expect("one manifold").1 } else { emb.fused };
        Ok((x, report.test_metric, report.metric_name))
    };
    let slots: Vec<Mutex<Option<Result<RunOutput>>>> = seeds.iter().map(|_| Mutex::new(None)).collect();
    let next = AtomicUsize::new(0);
    std::thread::scope(|scope| {
        for _ in 0..jobs.clamp(1, seeds.len()) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                if i >= seeds.len() {
                    break;
                }
                let result = run(seeds[i]);
                *slots[i].lock().expect("slot lock") = Some(result);
            });
        }
    });
    let mut ok_seeds = Vec::new();
    let mut embeddings = Vec::new();
    let mut metrics = Vec::new();
    let mut metric_name = None;
    let mut failed = Vec::new();
    for (slot, &seed) in slots.into_iter().zip(seeds) {
        match slot.into_inner().expect("slot lock").expect("every seed ran") {
            Ok((x, m, name)) => {
                ok_seeds.push(seed);
                embeddings.push(x);
                metrics.push(m);
                metric_name = Some(name);
            }
            Err(e @ (Error::Config(_) | Error::Split(_))) => return Err(e),
            Err(e) => failed.push(FailedRun { seed, error: e.to_string() }),
        }
    }
    stability_report(&cfg.manifolds.to_string(), kind, &ok_seeds, &embeddings, metric_name, &metrics, failed)
}
