//! Graph neural networks that embed nodes on Euclidean, hyperbolic and
//! spherical manifolds at once, fuse the three branches layer by layer, and
//! read out through distances to frozen coreset landmarks.
//!
//! ```
//! use curvgnn::{make_nc_split, stochastic_block_model, train, SbmConfig, SplitPolicy, TrainConfig};
//!
//! let g = stochastic_block_model(&SbmConfig { nodes: 60, feature_dim: 12, ..SbmConfig::default() }).unwrap();
//! let split = make_nc_split(&g, SplitPolicy::Fractional { train: 0.5, val: 0.2 }, 0).unwrap();
//! let cfg = TrainConfig { epochs: 3, hidden_dim: 8, coreset_size: 4, candidates: 20, ..TrainConfig::default() };
//! let (report, checkpoint) = train(&g, &split, &cfg).unwrap();
//! assert_eq!(checkpoint.evaluate(&g).unwrap().test, report.test_metric);
//! ```

pub mod coreset;
pub mod diagnostics;
pub mod error;
pub mod geometry;
pub mod graph;
pub mod heads;
pub mod manifold;
pub mod metrics;
pub mod model;
pub mod rng;
pub mod serde_matrix;
pub mod synthetic;
pub mod training;

pub use coreset::{build_atlas, distance_features, lloyd_kmeans, sample_candidates, CoresetAtlas, CoresetConfig, KMeansResult};
pub use diagnostics::{
    centroid_offset, embedding_centroid, embedding_scale, pairwise_centroid_distances, seed_sweep, stability_report, FailedRun,
    StabilityReport,
};
pub use error::{Error, Result};
pub use graph::{
    load_graph, make_lp_split, make_nc_split, normalize_adjacency, sample_non_edges, Edge, Graph, LoadStats, NormalizedAdjacency,
    SplitManifest, SplitPolicy, Task,
};
pub use heads::{attention_fuse, fermi_dirac, lp_loss, lp_probabilities, nc_log_probs, nc_loss};
pub use manifold::{dist, exp_map, log_map, mobius_add, origin, ManifoldKind, ManifoldPoint, TangentVec};
pub use metrics::{accuracy, f1_binary, roc_auc};
pub use model::{reference_gcn_forward, ManifoldSet, ModelConfig, ModelParams};
pub use rng::{stream, Stream};
pub use synthetic::{stochastic_block_model, write_graph, SbmConfig};
pub use training::{train, Checkpoint, Embeddings, EpochRecord, Evaluation, Metric, Parameters, Prepared, RunReport, TrainConfig};
