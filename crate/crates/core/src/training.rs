//! Full-graph training for node classification and link prediction, early
//! stopping on the validation metric, and checkpoints that re-evaluate exactly.

use std::collections::{BTreeMap, HashSet};
use std::sync::Arc;
use std::time::Instant;

use curvgnn_autodiff::{AdamConfig, CsrMatrix, Matrix, OptimizerState, Tape, TensorError, Var};
use serde::{Deserialize, Serialize};

use crate::coreset::{build_atlas, distance_features, CoresetAtlas, CoresetConfig};
use crate::error::{Error, Result};
use crate::graph::{normalize_adjacency, sample_non_edges, Edge, Graph, SplitManifest, Task};
use crate::heads::{attention_fuse, fermi_dirac, lp_loss, nc_log_probs, nc_loss, DEFAULT_FERMI_R, DEFAULT_FERMI_T};
use crate::manifold::ManifoldKind;
use crate::metrics::{accuracy, argmax, f1_binary, roc_auc};
use crate::model::{forward, glorot, Dropout, ManifoldSet, ModelConfig, ModelParams, ModelVars, State};
use crate::rng::{stream, Stream};
use crate::serde_matrix;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub task: Task,
    pub epochs: usize,
    pub patience: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub dropout: f64,
    pub hidden_dim: usize,
    pub num_layers: usize,
    pub coreset_size: usize,
    pub candidates: usize,
    pub kmeans_iterations: usize,
    pub kmeans_restarts: usize,
    pub seed: u64,
    pub fermi_r: f64,
    pub fermi_t: f64,
    pub manifolds: ManifoldSet,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            task: Task::Nc,
            epochs: 500,
            patience: 100,
            learning_rate: 0.01,
            weight_decay: 5e-4,
            dropout: 0.5,
            hidden_dim: 100,
            num_layers: 2,
            coreset_size: 100,
            candidates: 1000,
            kmeans_iterations: 100,
            kmeans_restarts: 3,
            seed: 0,
            fermi_r: DEFAULT_FERMI_R,
            fermi_t: DEFAULT_FERMI_T,
            manifolds: ManifoldSet::EHS,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |field: &str, why: String| Err(Error::Config(format!("{field}: {why}")));
        if self.epochs == 0 {
            return fail("epochs", "must be at least 1".into());
        }
        if self.patience == 0 {
            return fail("patience", "must be at least 1".into());
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return fail("learning_rate", format!("{} must be positive", self.learning_rate));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return fail("weight_decay", format!("{} must be non-negative", self.weight_decay));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return fail("dropout", format!("{} must be in [0, 1)", self.dropout));
        }
        if self.hidden_dim == 0 {
            return fail("hidden_dim", "must be at least 1".into());
        }
        if !(self.fermi_t > 0.0 && self.fermi_t.is_finite()) || !self.fermi_r.is_finite() {
            return fail("fermi_t", format!("need finite r and t > 0, got r = {} t = {}", self.fermi_r, self.fermi_t));
        }
        self.coreset().validate()
    }

    pub fn coreset(&self) -> CoresetConfig {
        CoresetConfig {
            candidates: self.candidates,
            size: self.coreset_size,
            seed: self.seed,
            max_iterations: self.kmeans_iterations,
            tolerance: 1e-6,
            restarts: self.kmeans_restarts,
        }
    }

    pub fn model(&self, in_dim: usize) -> ModelConfig {
        ModelConfig { in_dim, hidden_dim: self.hidden_dim, num_layers: self.num_layers, dropout: self.dropout, manifolds: self.manifolds }
    }

    fn adam(&self) -> AdamConfig {
        AdamConfig { learning_rate: self.learning_rate, weight_decay: self.weight_decay, ..AdamConfig::default() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Accuracy,
    F1Binary,
    RocAuc,
}

impl Metric {
    pub fn name(self) -> &'static str {
        match self {
            Metric::Accuracy => "accuracy",
            Metric::F1Binary => "f1_binary",
            Metric::RocAuc => "roc_auc",
        }
    }

    pub fn for_task(task: Task, num_classes: usize) -> Self {
        match task {
            Task::Lp => Metric::RocAuc,
            Task::Nc if num_classes == 2 => Metric::F1Binary,
            Task::Nc => Metric::Accuracy,
        }
    }
}

/// All trainable matrices. `nc_head` is `classes x k` for node classification
/// and empty for link prediction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Parameters {
    pub model: ModelParams,
    #[serde(with = "serde_matrix")]
    pub nc_head: Matrix,
}

impl Parameters {
    fn flatten(&self) -> Vec<Matrix> {
        let mut out = self.model.flatten();
        out.push(self.nc_head.clone());
        out
    }

    fn assign(&mut self, values: &[Matrix]) -> Result<()> {
        let (head, model) = values.split_last().ok_or_else(|| Error::Contract("no parameters".into()))?;
        self.model.assign(model)?;
        self.nc_head = head.clone();
        Ok(())
    }

    pub fn names(&self) -> Vec<String> {
        let mut out = self.model.names();
        out.push("nc_head".into());
        out
    }
}

/// Sparse features and the normalized message-passing matrix. For link
/// prediction, messages flow only along training edges.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub features: Arc<CsrMatrix>,
    pub adjacency: Arc<CsrMatrix>,
}

impl Prepared {
    pub fn new(g: &Graph, split: &SplitManifest) -> Result<Self> {
        let edges: &[Edge] = match split {
            SplitManifest::Nc { .. } => &g.edges,
            SplitManifest::Lp { train, .. } => train,
        };
        let adjacency = normalize_adjacency(g.num_nodes, edges)?.matrix;
        Ok(Self { features: Arc::new(CsrMatrix::from_dense(&g.features)), adjacency })
    }
}

/// Final per-manifold states and the fused `n x k` representation.
pub fn fused_embedding<'t>(
    prep: &Prepared,
    vars: &ModelVars<'t>,
    manifolds: ManifoldSet,
    atlas: &CoresetAtlas,
    dropout: Option<&mut Dropout<'_>>,
) -> Result<(State<'t>, Var<'t>)> {
    let state = forward(&prep.features, &prep.adjacency, vars, manifolds, dropout)?;
    let mut parts = Vec::new();
    for kind in manifolds.kinds() {
        let x = state.get(kind).expect("active manifold has a state");
        parts.push(distance_features(kind, x, atlas)?);
    }
    Ok((state, attention_fuse(&parts)?))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_metric: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub metric_name: Metric,
    pub best_val_metric: f64,
    /// Measured with the parameters of the best validation epoch.
    pub test_metric: f64,
    /// `{metric_name: test_metric}`.
    pub metrics: BTreeMap<String, f64>,
    pub best_epoch: usize,
    pub epochs_run: usize,
    pub epoch_curve: Vec<EpochRecord>,
    pub wall_clock_seconds: f64,
    pub seed: u64,
    pub config: TrainConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub config: TrainConfig,
    pub num_nodes: usize,
    pub feature_dim: usize,
    pub num_classes: usize,
    pub metric_name: Metric,
    pub best_epoch: usize,
    pub val_metric: f64,
    pub test_metric: f64,
    pub params: Parameters,
    pub atlas: CoresetAtlas,
    pub split: SplitManifest,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub metric_name: Metric,
    pub val: f64,
    pub test: f64,
}

/// Embeddings of a trained model, without dropout.
#[derive(Debug, Clone, PartialEq)]
pub struct Embeddings {
    pub fused: Matrix,
    pub manifolds: Vec<(ManifoldKind, Matrix)>,
}

struct Evaluator<'a> {
    g: &'a Graph,
    prep: &'a Prepared,
    atlas: &'a CoresetAtlas,
    cfg: &'a TrainConfig,
    split: &'a SplitManifest,
    metric: Metric,
}

impl Evaluator<'_> {
    fn embed(&self, params: &Parameters) -> Result<Embeddings> {
        let tape = Tape::new();
        let vars = params.model.to_vars(&tape, false);
        let (state, fused) = fused_embedding(self.prep, &vars, self.cfg.manifolds, self.atlas, None)?;
        Ok(Embeddings { fused: fused.value()?.as_ref().clone(), manifolds: state.values()? })
    }

    fn predictions(&self, params: &Parameters, fused: &Matrix) -> Vec<usize> {
        let logits = fused.dot(&params.nc_head.t());
        logits.rows().into_iter().map(|r| argmax(&r.to_vec())).collect()
    }

    fn score(&self, params: &Parameters, fused: &Matrix, nodes: &[usize], pos: &[Edge], neg: &[Edge]) -> Result<f64> {
        match self.metric {
            Metric::Accuracy => accuracy(&self.predictions(params, fused), &self.g.labels, nodes),
            Metric::F1Binary => f1_binary(&self.predictions(params, fused), &self.g.labels, nodes),
            Metric::RocAuc => {
                let prob = |&(u, v): &Edge| {
                    let d2: f64 = fused.row(u).iter().zip(fused.row(v)).map(|(a, b)| (a - b) * (a - b)).sum();
                    fermi_dirac(d2, self.cfg.fermi_r, self.cfg.fermi_t)
                };
                let scores: Vec<f64> = pos.iter().chain(neg).map(prob).collect();
                let labels: Vec<bool> = pos.iter().map(|_| true).chain(neg.iter().map(|_| false)).collect();
                roc_auc(&scores, &labels)
            }
        }
    }

    fn evaluate(&self, params: &Parameters) -> Result<Evaluation> {
        let emb = self.embed(params)?;
        if emb.fused.iter().any(|v| !v.is_finite()) {
            return Err(Error::UndefinedMetric("non-finite embedding".into()));
        }
        let (val, test) = match self.split {
            SplitManifest::Nc { val, test, .. } => {
                (self.score(params, &emb.fused, val, &[], &[])?, self.score(params, &emb.fused, test, &[], &[])?)
            }
            SplitManifest::Lp { val, test, neg_val, neg_test, .. } => {
                (self.score(params, &emb.fused, &[], val, neg_val)?, self.score(params, &emb.fused, &[], test, neg_test)?)
            }
        };
        Ok(Evaluation { metric_name: self.metric, val, test })
    }
}

fn check_inputs(g: &Graph, split: &SplitManifest, cfg: &TrainConfig) -> Result<()> {
    cfg.validate()?;
    if split.task() != cfg.task {
        return Err(Error::Config(format!("task is {:?} but the split is for {:?}", cfg.task, split.task())));
    }
    let in_range = |i: usize| i < g.num_nodes;
    let ok = match split {
        SplitManifest::Nc { train, val, test, .. } => {
            if g.num_classes < 2 {
                return Err(Error::Split(format!("node classification needs at least 2 classes, got {}", g.num_classes)));
            }
            if train.is_empty() || val.is_empty() || test.is_empty() {
                return Err(Error::Split("train, val and test masks must be nonempty".into()));
            }
            train.iter().chain(val).chain(test).all(|&i| in_range(i) && g.labels[i] >= 0)
        }
        SplitManifest::Lp { train, val, test, neg_val, neg_test, .. } => {
            if train.is_empty() || val.is_empty() || test.is_empty() || neg_val.is_empty() || neg_test.is_empty() {
                return Err(Error::Split("every edge split must be nonempty".into()));
            }
            train.iter().chain(val).chain(test).chain(neg_val).chain(neg_test).all(|&(u, v)| in_range(u) && in_range(v))
        }
    };
    if !ok {
        return Err(Error::Split(format!("split references nodes outside the {}-node graph or unlabeled nodes", g.num_nodes)));
    }
    Ok(())
}

fn diverged(epoch: usize, err: Error) -> Error {
    match err {
        Error::Tensor(TensorError::Domain { .. } | TensorError::NonFinite { .. }) | Error::UndefinedMetric(_) => {
            Error::Divergence { epoch, detail: err.to_string() }
        }
        other => other,
    }
}

/// Trains one model. Returns the report and the best-validation checkpoint.
pub fn train(g: &Graph, split: &SplitManifest, cfg: &TrainConfig) -> Result<(RunReport, Checkpoint)> {
    check_inputs(g, split, cfg)?;
    let start = Instant::now();
    let prep = Prepared::new(g, split)?;
    let atlas = build_atlas(&cfg.coreset(), cfg.hidden_dim)?;
    let metric = Metric::for_task(cfg.task, g.num_classes);
    let eval = Evaluator { g, prep: &prep, atlas: &atlas, cfg, split, metric };

    let mut init_rng = stream(cfg.seed, Stream::Init);
    let model = ModelParams::init(&cfg.model(g.feature_dim()), &mut init_rng);
    let nc_head = match cfg.task {
        Task::Nc => glorot(g.num_classes, cfg.coreset_size, &mut init_rng),
        Task::Lp => Matrix::zeros((0, 0)),
    };
    let mut params = Parameters { model, nc_head };
    let mut flat = params.flatten();
    let mut optimizer = OptimizerState::new(cfg.adam(), &flat);
    let mut dropout_rng = stream(cfg.seed, Stream::Dropout);
    let mut negative_rng = stream(cfg.seed, Stream::TrainNegatives);
    let all_edges: HashSet<Edge> = g.edge_set();

    let mut best: Option<(Evaluation, usize, Parameters)> = None;
    let mut curve = Vec::new();
    let mut stale = 0;
    for epoch in 1..=cfg.epochs {
        let mut step = || -> Result<f64> {
            let tape = Tape::new();
            let vars = params.model.to_vars(&tape, true);
            let head = tape.param(params.nc_head.clone());
            let mut dropout = Dropout { rate: cfg.dropout, rng: &mut dropout_rng };
            let (_, fused) = fused_embedding(&prep, &vars, cfg.manifolds, &atlas, Some(&mut dropout))?;
            let loss = match split {
                SplitManifest::Nc { train, .. } => nc_loss(nc_log_probs(fused, head)?, &g.labels, train)?,
                SplitManifest::Lp { train, .. } => {
                    let negatives = sample_non_edges(g.num_nodes, &all_edges, train.len(), &mut negative_rng)?;
                    lp_loss(fused, train, &negatives, cfg.fermi_r, cfg.fermi_t)?
                }
            };
            let value = loss.scalar_value()?;
            if !value.is_finite() {
                return Err(Error::UndefinedMetric(format!("loss is {value}")));
            }
            let grads = tape.backward(loss)?;
            let mut all = vars.gradients(&grads);
            all.push(grads.get(&head).cloned());
            let all: Vec<Option<Matrix>> = all
                .into_iter()
                .zip(&flat)
                .map(|(g, p)| Some(g.unwrap_or_else(|| Matrix::zeros(p.dim()))))
                .collect();
            if let Some(i) = all.iter().position(|g| g.as_ref().is_some_and(|g| g.iter().any(|v| !v.is_finite()))) {
                return Err(Error::UndefinedMetric(format!("non-finite gradient for {}", params.names()[i])));
            }
            optimizer.step(&mut flat, &all)?;
            Ok(value)
        };
        let loss = step().map_err(|e| diverged(epoch, e))?;
        params.assign(&flat)?;
        let result = eval.evaluate(&params).map_err(|e| diverged(epoch, e))?;
        curve.push(EpochRecord { epoch, train_loss: loss, val_metric: result.val });
        if best.as_ref().is_none_or(|(b, _, _)| result.val > b.val) {
            best = Some((result, epoch, params.clone()));
            stale = 0;
        } else {
            stale += 1;
            if stale >= cfg.patience {
                break;
            }
        }
    }
    let (result, best_epoch, best_params) = best.expect("at least one epoch");
    let report = RunReport {
        metric_name: metric,
        best_val_metric: result.val,
        test_metric: result.test,
        metrics: BTreeMap::from([(metric.name().to_string(), result.test)]),
        best_epoch,
        epochs_run: curve.len(),
        epoch_curve: curve,
        wall_clock_seconds: start.elapsed().as_secs_f64(),
        seed: cfg.seed,
        config: cfg.clone(),
    };
    let checkpoint = Checkpoint {
        config: cfg.clone(),
        num_nodes: g.num_nodes,
        feature_dim: g.feature_dim(),
        num_classes: g.num_classes,
        metric_name: metric,
        best_epoch,
        val_metric: result.val,
        test_metric: result.test,
        params: best_params,
        atlas,
        split: split.clone(),
    };
    Ok((report, checkpoint))
}

impl Checkpoint {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("checkpoint serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Contract(format!("bad checkpoint: {e}")))
    }

    /// Rejects graphs whose shape differs from the training graph.
    pub fn check_graph(&self, g: &Graph) -> Result<()> {
        if g.num_nodes != self.num_nodes || g.feature_dim() != self.feature_dim || g.num_classes != self.num_classes {
            return Err(Error::DimensionMismatch(format!(
                "checkpoint expects {} nodes, {} features, {} classes; graph has {}, {}, {}",
                self.num_nodes,
                self.feature_dim,
                self.num_classes,
                g.num_nodes,
                g.feature_dim(),
                g.num_classes
            )));
        }
        let p = &self.params.model;
        if p.lift_weight.nrows() != self.feature_dim || self.atlas.dim != self.config.hidden_dim {
            return Err(Error::DimensionMismatch("checkpoint parameters disagree with its recorded dimensions".into()));
        }
        Ok(())
    }

    fn with_evaluator<T>(&self, g: &Graph, f: impl FnOnce(&Evaluator<'_>) -> Result<T>) -> Result<T> {
        self.check_graph(g)?;
        check_inputs(g, &self.split, &self.config)?;
        let prep = Prepared::new(g, &self.split)?;
        let eval = Evaluator { g, prep: &prep, atlas: &self.atlas, cfg: &self.config, split: &self.split, metric: self.metric_name };
        f(&eval)
    }

    /// Validation and test metrics of the stored parameters on the stored split.
    pub fn evaluate(&self, g: &Graph) -> Result<Evaluation> {
        self.with_evaluator(g, |e| e.evaluate(&self.params))
    }

    pub fn embed(&self, g: &Graph) -> Result<Embeddings> {
        self.with_evaluator(g, |e| e.embed(&self.params))
    }

    /// Predicted class per node (node classification only).
    pub fn predict(&self, g: &Graph) -> Result<Vec<usize>> {
        if self.config.task != Task::Nc {
            return Err(Error::Contract("predictions exist only for node classification".into()));
        }
        self.with_evaluator(g, |e| Ok(e.predictions(&self.params, &e.embed(&self.params)?.fused)))
    }
}
