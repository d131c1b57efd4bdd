//! Run configuration file: dataset paths, split, training settings and the
//! manifold subset. Paths are resolved relative to the file's directory.

use std::path::{Path, PathBuf};

use curvgnn::{load_graph, make_lp_split, make_nc_split, Error, Graph, LoadStats, ManifoldSet, SplitManifest, SplitPolicy, Task, TrainConfig};
use serde::Deserialize;
use serde_json::Value;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetPaths {
    pub edges: PathBuf,
    pub features: PathBuf,
    pub labels: PathBuf,
    #[serde(default = "yes")]
    pub normalize_features: bool,
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitSection {
    #[serde(default = "default_policy")]
    pub policy: SplitPolicy,
    #[serde(default)]
    pub seed: u64,
    /// A manifest written by `preprocess`; takes precedence over `policy`.
    #[serde(default)]
    pub file: Option<PathBuf>,
}

fn default_policy() -> SplitPolicy {
    SplitPolicy::StandardPlanetoid
}

impl Default for SplitSection {
    fn default() -> Self {
        Self { policy: default_policy(), seed: 0, file: None }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub dataset: DatasetPaths,
    #[serde(default)]
    pub split: SplitSection,
    #[serde(default)]
    pub train: TrainConfig,
    /// Overrides `train.manifolds` when present.
    #[serde(default)]
    pub manifolds: Option<ManifoldSet>,
    /// Seeds for `diagnose`.
    #[serde(default)]
    pub seeds: Option<Vec<u64>>,
}

/// Command-line adjustments applied to the raw JSON before it is parsed.
#[derive(Debug, Default)]
pub struct Overrides {
    pub set: Vec<String>,
    pub seed: Option<u64>,
    pub task: Option<String>,
    pub manifolds: Option<String>,
}

fn parse_value(text: &str) -> Value {
    serde_json::from_str(text).unwrap_or_else(|_| Value::String(text.to_string()))
}

/// `key=value` sets `train.key`; dotted keys address the document root.
fn apply_set(doc: &mut Value, assignment: &str) -> Result<(), Error> {
    let (key, value) = assignment.split_once('=').ok_or_else(|| Error::Config(format!("--set expects key=value, got `{assignment}`")))?;
    let path: Vec<&str> = if key.contains('.') { key.split('.').collect() } else { vec!["train", key] };
    let mut node = doc;
    for part in &path[..path.len() - 1] {
        let obj = node.as_object_mut().ok_or_else(|| Error::Config(format!("--set {key}: `{part}` is not an object")))?;
        node = obj.entry(part.to_string()).or_insert_with(|| Value::Object(Default::default()));
    }
    let obj = node.as_object_mut().ok_or_else(|| Error::Config(format!("--set {key}: parent is not an object")))?;
    obj.insert(path[path.len() - 1].to_string(), parse_value(value));
    Ok(())
}

impl RunConfig {
    pub fn load(path: &Path, overrides: &Overrides) -> Result<(Self, PathBuf), Error> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let mut doc: Value = serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        if !doc.is_object() {
            return Err(Error::Config(format!("{}: expected a JSON object", path.display())));
        }
        for s in &overrides.set {
            apply_set(&mut doc, s)?;
        }
        if let Some(seed) = overrides.seed {
            apply_set(&mut doc, &format!("seed={seed}"))?;
        }
        if let Some(task) = &overrides.task {
            apply_set(&mut doc, &format!("task=\"{task}\""))?;
        }
        if let Some(m) = &overrides.manifolds {
            doc["manifolds"] = Value::String(m.clone());
        }
        let mut cfg: RunConfig = serde_json::from_value(doc).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        if let Some(m) = cfg.manifolds {
            cfg.train.manifolds = m;
        }
        cfg.train.validate()?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        cfg.resolve(&base);
        Ok((cfg, base))
    }

    fn resolve(&mut self, base: &Path) {
        let join = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        join(&mut self.dataset.edges);
        join(&mut self.dataset.features);
        join(&mut self.dataset.labels);
        if let Some(f) = &mut self.split.file {
            join(f);
        }
    }

    pub fn graph(&self) -> Result<(Graph, LoadStats), Error> {
        let (mut g, stats) = load_graph(&self.dataset.edges, &self.dataset.features, &self.dataset.labels)?;
        if self.dataset.normalize_features {
            g.row_normalize_features();
        }
        Ok((g, stats))
    }

    pub fn split(&self, g: &Graph) -> Result<SplitManifest, Error> {
        if let Some(file) = &self.split.file {
            let text = std::fs::read_to_string(file).map_err(|e| Error::Io { path: file.clone(), message: e.to_string() })?;
            return SplitManifest::from_json(&text);
        }
        match self.train.task {
            Task::Nc => make_nc_split(g, self.split.policy, self.split.seed),
            Task::Lp => make_lp_split(g, self.split.seed),
        }
    }
}
