//! The fused three-manifold graph convolution stack.
//!
//! Each layer reads the incoming Euclidean, hyperbolic, and spherical states,
//! mixes them through six learned scalars (cross-manifold fusion), applies a
//! shared linear map in each origin tangent space (feature transform), and
//! averages neighbors in tangent coordinates (aggregation).

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use curvgnn_autodiff::{CsrMatrix, Gradients, Matrix, Result as TensorResult, Tape, Var};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{exp_origin, from_stereo, log_origin, mobius_add, to_stereo};
use crate::manifold::ManifoldKind;
use crate::serde_matrix;

/// Which of the three branches are active.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct ManifoldSet {
    pub euclidean: bool,
    pub hyperbolic: bool,
    pub spherical: bool,
}

impl ManifoldSet {
    pub const EHS: ManifoldSet = ManifoldSet { euclidean: true, hyperbolic: true, spherical: true };
    pub const E: ManifoldSet = ManifoldSet { euclidean: true, hyperbolic: false, spherical: false };

    /// The seven non-empty subsets, singletons first.
    pub fn all() -> Vec<ManifoldSet> {
        ["E", "H", "S", "EH", "ES", "HS", "EHS"].iter().map(|s| s.parse().expect("valid subset")).collect()
    }

    pub fn contains(&self, kind: ManifoldKind) -> bool {
        match kind {
            ManifoldKind::Euclidean => self.euclidean,
            ManifoldKind::Hyperbolic => self.hyperbolic,
            ManifoldKind::Spherical => self.spherical,
        }
    }

    pub fn kinds(&self) -> Vec<ManifoldKind> {
        ManifoldKind::ALL.into_iter().filter(|&k| self.contains(k)).collect()
    }

    pub fn len(&self) -> usize {
        self.kinds().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl FromStr for ManifoldSet {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut set = ManifoldSet { euclidean: false, hyperbolic: false, spherical: false };
        for c in s.chars() {
            let slot = match c.to_ascii_uppercase() {
                'E' | 'R' => &mut set.euclidean,
                'H' => &mut set.hyperbolic,
                'S' => &mut set.spherical,
                _ => return Err(Error::Config(format!("unknown manifold `{c}` in `{s}` (use letters E, H, S)"))),
            };
            if *slot {
                return Err(Error::Config(format!("manifold `{c}` repeated in `{s}`")));
            }
            *slot = true;
        }
        if set.is_empty() {
            return Err(Error::Config("manifold subset must not be empty".into()));
        }
        Ok(set)
    }
}

impl TryFrom<String> for ManifoldSet {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<ManifoldSet> for String {
    fn from(set: ManifoldSet) -> String {
        set.to_string()
    }
}

impl fmt::Display for ManifoldSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for k in self.kinds() {
            write!(f, "{}", k.letter())?;
        }
        Ok(())
    }
}

/// Positions of the six cross-manifold scalars in [`LayerParams::cross`].
pub mod cross {
    pub const E_TO_H: usize = 0;
    pub const E_TO_S: usize = 1;
    pub const H_TO_E: usize = 2;
    pub const H_TO_S: usize = 3;
    pub const S_TO_E: usize = 4;
    pub const S_TO_H: usize = 5;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerParams {
    /// `out x in`, shared by all manifolds.
    #[serde(with = "serde_matrix")]
    pub weight: Matrix,
    /// `1 x out` each.
    #[serde(with = "serde_matrix")]
    pub bias_e: Matrix,
    #[serde(with = "serde_matrix")]
    pub bias_h: Matrix,
    #[serde(with = "serde_matrix")]
    pub bias_s: Matrix,
    /// `1 x 6`, indexed by the constants in [`cross`].
    #[serde(with = "serde_matrix")]
    pub cross: Matrix,
}

impl LayerParams {
    pub fn bias(&self, kind: ManifoldKind) -> &Matrix {
        match kind {
            ManifoldKind::Euclidean => &self.bias_e,
            ManifoldKind::Hyperbolic => &self.bias_h,
            ManifoldKind::Spherical => &self.bias_s,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    /// `feature_dim x hidden`.
    #[serde(with = "serde_matrix")]
    pub lift_weight: Matrix,
    /// `1 x hidden`.
    #[serde(with = "serde_matrix")]
    pub lift_bias: Matrix,
    pub layers: Vec<LayerParams>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub in_dim: usize,
    pub hidden_dim: usize,
    pub num_layers: usize,
    pub dropout: f64,
    pub manifolds: ManifoldSet,
}

/// Symmetric uniform initialization with limit `sqrt(6 / (fan_in + fan_out))`.
pub fn glorot(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Matrix {
    let limit = (6.0 / (rows + cols) as f64).sqrt();
    Matrix::from_shape_simple_fn((rows, cols), || rng.random_range(-limit..=limit))
}

impl ModelParams {
    /// Glorot weights, zero biases, zero cross scalars.
    pub fn init(cfg: &ModelConfig, rng: &mut ChaCha8Rng) -> Self {
        let h = cfg.hidden_dim;
        let lift_weight = glorot(cfg.in_dim, h, rng);
        let layers = (0..cfg.num_layers)
            .map(|_| LayerParams {
                weight: glorot(h, h, rng),
                bias_e: Matrix::zeros((1, h)),
                bias_h: Matrix::zeros((1, h)),
                bias_s: Matrix::zeros((1, h)),
                cross: Matrix::zeros((1, 6)),
            })
            .collect();
        Self { lift_weight, lift_bias: Matrix::zeros((1, h)), layers }
    }

    /// All matrices in a fixed order, matching [`ModelParams::assign`] and [`ModelVars::gradients`].
    pub fn flatten(&self) -> Vec<Matrix> {
        let mut out = vec![self.lift_weight.clone(), self.lift_bias.clone()];
        for l in &self.layers {
            out.extend([l.weight.clone(), l.bias_e.clone(), l.bias_h.clone(), l.bias_s.clone(), l.cross.clone()]);
        }
        out
    }

    pub fn names(&self) -> Vec<String> {
        let mut out = vec!["lift_weight".to_string(), "lift_bias".to_string()];
        for i in 0..self.layers.len() {
            for p in ["weight", "bias_e", "bias_h", "bias_s", "cross"] {
                out.push(format!("layers.{i}.{p}"));
            }
        }
        out
    }

    pub fn assign(&mut self, values: &[Matrix]) -> Result<()> {
        let expected = 2 + 5 * self.layers.len();
        if values.len() != expected {
            return Err(Error::Contract(format!("expected {expected} parameter matrices, got {}", values.len())));
        }
        self.lift_weight = values[0].clone();
        self.lift_bias = values[1].clone();
        for (l, chunk) in self.layers.iter_mut().zip(values[2..].chunks(5)) {
            l.weight = chunk[0].clone();
            l.bias_e = chunk[1].clone();
            l.bias_h = chunk[2].clone();
            l.bias_s = chunk[3].clone();
            l.cross = chunk[4].clone();
        }
        Ok(())
    }

    /// Places parameters on `tape`, as trainable leaves or as constants.
    pub fn to_vars<'t>(&self, tape: &'t Tape, trainable: bool) -> ModelVars<'t> {
        let put = |m: &Matrix| if trainable { tape.param(m.clone()) } else { tape.constant(m.clone()) };
        ModelVars {
            lift_weight: put(&self.lift_weight),
            lift_bias: put(&self.lift_bias),
            layers: self
                .layers
                .iter()
                .map(|l| LayerVars {
                    weight: put(&l.weight),
                    bias_e: put(&l.bias_e),
                    bias_h: put(&l.bias_h),
                    bias_s: put(&l.bias_s),
                    cross: put(&l.cross),
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct LayerVars<'t> {
    pub weight: Var<'t>,
    pub bias_e: Var<'t>,
    pub bias_h: Var<'t>,
    pub bias_s: Var<'t>,
    pub cross: Var<'t>,
}

impl<'t> LayerVars<'t> {
    pub fn bias(&self, kind: ManifoldKind) -> Var<'t> {
        match kind {
            ManifoldKind::Euclidean => self.bias_e,
            ManifoldKind::Hyperbolic => self.bias_h,
            ManifoldKind::Spherical => self.bias_s,
        }
    }

    fn scalar(&self, index: usize) -> TensorResult<Var<'t>> {
        self.cross.slice_cols(index, index + 1)
    }
}

#[derive(Debug, Clone)]
pub struct ModelVars<'t> {
    pub lift_weight: Var<'t>,
    pub lift_bias: Var<'t>,
    pub layers: Vec<LayerVars<'t>>,
}

impl<'t> ModelVars<'t> {
    pub fn leaves(&self) -> Vec<Var<'t>> {
        let mut out = vec![self.lift_weight, self.lift_bias];
        for l in &self.layers {
            out.extend([l.weight, l.bias_e, l.bias_h, l.bias_s, l.cross]);
        }
        out
    }

    /// Gradients in [`ModelParams::flatten`] order; `None` for leaves that did not reach the loss.
    pub fn gradients(&self, grads: &Gradients) -> Vec<Option<Matrix>> {
        self.leaves().iter().map(|v| grads.get(v).cloned()).collect()
    }
}

/// Per-manifold node states: Euclidean coordinates, or ambient coordinates on
/// the hyperboloid and sphere. Inactive branches are `None`.
#[derive(Debug, Clone, Copy)]
pub struct State<'t> {
    pub e: Option<Var<'t>>,
    pub h: Option<Var<'t>>,
    pub s: Option<Var<'t>>,
}

impl<'t> State<'t> {
    pub fn get(&self, kind: ManifoldKind) -> Option<Var<'t>> {
        match kind {
            ManifoldKind::Euclidean => self.e,
            ManifoldKind::Hyperbolic => self.h,
            ManifoldKind::Spherical => self.s,
        }
    }

    fn set(&mut self, kind: ManifoldKind, v: Option<Var<'t>>) {
        match kind {
            ManifoldKind::Euclidean => self.e = v,
            ManifoldKind::Hyperbolic => self.h = v,
            ManifoldKind::Spherical => self.s = v,
        }
    }

    fn map(&self, mut f: impl FnMut(ManifoldKind, Var<'t>) -> TensorResult<Var<'t>>) -> TensorResult<Self> {
        let mut out = *self;
        for kind in ManifoldKind::ALL {
            if let Some(v) = self.get(kind) {
                out.set(kind, Some(f(kind, v)?));
            }
        }
        Ok(out)
    }

    /// Forward values of the active branches.
    pub fn values(&self) -> TensorResult<Vec<(ManifoldKind, Matrix)>> {
        let mut out = Vec::new();
        for kind in ManifoldKind::ALL {
            if let Some(v) = self.get(kind) {
                out.push((kind, v.value()?.as_ref().clone()));
            }
        }
        Ok(out)
    }
}

/// Inverted dropout on tangent coordinates; `None` in evaluation.
pub struct Dropout<'a> {
    pub rate: f64,
    pub rng: &'a mut ChaCha8Rng,
}

impl Dropout<'_> {
    fn apply<'t>(&mut self, x: Var<'t>) -> TensorResult<Var<'t>> {
        if self.rate <= 0.0 {
            return Ok(x);
        }
        let keep = 1.0 - self.rate;
        let shape = x.shape()?;
        let rng = &mut *self.rng;
        let mask = Matrix::from_shape_simple_fn(shape, || if rng.random::<f64>() < keep { 1.0 / keep } else { 0.0 });
        x.mul(x.tape().constant(mask))
    }
}

/// Cross-manifold fusion: every branch receives the origin-tangent images of the
/// other branches scaled by the cross scalars. Reads only the incoming state.
pub fn fuse<'t>(state: &State<'t>, layer: &LayerVars<'t>) -> TensorResult<State<'t>> {
    let log_h = state.h.map(|h| log_origin(ManifoldKind::Hyperbolic, h)).transpose()?;
    let log_s = state.s.map(|s| log_origin(ManifoldKind::Spherical, s)).transpose()?;
    let scaled = |index: usize, t: Var<'t>| -> TensorResult<Var<'t>> { t.mul(layer.scalar(index)?) };

    let mut out = *state;
    if let Some(mut e) = state.e {
        if let Some(t) = log_h {
            e = e.add(scaled(cross::H_TO_E, t)?)?;
        }
        if let Some(t) = log_s {
            e = e.add(scaled(cross::S_TO_E, t)?)?;
        }
        out.e = Some(e);
    }
    let curved = |kind: ManifoldKind, own: Var<'t>, from_e: usize, other: Option<(usize, Var<'t>)>| -> TensorResult<Var<'t>> {
        if state.e.is_none() && other.is_none() {
            return Ok(own);
        }
        let kappa = kind.curvature();
        let mut acc = to_stereo(own)?;
        if let Some(e) = state.e {
            let lifted = to_stereo(exp_origin(kind, scaled(from_e, e)?)?)?;
            acc = mobius_add(lifted, acc, kappa)?;
        }
        if let Some((index, t)) = other {
            let lifted = to_stereo(exp_origin(kind, scaled(index, t)?)?)?;
            acc = mobius_add(acc, lifted, kappa)?;
        }
        from_stereo(kind, acc)
    };
    if let Some(h) = state.h {
        out.h = Some(curved(ManifoldKind::Hyperbolic, h, cross::E_TO_H, log_s.map(|t| (cross::S_TO_H, t)))?);
    }
    if let Some(s) = state.s {
        out.s = Some(curved(ManifoldKind::Spherical, s, cross::E_TO_S, log_h.map(|t| (cross::H_TO_S, t)))?);
    }
    Ok(out)
}

/// Shared linear map in each origin tangent space plus a per-manifold bias.
pub fn transform<'t>(state: &State<'t>, layer: &LayerVars<'t>, mut dropout: Option<&mut Dropout<'_>>) -> TensorResult<State<'t>> {
    state.map(|kind, x| {
        let mut t = log_origin(kind, x)?;
        if let Some(d) = dropout.as_deref_mut() {
            t = d.apply(t)?;
        }
        let y = t.matmul_t(layer.weight)?.add(layer.bias(kind))?;
        exp_origin(kind, y)
    })
}

/// Self term plus normalized neighbor sum in tangent coordinates, then the activation.
pub fn aggregate<'t>(state: &State<'t>, adj: &Arc<CsrMatrix>, relu: bool) -> TensorResult<State<'t>> {
    state.map(|kind, x| {
        let t = log_origin(kind, x)?;
        let mut a = t.left_spmm(Arc::clone(adj))?;
        if relu {
            a = a.relu()?;
        }
        exp_origin(kind, a)
    })
}

/// Lifts features to every active manifold: `h0 = X W + b`, then the origin exp map.
pub fn lift<'t>(features: &Arc<CsrMatrix>, vars: &ModelVars<'t>, manifolds: ManifoldSet) -> TensorResult<State<'t>> {
    let h0 = vars.lift_weight.left_spmm(Arc::clone(features))?.add(vars.lift_bias)?;
    let pick = |kind: ManifoldKind| -> TensorResult<Option<Var<'t>>> {
        if manifolds.contains(kind) {
            exp_origin(kind, h0).map(Some)
        } else {
            Ok(None)
        }
    };
    Ok(State { e: pick(ManifoldKind::Euclidean)?, h: pick(ManifoldKind::Hyperbolic)?, s: pick(ManifoldKind::Spherical)? })
}

/// One full layer: fuse, transform, aggregate.
pub fn layer<'t>(
    state: &State<'t>,
    vars: &LayerVars<'t>,
    adj: &Arc<CsrMatrix>,
    relu: bool,
    dropout: Option<&mut Dropout<'_>>,
) -> TensorResult<State<'t>> {
    let fused = fuse(state, vars)?;
    let transformed = transform(&fused, vars, dropout)?;
    aggregate(&transformed, adj, relu)
}

/// Runs the whole stack; hidden layers use ReLU, the last layer is linear.
pub fn forward<'t>(
    features: &Arc<CsrMatrix>,
    adj: &Arc<CsrMatrix>,
    vars: &ModelVars<'t>,
    manifolds: ManifoldSet,
    mut dropout: Option<&mut Dropout<'_>>,
) -> TensorResult<State<'t>> {
    let mut state = lift(features, vars, manifolds)?;
    let last = vars.layers.len().saturating_sub(1);
    for (i, l) in vars.layers.iter().enumerate() {
        state = layer(&state, l, adj, i != last, dropout.as_deref_mut())?;
    }
    Ok(state)
}

/// Plain GCN on ndarray values: the all-Euclidean path without a tape.
pub fn reference_gcn_forward(features: &CsrMatrix, adj: &CsrMatrix, params: &ModelParams) -> Result<Matrix> {
    let mut h = features.mul_dense(&params.lift_weight)? + &params.lift_bias;
    let last = params.layers.len().saturating_sub(1);
    for (i, l) in params.layers.iter().enumerate() {
        let y = h.dot(&l.weight.t()) + &l.bias_e;
        h = adj.mul_dense(&y)?;
        if i != last {
            h.mapv_inplace(|v| v.max(0.0));
        }
    }
    Ok(h)
}
