//! Attention fusion of the per-manifold distance features and the two task heads.

use curvgnn_autodiff::{Result as TensorResult, Var};
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::graph::Edge;

pub const DEFAULT_FERMI_R: f64 = 2.0;
pub const DEFAULT_FERMI_T: f64 = 1.0;

/// Per-node scaled dot-product self-attention over the stacked branch
/// features (queries, keys and values are the same rows), reduced by the mean
/// of the attended rows. Every part is `n x k`.
pub fn attention_fuse<'t>(parts: &[Var<'t>]) -> Result<Var<'t>> {
    let Some(&first) = parts.first() else {
        return Err(Error::Contract("attention needs at least one feature matrix".into()));
    };
    let shape = first.shape()?;
    for p in parts {
        if p.shape()? != shape {
            return Err(Error::DimensionMismatch(format!("attention inputs {:?} vs {:?}", shape, p.shape()?)));
        }
    }
    if parts.len() == 1 {
        return Ok(first);
    }
    let m = parts.len();
    let scale = 1.0 / (shape.1 as f64).sqrt();
    let mut scores = vec![vec![None; m]; m];
    for a in 0..m {
        for b in a..m {
            let s = parts[a].mul(parts[b])?.sum_rows()?.scale(scale)?;
            scores[a][b] = Some(s);
            scores[b][a] = Some(s);
        }
    }
    let mut total: Option<Var<'t>> = None;
    for row in &scores {
        let logits: Vec<Var<'t>> = row.iter().map(|s| s.expect("filled")).collect();
        let weights = Var::concat_cols(&logits)?.softmax_rows()?;
        for (b, &part) in parts.iter().enumerate() {
            let term = part.mul(weights.slice_cols(b, b + 1)?)?;
            total = Some(match total {
                Some(t) => t.add(term)?,
                None => term,
            });
        }
    }
    Ok(total.expect("at least two parts").scale(1.0 / m as f64)?)
}

/// Row-wise log-softmax of `E_mm w^T`; `w` is `classes x k`.
pub fn nc_log_probs<'t>(fused: Var<'t>, w: Var<'t>) -> TensorResult<Var<'t>> {
    fused.matmul_t(w)?.log_softmax_rows()
}

/// Mean negative log-probability of the true class over `mask`.
pub fn nc_loss<'t>(log_probs: Var<'t>, labels: &[i64], mask: &[usize]) -> Result<Var<'t>> {
    if mask.is_empty() {
        return Err(Error::Contract("node classification loss needs a nonempty mask".into()));
    }
    let mut cols = Vec::with_capacity(mask.len());
    for &i in mask {
        let l = *labels.get(i).ok_or_else(|| Error::Contract(format!("mask node {i} has no label")))?;
        if l < 0 {
            return Err(Error::Contract(format!("mask node {i} is unlabeled")));
        }
        cols.push(l as usize);
    }
    Ok(log_probs.select(Arc::new(mask.to_vec()), Arc::new(cols))?.mean()?.neg()?)
}

/// Fermi-Dirac edge probability `1 / (exp((d2 - r) / t) + 1)`.
pub fn fermi_dirac(d2: f64, r: f64, t: f64) -> f64 {
    1.0 / (((d2 - r) / t).exp() + 1.0)
}

/// Squared Euclidean distances between the endpoints of `edges`, as an `m x 1` column.
pub fn edge_sq_dist<'t>(fused: Var<'t>, edges: &[Edge]) -> TensorResult<Var<'t>> {
    let left = Arc::new(edges.iter().map(|e| e.0).collect::<Vec<_>>());
    let right = Arc::new(edges.iter().map(|e| e.1).collect::<Vec<_>>());
    fused.gather_rows(left)?.sub(fused.gather_rows(right)?)?.square()?.sum_rows()
}

/// Edge probabilities as an `m x 1` column.
pub fn lp_probabilities<'t>(fused: Var<'t>, edges: &[Edge], r: f64, t: f64) -> TensorResult<Var<'t>> {
    edge_sq_dist(fused, edges)?.offset(-r)?.scale(1.0 / t)?.neg()?.sigmoid()
}

/// Mean of `-log p` over positives and `-log(1 - p)` over negatives, computed
/// from the logit `z = (d2 - r) / t` as `softplus(z)` and `softplus(-z)`.
pub fn lp_loss<'t>(fused: Var<'t>, positives: &[Edge], negatives: &[Edge], r: f64, t: f64) -> Result<Var<'t>> {
    if positives.is_empty() || negatives.is_empty() {
        return Err(Error::Contract("link prediction loss needs positive and negative edges".into()));
    }
    if !(t > 0.0) {
        return Err(Error::Config(format!("fermi_t {t} must be positive")));
    }
    let z = |edges: &[Edge]| edge_sq_dist(fused, edges)?.offset(-r)?.scale(1.0 / t);
    let pos = z(positives)?.softplus()?.sum()?;
    let neg = z(negatives)?.neg()?.softplus()?.sum()?;
    Ok(pos.add(neg)?.scale(1.0 / (positives.len() + negatives.len()) as f64)?)
}
