//! Closed-form geometry on the three constant-curvature spaces.
//!
//! Hyperbolic space is the upper sheet of the hyperboloid `<x,x>_H = -1`,
//! `x_0 > 0`, with the Minkowski product `<x,y>_H = -x_0 y_0 + sum x_i y_i`.
//! The sphere is the unit sphere in the same ambient space. Both use `d + 1`
//! ambient coordinates for intrinsic dimension `d`; Euclidean points use `d`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tangent vectors shorter than this map to the base point and back to zero.
pub const SMALL_NORM: f64 = 1e-12;
/// Tolerance for the membership checks of [`ManifoldPoint::new`] and [`TangentVec::new`].
pub const MEMBERSHIP_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ManifoldKind {
    Euclidean,
    Hyperbolic,
    Spherical,
}

impl ManifoldKind {
    pub const ALL: [ManifoldKind; 3] = [ManifoldKind::Euclidean, ManifoldKind::Hyperbolic, ManifoldKind::Spherical];

    pub fn curvature(self) -> f64 {
        match self {
            ManifoldKind::Euclidean => 0.0,
            ManifoldKind::Hyperbolic => -1.0,
            ManifoldKind::Spherical => 1.0,
        }
    }

    /// Number of stored coordinates for intrinsic dimension `dim`.
    pub fn ambient_dim(self, dim: usize) -> usize {
        match self {
            ManifoldKind::Euclidean => dim,
            _ => dim + 1,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ManifoldKind::Euclidean => "euclidean",
            ManifoldKind::Hyperbolic => "hyperbolic",
            ManifoldKind::Spherical => "spherical",
        }
    }

    /// One-letter tag used in subset names such as `EHS`.
    pub fn letter(self) -> char {
        match self {
            ManifoldKind::Euclidean => 'E',
            ManifoldKind::Hyperbolic => 'H',
            ManifoldKind::Spherical => 'S',
        }
    }
}

/// Minkowski inner product `-x_0 y_0 + sum_{i>0} x_i y_i`.
pub fn minkowski(x: &[f64], y: &[f64]) -> f64 {
    -x[0] * y[0] + dot(&x[1..], &y[1..])
}

pub fn dot(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}

pub fn norm(x: &[f64]) -> f64 {
    dot(x, x).sqrt()
}

/// The inner product a manifold uses on ambient coordinates.
pub fn inner(kind: ManifoldKind, x: &[f64], y: &[f64]) -> f64 {
    match kind {
        ManifoldKind::Hyperbolic => minkowski(x, y),
        _ => dot(x, y),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifoldPoint {
    kind: ManifoldKind,
    coords: Vec<f64>,
}

impl ManifoldPoint {
    /// Validates the membership constraint at [`MEMBERSHIP_TOL`].
    pub fn new(kind: ManifoldKind, coords: Vec<f64>) -> Result<Self> {
        let p = Self { kind, coords };
        p.check(MEMBERSHIP_TOL)?;
        Ok(p)
    }

    /// Snaps ambient coordinates onto the manifold: hyperboloid via
    /// `x_0 = sqrt(1 + |x_s|^2)`, sphere via `x / |x|`.
    pub fn project(kind: ManifoldKind, mut coords: Vec<f64>) -> Result<Self> {
        match kind {
            ManifoldKind::Euclidean => {}
            ManifoldKind::Hyperbolic => {
                if coords.is_empty() {
                    return Err(Error::InvalidDimension("hyperboloid point needs at least one coordinate".into()));
                }
                coords[0] = (1.0 + dot(&coords[1..], &coords[1..])).sqrt();
            }
            ManifoldKind::Spherical => {
                let n = norm(&coords);
                if n < SMALL_NORM {
                    return Err(Error::Singularity("cannot project the zero vector onto the sphere".into()));
                }
                coords.iter_mut().for_each(|c| *c /= n);
            }
        }
        Ok(Self { kind, coords })
    }

    pub fn kind(&self) -> ManifoldKind {
        self.kind
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn into_coords(self) -> Vec<f64> {
        self.coords
    }

    /// Intrinsic dimension.
    pub fn dim(&self) -> usize {
        match self.kind {
            ManifoldKind::Euclidean => self.coords.len(),
            _ => self.coords.len().saturating_sub(1),
        }
    }

    /// Checks the membership constraint with absolute tolerance `tol`.
    pub fn check(&self, tol: f64) -> Result<()> {
        let x = &self.coords;
        let off = |detail: String| Err(Error::OffManifold { kind: self.kind.name(), detail });
        if x.iter().any(|c| !c.is_finite()) {
            return off("non-finite coordinate".into());
        }
        match self.kind {
            ManifoldKind::Euclidean => Ok(()),
            ManifoldKind::Hyperbolic => {
                if x.len() < 2 {
                    return Err(Error::InvalidDimension("hyperboloid point needs d + 1 >= 2 coordinates".into()));
                }
                let q = minkowski(x, x);
                if (q + 1.0).abs() > tol * (1.0 + x[0] * x[0]) {
                    return off(format!("<x,x>_H = {q}"));
                }
                if x[0] <= 0.0 {
                    return off(format!("x_0 = {} on the lower sheet", x[0]));
                }
                Ok(())
            }
            ManifoldKind::Spherical => {
                if x.len() < 2 {
                    return Err(Error::InvalidDimension("sphere point needs d + 1 >= 2 coordinates".into()));
                }
                let q = dot(x, x);
                if (q - 1.0).abs() > tol {
                    return off(format!("<x,x> = {q}"));
                }
                Ok(())
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TangentVec {
    base: ManifoldPoint,
    coords: Vec<f64>,
}

impl TangentVec {
    /// Validates that `coords` lies in the tangent space at `base`.
    pub fn new(base: ManifoldPoint, coords: Vec<f64>) -> Result<Self> {
        check_len(base.coords.len(), coords.len())?;
        if base.kind != ManifoldKind::Euclidean {
            let ip = inner(base.kind, &base.coords, &coords);
            let scale = 1.0 + norm(&base.coords) * norm(&coords);
            if ip.abs() > MEMBERSHIP_TOL * scale {
                return Err(Error::OffManifold {
                    kind: base.kind.name(),
                    detail: format!("tangent vector has <base, v> = {ip}"),
                });
            }
        }
        Ok(Self { base, coords })
    }

    /// Removes the normal component of an ambient vector at `base`.
    pub fn project(base: ManifoldPoint, mut coords: Vec<f64>) -> Result<Self> {
        check_len(base.coords.len(), coords.len())?;
        match base.kind {
            ManifoldKind::Euclidean => {}
            ManifoldKind::Hyperbolic => {
                let ip = minkowski(&base.coords, &coords);
                coords.iter_mut().zip(&base.coords).for_each(|(v, b)| *v += ip * b);
            }
            ManifoldKind::Spherical => {
                let ip = dot(&base.coords, &coords);
                coords.iter_mut().zip(&base.coords).for_each(|(v, b)| *v -= ip * b);
            }
        }
        Ok(Self { base, coords })
    }

    /// Tangent vector at the origin from intrinsic coordinates, using `T_o M = R^d`.
    pub fn at_origin(kind: ManifoldKind, intrinsic: &[f64]) -> Result<Self> {
        let base = origin(kind, intrinsic.len())?;
        let coords = match kind {
            ManifoldKind::Euclidean => intrinsic.to_vec(),
            _ => std::iter::once(0.0).chain(intrinsic.iter().copied()).collect(),
        };
        Ok(Self { base, coords })
    }

    pub fn base(&self) -> &ManifoldPoint {
        &self.base
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    /// Length under the manifold's metric.
    pub fn norm(&self) -> f64 {
        tangent_norm(self.base.kind, &self.coords)
    }
}

fn tangent_norm(kind: ManifoldKind, v: &[f64]) -> f64 {
    match kind {
        ManifoldKind::Hyperbolic => minkowski(v, v).max(0.0).sqrt(),
        _ => norm(v),
    }
}

fn check_len(expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::DimensionMismatch(format!("expected {expected} coordinates, got {got}")));
    }
    Ok(())
}

fn check_same(x: &ManifoldPoint, y: &ManifoldPoint) -> Result<()> {
    if x.kind != y.kind {
        return Err(Error::DimensionMismatch(format!("{} point vs {} point", x.kind.name(), y.kind.name())));
    }
    check_len(x.coords.len(), y.coords.len())
}

/// Canonical base point: zeros for Euclidean, `(1, 0, ..., 0)` otherwise.
pub fn origin(kind: ManifoldKind, dim: usize) -> Result<ManifoldPoint> {
    if dim == 0 {
        return Err(Error::InvalidDimension("dimension must be at least 1".into()));
    }
    let mut coords = vec![0.0; kind.ambient_dim(dim)];
    if kind != ManifoldKind::Euclidean {
        coords[0] = 1.0;
    }
    Ok(ManifoldPoint { kind, coords })
}

/// Exponential map without the final re-projection.
pub fn exp_map_unprojected(base: &ManifoldPoint, v: &TangentVec) -> Result<Vec<f64>> {
    check_same(base, &v.base)?;
    let x = &base.coords;
    let v = &v.coords;
    Ok(match base.kind {
        ManifoldKind::Euclidean => x.iter().zip(v).map(|(a, b)| a + b).collect(),
        kind => {
            let n = tangent_norm(kind, v);
            if n < SMALL_NORM {
                return Ok(x.clone());
            }
            let (c, s) = if kind == ManifoldKind::Hyperbolic { (n.cosh(), n.sinh()) } else { (n.cos(), n.sin()) };
            x.iter().zip(v).map(|(a, b)| c * a + s * b / n).collect()
        }
    })
}

/// Follows the geodesic from `base` along `v` for length `|v|`, then re-projects.
pub fn exp_map(base: &ManifoldPoint, v: &TangentVec) -> Result<ManifoldPoint> {
    let raw = exp_map_unprojected(base, v)?;
    ManifoldPoint::project(base.kind, raw)
}

/// Inverse of [`exp_map`].
pub fn log_map(base: &ManifoldPoint, y: &ManifoldPoint) -> Result<TangentVec> {
    check_same(base, y)?;
    let x = &base.coords;
    let yc = &y.coords;
    let coords = match base.kind {
        ManifoldKind::Euclidean => yc.iter().zip(x).map(|(a, b)| a - b).collect(),
        ManifoldKind::Hyperbolic => {
            let a = minkowski(x, yc);
            let d = (-a).max(1.0).acosh();
            let u: Vec<f64> = yc.iter().zip(x).map(|(p, q)| p + a * q).collect();
            if d < SMALL_NORM {
                vec![0.0; x.len()]
            } else {
                let un = tangent_norm(ManifoldKind::Hyperbolic, &u).max(SMALL_NORM);
                u.iter().map(|c| d * c / un).collect()
            }
        }
        ManifoldKind::Spherical => {
            let a = dot(x, yc);
            if a <= -1.0 + MEMBERSHIP_TOL {
                return Err(Error::UndefinedLog);
            }
            let d = a.clamp(-1.0, 1.0).acos();
            let u: Vec<f64> = yc.iter().zip(x).map(|(p, q)| p - a * q).collect();
            if d < SMALL_NORM {
                vec![0.0; x.len()]
            } else {
                let un = norm(&u).max(SMALL_NORM);
                u.iter().map(|c| d * c / un).collect()
            }
        }
    };
    Ok(TangentVec { base: base.clone(), coords })
}

/// Geodesic distance on ambient coordinates of the given kind.
pub fn dist_coords(kind: ManifoldKind, x: &[f64], y: &[f64]) -> f64 {
    match kind {
        ManifoldKind::Euclidean => x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt(),
        ManifoldKind::Hyperbolic => (-minkowski(x, y)).max(1.0).acosh(),
        ManifoldKind::Spherical => dot(x, y).clamp(-1.0, 1.0).acos(),
    }
}

pub fn dist(x: &ManifoldPoint, y: &ManifoldPoint) -> Result<f64> {
    check_same(x, y)?;
    if x.coords == y.coords {
        return Ok(0.0);
    }
    Ok(dist_coords(x.kind, &x.coords, &y.coords))
}

/// Möbius addition in curvature-`kappa` stereographic coordinates.
pub fn mobius_add(x: &[f64], y: &[f64], kappa: f64) -> Result<Vec<f64>> {
    check_len(x.len(), y.len())?;
    let xy = dot(x, y);
    let xx = dot(x, x);
    let yy = dot(y, y);
    let a = 1.0 - 2.0 * kappa * xy - kappa * yy;
    let b = 1.0 + kappa * xx;
    let den = 1.0 - 2.0 * kappa * xy + kappa * kappa * xx * yy;
    if den.abs() < SMALL_NORM {
        return Err(Error::Singularity(format!("Möbius denominator {den}")));
    }
    Ok(x.iter().zip(y).map(|(p, q)| (a * p + b * q) / den).collect())
}

/// Stereographic projection from `(-1, 0, ..., 0)`: `u = x_s / (1 + x_0)`.
/// Euclidean points are returned unchanged.
pub fn ambient_to_stereo(x: &ManifoldPoint) -> Result<Vec<f64>> {
    let c = &x.coords;
    match x.kind {
        ManifoldKind::Euclidean => Ok(c.clone()),
        kind => {
            let den = 1.0 + c[0];
            if kind == ManifoldKind::Spherical && den.abs() < SMALL_NORM {
                return Err(Error::ProjectionPole);
            }
            Ok(c[1..].iter().map(|v| v / den).collect())
        }
    }
}

/// Inverse of [`ambient_to_stereo`].
pub fn stereo_to_ambient(u: &[f64], kind: ManifoldKind) -> Result<ManifoldPoint> {
    if u.is_empty() {
        return Err(Error::InvalidDimension("empty stereographic vector".into()));
    }
    let w = dot(u, u);
    let coords = match kind {
        ManifoldKind::Euclidean => u.to_vec(),
        ManifoldKind::Hyperbolic => {
            if w >= 1.0 {
                return Err(Error::OutOfModel(w.sqrt()));
            }
            let den = 1.0 - w;
            std::iter::once((1.0 + w) / den).chain(u.iter().map(|v| 2.0 * v / den)).collect()
        }
        ManifoldKind::Spherical => {
            let den = 1.0 + w;
            std::iter::once((1.0 - w) / den).chain(u.iter().map(|v| 2.0 * v / den)).collect()
        }
    };
    Ok(ManifoldPoint { kind, coords })
}

/// Maps intrinsic tangent coordinates at the origin onto the manifold.
pub fn exp_origin(kind: ManifoldKind, intrinsic: &[f64]) -> Result<ManifoldPoint> {
    let v = TangentVec::at_origin(kind, intrinsic)?;
    exp_map(&v.base.clone(), &v)
}

/// Intrinsic tangent coordinates at the origin of a point.
pub fn log_origin(x: &ManifoldPoint) -> Result<Vec<f64>> {
    let o = origin(x.kind, x.dim())?;
    let v = log_map(&o, x)?;
    Ok(match x.kind {
        ManifoldKind::Euclidean => v.coords,
        _ => v.coords[1..].to_vec(),
    })
}
