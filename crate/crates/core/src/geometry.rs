//! Row-batched differentiable geometry used by the model.
//!
//! Every op works on an `n x _` matrix whose rows are independent points or
//! vectors. Tangent vectors at the origin are passed as their `d` intrinsic
//! coordinates; manifold points as `d + 1` ambient coordinates.

use std::sync::Arc;

use curvgnn_autodiff::{BackwardContext, Matrix, Op, Result, TensorError, Var};
use ndarray::{s, Axis};

use crate::manifold::ManifoldKind;

/// Hyperbolic origin tangents longer than this are rescaled to this length
/// before the exp map, keeping stereographic images clear of the unit sphere.
pub const MAX_HYPERBOLIC_NORM: f64 = 15.0;
/// Sphere origin tangents longer than this are rescaled to this length, so the
/// exp map never wraps past the antipode of the origin (the projection pole).
pub const MAX_SPHERICAL_NORM: f64 = std::f64::consts::PI - 1e-2;
/// Floor used inside distance gradients at coincident points.
pub const DIST_GRAD_FLOOR: f64 = 1e-9;
const SMALL: f64 = 1e-12;
const SERIES: f64 = 1e-3;

fn domain(op: &'static str, detail: String) -> TensorError {
    TensorError::Domain { op, detail }
}

fn shape(op: &'static str, detail: String) -> TensorError {
    TensorError::Shape { op, detail }
}

fn row_dot(a: ndarray::ArrayView1<f64>, b: ndarray::ArrayView1<f64>) -> f64 {
    a.dot(&b)
}

/// `sinh(r)/r` and `(sinhc)'(r)/r`, or the sphere analogues when `sphere` is set.
fn radial(r: f64, sphere: bool) -> (f64, f64) {
    let sg = if sphere { -1.0 } else { 1.0 };
    if r < SERIES {
        let r2 = r * r;
        (1.0 + sg * r2 / 6.0 + r2 * r2 / 120.0, sg / 3.0 + r2 / 30.0 + sg * r2 * r2 / 840.0)
    } else if sphere {
        (r.sin() / r, (r * r.cos() - r.sin()) / (r * r * r))
    } else {
        (r.sinh() / r, (r * r.cosh() - r.sinh()) / (r * r * r))
    }
}

/// Origin exponential map: intrinsic tangent rows to ambient points.
#[derive(Debug, Clone, Copy)]
pub struct ExpOrigin(pub ManifoldKind);

impl ExpOrigin {
    fn clamp_factor(&self, r: f64) -> f64 {
        let max = match self.0 {
            ManifoldKind::Hyperbolic => MAX_HYPERBOLIC_NORM,
            ManifoldKind::Spherical => MAX_SPHERICAL_NORM,
            ManifoldKind::Euclidean => f64::INFINITY,
        };
        if r > max {
            max / r
        } else {
            1.0
        }
    }
}

impl Op for ExpOrigin {
    fn name(&self) -> &'static str {
        "exp_origin"
    }

    fn forward(&self, inputs: &[&Matrix]) -> Result<Matrix> {
        let v = inputs[0];
        let (n, d) = v.dim();
        let mut out = Matrix::zeros((n, d + 1));
        let sphere = self.0 == ManifoldKind::Spherical;
        for (row, mut o) in v.rows().into_iter().zip(out.rows_mut()) {
            let r0 = row.dot(&row).sqrt();
            let c = self.clamp_factor(r0);
            let r = r0 * c;
            let (f, _) = radial(r, sphere);
            let spatial = row.mapv(|x| x * f * c);
            let sq = spatial.dot(&spatial);
            o.slice_mut(s![1..]).assign(&spatial);
            if sphere {
                o[0] = r.cos();
                let nrm = (o[0] * o[0] + sq).sqrt();
                o.mapv_inplace(|x| x / nrm);
            } else {
                o[0] = (1.0 + sq).sqrt();
            }
        }
        Ok(out)
    }

    fn backward(&self, ctx: &BackwardContext<'_>) -> Result<Vec<Option<Matrix>>> {
        let v = ctx.inputs[0];
        let sphere = self.0 == ManifoldKind::Spherical;
        let mut g = Matrix::zeros(v.dim());
        for ((row, grow), mut out) in v.rows().into_iter().zip(ctx.grad.rows()).zip(g.rows_mut()) {
            let r0 = row.dot(&row).sqrt();
            let c = self.clamp_factor(r0);
            let r = r0 * c;
            let w = row.mapv(|x| x * c);
            let (f, fp) = radial(r, sphere);
            let g0 = grow[0];
            let gs = grow.slice(s![1..]);
            let gsw = gs.dot(&w);
            let sign0 = if sphere { -1.0 } else { 1.0 };
            // d/dw of (cosh r, f(r) w) or (cos r, f(r) w).
            let mut gw = gs.mapv(|x| x * f);
            gw.scaled_add(gsw * fp + sign0 * g0 * f, &w);
            if c < 1.0 {
                // w = R v / |v|: project out the radial part and scale.
                let radial_part = gw.dot(&row) / (r0 * r0);
                gw.scaled_add(-radial_part, &row);
                gw.mapv_inplace(|x| x * c);
            }
            out.assign(&gw);
        }
        Ok(vec![Some(g)])
    }
}

/// Origin logarithmic map: ambient points to intrinsic tangent rows.
#[derive(Debug, Clone, Copy)]
pub struct LogOrigin(pub ManifoldKind);

impl LogOrigin {
    /// Returns `(f, df/dr / r, df/dx0)` with `t = f * x_s`.
    fn factors(&self, x0: f64, r: f64) -> (f64, f64, f64) {
        match self.0 {
            ManifoldKind::Hyperbolic => {
                if r < SERIES {
                    let r2 = r * r;
                    (1.0 - r2 / 6.0 + 3.0 * r2 * r2 / 40.0, -1.0 / 3.0 + 3.0 * r2 / 10.0, 0.0)
                } else {
                    let f = r.asinh() / r;
                    (f, (1.0 / (1.0 + r * r).sqrt() - f) / (r * r), 0.0)
                }
            }
            _ => {
                let q = r * r + x0 * x0;
                if r < SERIES && x0 > 0.0 {
                    let f = if r < SMALL { 1.0 / x0 } else { r.atan2(x0) / r };
                    (f, -2.0 / (3.0 * x0 * x0 * x0), -1.0 / q)
                } else {
                    let theta = r.atan2(x0);
                    let f = theta / r;
                    (f, (r * x0 / q - theta) / (r * r * r), -1.0 / q)
                }
            }
        }
    }
}

impl Op for LogOrigin {
    fn name(&self) -> &'static str {
        "log_origin"
    }

    fn forward(&self, inputs: &[&Matrix]) -> Result<Matrix> {
        let x = inputs[0];
        let (n, a) = x.dim();
        if a < 2 {
            return Err(shape("log_origin", format!("ambient rows need >= 2 coordinates, got {a}")));
        }
        let mut out = Matrix::zeros((n, a - 1));
        for (i, (row, mut o)) in x.rows().into_iter().zip(out.rows_mut()).enumerate() {
            let xs = row.slice(s![1..]);
            let r = xs.dot(&xs).sqrt();
            if self.0 == ManifoldKind::Spherical && r < SMALL && row[0] < 0.0 {
                return Err(domain("log_origin", format!("row {i} is antipodal to the origin")));
            }
            let (f, _, _) = self.factors(row[0], r);
            o.assign(&xs.mapv(|v| v * f));
        }
        Ok(out)
    }

    fn backward(&self, ctx: &BackwardContext<'_>) -> Result<Vec<Option<Matrix>>> {
        let x = ctx.inputs[0];
        let mut g = Matrix::zeros(x.dim());
        for ((row, grow), mut out) in x.rows().into_iter().zip(ctx.grad.rows()).zip(g.rows_mut()) {
            let xs = row.slice(s![1..]);
            let r = xs.dot(&xs).sqrt();
            let (f, fr, f0) = self.factors(row[0], r);
            let gx = row_dot(grow, xs);
            out[0] = gx * f0;
            let mut gs = grow.mapv(|v| v * f);
            gs.scaled_add(gx * fr, &xs);
            out.slice_mut(s![1..]).assign(&gs);
        }
        Ok(vec![Some(g)])
    }
}

/// Ambient points to stereographic coordinates, `u = x_s / (1 + x_0)`.
#[derive(Debug, Clone, Copy)]
pub struct ToStereo;

impl Op for ToStereo {
    fn name(&self) -> &'static str {
        "to_stereo"
    }

    fn forward(&self, inputs: &[&Matrix]) -> Result<Matrix> {
        let x = inputs[0];
        let mut out = x.slice(s![.., 1..]).to_owned();
        for (i, (mut o, &x0)) in out.rows_mut().into_iter().zip(x.column(0)).enumerate() {
            let den = 1.0 + x0;
            if den.abs() < SMALL {
                return Err(domain("to_stereo", format!("row {i} sits at the projection pole")));
            }
            o.mapv_inplace(|v| v / den);
        }
        Ok(out)
    }

    fn backward(&self, ctx: &BackwardContext<'_>) -> Result<Vec<Option<Matrix>>> {
        let x = ctx.inputs[0];
        let u = ctx.output;
        let mut g = Matrix::zeros(x.dim());
        for (i, mut out) in g.rows_mut().into_iter().enumerate() {
            let den = 1.0 + x[[i, 0]];
            let gr = ctx.grad.row(i);
            out[0] = -gr.dot(&u.row(i)) / den;
            out.slice_mut(s![1..]).assign(&gr.mapv(|v| v / den));
        }
        Ok(vec![Some(g)])
    }
}

/// Stereographic coordinates back to hyperboloid or sphere points.
#[derive(Debug, Clone, Copy)]
pub struct FromStereo(pub ManifoldKind);

impl Op for FromStereo {
    fn name(&self) -> &'static str {
        "from_stereo"
    }

    fn forward(&self, inputs: &[&Matrix]) -> Result<Matrix> {
        let u = inputs[0];
        let (n, d) = u.dim();
        let hyper = self.0 == ManifoldKind::Hyperbolic;
        let mut out = Matrix::zeros((n, d + 1));
        for (i, (row, mut o)) in u.rows().into_iter().zip(out.rows_mut()).enumerate() {
            let w = row.dot(&row);
            if hyper && w >= 1.0 {
                return Err(domain("from_stereo", format!("row {i} has norm {} outside the unit ball", w.sqrt())));
            }
            let den = if hyper { 1.0 - w } else { 1.0 + w };
            o[0] = if hyper { (1.0 + w) / den } else { (1.0 - w) / den };
            o.slice_mut(s![1..]).assign(&row.mapv(|v| 2.0 * v / den));
        }
        Ok(out)
    }

    fn backward(&self, ctx: &BackwardContext<'_>) -> Result<Vec<Option<Matrix>>> {
        let u = ctx.inputs[0];
        let hyper = self.0 == ManifoldKind::Hyperbolic;
        let sg = if hyper { 1.0 } else { -1.0 };
        let mut g = Matrix::zeros(u.dim());
        for ((row, grow), mut out) in u.rows().into_iter().zip(ctx.grad.rows()).zip(g.rows_mut()) {
            let w = row.dot(&row);
            let den = if hyper { 1.0 - w } else { 1.0 + w };
            let g0 = grow[0];
            let gs = grow.slice(s![1..]);
            let mut gu = gs.mapv(|v| 2.0 * v / den);
            gu.scaled_add(sg * 4.0 * (gs.dot(&row) + g0) / (den * den), &row);
            out.assign(&gu);
        }
        Ok(vec![Some(g)])
    }
}

/// Row-wise Möbius addition `x ⊕ y` with curvature `kappa`.
#[derive(Debug, Clone, Copy)]
pub struct MobiusAdd(pub f64);

impl Op for MobiusAdd {
    fn name(&self) -> &'static str {
        "mobius_add"
    }

    fn forward(&self, inputs: &[&Matrix]) -> Result<Matrix> {
        let (x, y) = (inputs[0], inputs[1]);
        if x.dim() != y.dim() {
            return Err(shape("mobius_add", format!("{:?} vs {:?}", x.dim(), y.dim())));
        }
        let k = self.0;
        let mut out = Matrix::zeros(x.dim());
        for (i, ((xr, yr), mut o)) in x.rows().into_iter().zip(y.rows()).zip(out.rows_mut()).enumerate() {
            let (xy, xx, yy) = (xr.dot(&yr), xr.dot(&xr), yr.dot(&yr));
            let a = 1.0 - 2.0 * k * xy - k * yy;
            let b = 1.0 + k * xx;
            let den = 1.0 - 2.0 * k * xy + k * k * xx * yy;
            if den.abs() < SMALL {
                return Err(domain("mobius_add", format!("row {i} has denominator {den}")));
            }
            o.assign(&xr.mapv(|v| v * a / den));
            o.scaled_add(b / den, &yr);
        }
        Ok(out)
    }

    fn backward(&self, ctx: &BackwardContext<'_>) -> Result<Vec<Option<Matrix>>> {
        let (x, y) = (ctx.inputs[0], ctx.inputs[1]);
        let k = self.0;
        let mut gx = Matrix::zeros(x.dim());
        let mut gy = Matrix::zeros(y.dim());
        for i in 0..x.nrows() {
            let (xr, yr, o, g) = (x.row(i), y.row(i), ctx.output.row(i), ctx.grad.row(i));
            let (xy, xx, yy) = (xr.dot(&yr), xr.dot(&xr), yr.dot(&yr));
            let a = 1.0 - 2.0 * k * xy - k * yy;
            let b = 1.0 + k * xx;
            let den = 1.0 - 2.0 * k * xy + k * k * xx * yy;
            // out = N / den with N = a x + b y.
            let gn = g.mapv(|v| v / den);
            let gd = -g.dot(&o) / den;
            let (gnx, gny) = (gn.dot(&xr), gn.dot(&yr));
            let mut rx = gn.mapv(|v| v * a);
            rx.scaled_add(-2.0 * k * gnx, &yr);
            rx.scaled_add(2.0 * k * gny, &xr);
            rx.scaled_add(gd * (-2.0 * k), &yr);
            rx.scaled_add(gd * 2.0 * k * k * yy, &xr);
            let mut ry = gn.mapv(|v| v * b);
            ry.scaled_add(-2.0 * k * gnx, &xr);
            ry.scaled_add(-2.0 * k * gnx, &yr);
            ry.scaled_add(gd * (-2.0 * k), &xr);
            ry.scaled_add(gd * 2.0 * k * k * xx, &yr);
            gx.row_mut(i).assign(&rx);
            gy.row_mut(i).assign(&ry);
        }
        Ok(vec![Some(gx), Some(gy)])
    }
}

/// Distances from every row to every centroid: `n x D` points to `n x k`.
#[derive(Debug, Clone)]
pub struct CentroidDistance {
    pub kind: ManifoldKind,
    /// `k x D` centroids in the same coordinates as the input rows.
    pub centroids: Arc<Matrix>,
}

impl CentroidDistance {
    fn pair(&self, x: ndarray::ArrayView1<f64>, c: ndarray::ArrayView1<f64>) -> f64 {
        match self.kind {
            ManifoldKind::Euclidean => {
                let mut acc = 0.0;
                for (a, b) in x.iter().zip(c) {
                    acc += (a - b) * (a - b);
                }
                acc.sqrt()
            }
            ManifoldKind::Hyperbolic => {
                let a = x[0] * c[0] - x.slice(s![1..]).dot(&c.slice(s![1..]));
                if x == c {
                    0.0
                } else {
                    a.max(1.0).acosh()
                }
            }
            ManifoldKind::Spherical => {
                if x == c {
                    0.0
                } else {
                    x.dot(&c).clamp(-1.0, 1.0).acos()
                }
            }
        }
    }
}

impl Op for CentroidDistance {
    fn name(&self) -> &'static str {
        "centroid_distance"
    }

    fn forward(&self, inputs: &[&Matrix]) -> Result<Matrix> {
        let x = inputs[0];
        let c = &self.centroids;
        if x.ncols() != c.ncols() {
            return Err(shape("centroid_distance", format!("points {:?} vs centroids {:?}", x.dim(), c.dim())));
        }
        let mut out = Matrix::zeros((x.nrows(), c.nrows()));
        for (xr, mut o) in x.rows().into_iter().zip(out.rows_mut()) {
            for (j, cr) in c.rows().into_iter().enumerate() {
                o[j] = self.pair(xr, cr);
            }
        }
        Ok(out)
    }

    fn backward(&self, ctx: &BackwardContext<'_>) -> Result<Vec<Option<Matrix>>> {
        let x = ctx.inputs[0];
        let c = &self.centroids;
        let mut g = Matrix::zeros(x.dim());
        for i in 0..x.nrows() {
            let xr = x.row(i);
            let mut acc = g.row_mut(i);
            for (j, cr) in c.rows().into_iter().enumerate() {
                let gij = ctx.grad[[i, j]];
                if gij == 0.0 {
                    continue;
                }
                match self.kind {
                    ManifoldKind::Euclidean => {
                        let d = ctx.output[[i, j]].max(DIST_GRAD_FLOOR);
                        for ((a, &xv), &cv) in acc.iter_mut().zip(xr).zip(cr) {
                            *a += gij * (xv - cv) / d;
                        }
                    }
                    ManifoldKind::Hyperbolic => {
                        let a = (xr[0] * cr[0] - xr.slice(s![1..]).dot(&cr.slice(s![1..]))).max(1.0 + DIST_GRAD_FLOOR);
                        let coef = gij / (a * a - 1.0).sqrt();
                        acc[0] += coef * cr[0];
                        for (av, &cv) in acc.iter_mut().skip(1).zip(cr.iter().skip(1)) {
                            *av -= coef * cv;
                        }
                    }
                    ManifoldKind::Spherical => {
                        let a = xr.dot(&cr).clamp(-1.0 + DIST_GRAD_FLOOR, 1.0 - DIST_GRAD_FLOOR);
                        let coef = -gij / (1.0 - a * a).sqrt();
                        acc.scaled_add(coef, &cr);
                    }
                }
            }
        }
        Ok(vec![Some(g)])
    }
}

/// Convenience wrappers recording the ops above.
pub fn exp_origin<'t>(kind: ManifoldKind, v: Var<'t>) -> Result<Var<'t>> {
    match kind {
        ManifoldKind::Euclidean => Ok(v),
        _ => v.tape().apply(ExpOrigin(kind), &[v]),
    }
}

pub fn log_origin<'t>(kind: ManifoldKind, x: Var<'t>) -> Result<Var<'t>> {
    match kind {
        ManifoldKind::Euclidean => Ok(x),
        _ => x.tape().apply(LogOrigin(kind), &[x]),
    }
}

pub fn to_stereo<'t>(x: Var<'t>) -> Result<Var<'t>> {
    x.tape().apply(ToStereo, &[x])
}

pub fn from_stereo<'t>(kind: ManifoldKind, u: Var<'t>) -> Result<Var<'t>> {
    u.tape().apply(FromStereo(kind), &[u])
}

pub fn mobius_add<'t>(x: Var<'t>, y: Var<'t>, kappa: f64) -> Result<Var<'t>> {
    x.tape().apply(MobiusAdd(kappa), &[x, y])
}

pub fn centroid_distance<'t>(kind: ManifoldKind, x: Var<'t>, centroids: Arc<Matrix>) -> Result<Var<'t>> {
    x.tape().apply(CentroidDistance { kind, centroids }, &[x])
}

/// Arithmetic mean of rows projected back onto the manifold.
pub fn projected_mean(kind: ManifoldKind, x: &Matrix) -> Option<ndarray::Array1<f64>> {
    let mut m = x.mean_axis(Axis(0))?;
    match kind {
        ManifoldKind::Euclidean => {}
        ManifoldKind::Hyperbolic => {
            let q = m[0] * m[0] - m.slice(s![1..]).dot(&m.slice(s![1..]));
            let s = q.max(SMALL).sqrt();
            m.mapv_inplace(|v| v / s);
        }
        ManifoldKind::Spherical => {
            let s = m.dot(&m).sqrt().max(SMALL);
            m.mapv_inplace(|v| v / s);
        }
    }
    Some(m)
}
