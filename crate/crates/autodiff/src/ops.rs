//! Built-in differentiable primitives and the [`Var`] methods that record them.

use std::sync::Arc;

use ndarray::{s, Axis, Zip};

use crate::error::{domain_err, shape_err, Result, TensorError};
use crate::sparse::CsrMatrix;
use crate::tape::{BackwardContext, Matrix, Op, Var};

/// `acosh` gradients evaluate `1 / sqrt(x^2 - 1)` with `x` floored at `1 + ACOSH_GRAD_FLOOR`.
pub const ACOSH_GRAD_FLOOR: f64 = 1e-12;
/// `acos` gradients evaluate with `|x|` capped at `1 - ACOS_GRAD_FLOOR`.
pub const ACOS_GRAD_FLOOR: f64 = 1e-12;
/// Norms below this are treated as zero in gradients of `norm_rows` and `sqrt`.
pub const NORM_FLOOR: f64 = 1e-12;

fn broadcast_shape(op: &'static str, a: (usize, usize), b: (usize, usize)) -> Result<(usize, usize)> {
    let dim = |x: usize, y: usize| match (x, y) {
        _ if x == y => Some(x),
        (1, y) => Some(y),
        (x, 1) => Some(x),
        _ => None,
    };
    match (dim(a.0, b.0), dim(a.1, b.1)) {
        (Some(r), Some(c)) => Ok((r, c)),
        _ => Err(shape_err(op, format!("cannot broadcast {a:?} with {b:?}"))),
    }
}

/// Sums a broadcast gradient back down to `shape`.
fn reduce_to(g: Matrix, shape: (usize, usize)) -> Matrix {
    let mut g = g;
    if shape.0 == 1 && g.nrows() != 1 {
        g = g.sum_axis(Axis(0)).insert_axis(Axis(0));
    }
    if shape.1 == 1 && g.ncols() != 1 {
        g = g.sum_axis(Axis(1)).insert_axis(Axis(1));
    }
    g
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinaryKind {
    Add,
    Sub,
    Mul,
    Div,
}

/// Elementwise binary op with 2-D broadcasting (each dim equal or 1).
#[derive(Debug, Clone, Copy)]
pub struct Binary(pub BinaryKind);

impl Op for Binary {
    fn name(&self) -> &'static str {
        match self.0 {
            BinaryKind::Add => "add",
            BinaryKind::Sub => "sub",
            BinaryKind::Mul => "mul",
            BinaryKind::Div => "div",
        }
    }

    fn forward(&self, inputs: &[&Matrix]) -> Result<Matrix> {
        let shape = broadcast_shape(self.name(), inputs[0].dim(), inputs[1].dim())?;
        let a = inputs[0].broadcast(shape).expect("checked");
        let b = inputs[1].broadcast(shape).expect("checked");
        if self.0 == BinaryKind::Div && b.iter().any(|&x| x == 0.0) {
            return Err(domain_err("div", "division by zero"));
        }
        Ok(match self.0 {
            BinaryKind::Add => Zip::from(&a).and(&b).map_collect(|x, y| x + y),
            BinaryKind::Sub => Zip::from(&a).and(&b).map_collect(|x, y| x - y),
            BinaryKind::Mul => Zip::from(&a).and(&b).map_collect(|x, y| x * y),
            BinaryKind::Div => Zip::from(&a).and(&b).map_collect(|x, y| x / y),
        })
    }

    fn backward(&self, ctx: &BackwardContext<'_>) -> Result<Vec<Option<Matrix>>> {
        let (a, b, g) = (ctx.inputs[0], ctx.inputs[1], ctx.grad);
        let shape = g.dim();
        let ab = a.broadcast(shape).expect("checked");
        let bb = b.broadcast(shape).expect("checked");
        let ga = ctx.needs_grad[0].then(|| {
            let full = match self.0 {
                BinaryKind::Add | BinaryKind::Sub => g.clone(),
                BinaryKind::Mul => Zip::from(g).and(&bb).map_collect(|g, y| g * y),
                BinaryKind::Div => Zip::from(g).and(&bb).map_collect(|g, y| g / y),
            };
            reduce_to(full, a.dim())
        });
        let gb = ctx.needs_grad[1].then(|| {
            let full = match self.0 {
                BinaryKind::Add => g.clone(),
                BinaryKind::Sub => g.mapv(|x| -x),
                BinaryKind::Mul => Zip::from(g).and(&ab).map_collect(|g, x| g * x),
                BinaryKind::Div => Zip::from(g).and(ctx.output).and(&bb).map_collect(|g, o, y| -g * o / y),
            };
            reduce_to(full, b.dim())
        });
        Ok(vec![ga, gb])
    }
}

/// Elementwise unary functions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Unary {
    Neg,
    Exp,
    Log,
    Sqrt,
    Square,
    Cosh,
    Sinh,
    Tanh,
    Cos,
    Sin,
    Acosh,
    Acos,
    Relu,
    Softplus,
    Sigmoid,
    Scale(f64),
    Offset(f64),
    ClampMin(f64),
    ClampMax(f64),
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

impl Unary {
    fn apply(self, x: f64) -> f64 {
        match self {
            Unary::Neg => -x,
            Unary::Exp => x.exp(),
            Unary::Log => x.ln(),
            Unary::Sqrt => x.sqrt(),
            Unary::Square => x * x,
            Unary::Cosh => x.cosh(),
            Unary::Sinh => x.sinh(),
            Unary::Tanh => x.tanh(),
            Unary::Cos => x.cos(),
            Unary::Sin => x.sin(),
            Unary::Acosh => x.acosh(),
            Unary::Acos => x.acos(),
            Unary::Relu => x.max(0.0),
            Unary::Softplus => softplus(x),
            Unary::Sigmoid => sigmoid(x),
            Unary::Scale(c) => c * x,
            Unary::Offset(c) => x + c,
            Unary::ClampMin(lo) => x.max(lo),
            Unary::ClampMax(hi) => x.min(hi),
        }
    }

    /// Derivative given the input `x` and output `y`.
    fn derivative(self, x: f64, y: f64) -> f64 {
        match self {
            Unary::Neg => -1.0,
            Unary::Exp => y,
            Unary::Log => 1.0 / x,
            Unary::Sqrt => 0.5 / y.max(NORM_FLOOR),
            Unary::Square => 2.0 * x,
            Unary::Cosh => x.sinh(),
            Unary::Sinh => x.cosh(),
            Unary::Tanh => 1.0 - y * y,
            Unary::Cos => -x.sin(),
            Unary::Sin => x.cos(),
            Unary::Acosh => {
                let x = x.max(1.0 + ACOSH_GRAD_FLOOR);
                1.0 / (x * x - 1.0).sqrt()
            }
            Unary::Acos => {
                let x = x.clamp(-1.0 + ACOS_GRAD_FLOOR, 1.0 - ACOS_GRAD_FLOOR);
                -1.0 / (1.0 - x * x).sqrt()
            }
            Unary::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Unary::Softplus => sigmoid(x),
            Unary::Sigmoid => y * (1.0 - y),
            Unary::Scale(c) => c,
            Unary::Offset(_) => 1.0,
            Unary::ClampMin(lo) => {
                if x >= lo {
                    1.0
                } else {
                    0.0
                }
            }
            Unary::ClampMax(hi) => {
                if x <= hi {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    fn check_domain(self, m: &Matrix) -> Result<()> {
        let bad = |pred: &dyn Fn(f64) -> bool, what: &str| -> Result<()> {
            match m.iter().position(|&x| pred(x)) {
                Some(i) => Err(domain_err(self.name(), format!("{what} at flat index {i} (value {})", m.iter().nth(i).unwrap()))),
                None => Ok(()),
            }
        };
        match self {
            Unary::Log => bad(&|x| x <= 0.0, "non-positive input"),
            Unary::Sqrt => bad(&|x| x < 0.0, "negative input"),
            Unary::Acosh => bad(&|x| x < 1.0, "input below 1"),
            Unary::Acos => bad(&|x| !(-1.0..=1.0).contains(&x), "input outside [-1, 1]"),
            _ => Ok(()),
        }
    }

    fn name(self) -> &'static str {
        match self {
            Unary::Neg => "neg",
            Unary::Exp => "exp",
            Unary::Log => "log",
            Unary::Sqrt => "sqrt",
            Unary::Square => "square",
            Unary::Cosh => "cosh",
            Unary::Sinh => "sinh",
            Unary::Tanh => "tanh",
            Unary::Cos => "cos",
            Unary::Sin => "sin",
            Unary::Acosh => "acosh",
            Unary::Acos => "acos",
            Unary::Relu => "relu",
            Unary::Softplus => "softplus",
            Unary::Sigmoid => "sigmoid",
            Unary::Scale(_) => "scale",
            Unary::Offset(_) => "offset",
            Unary::ClampMin(_) => "clamp_min",
            Unary::ClampMax(_) => "clamp_max",
        }
    }
}

impl Op for Unary {
    fn name(&self) -> &'static str {
        Unary::name(*self)
    }

    fn forward(&self, inputs: &[&Matrix]) -> Result<Matrix> {
        self.check_domain(inputs[0])?;
        Ok(inputs[0].mapv(|x| self.apply(x)))
    }

    fn backward(&self, ctx: &BackwardContext<'_>) -> Result<Vec<Option<Matrix>>> {
        let g = Zip::from(ctx.grad)
            .and(ctx.inputs[0])
            .and(ctx.output)
            .map_collect(|&g, &x, &y| g * self.derivative(x, y));
        Ok(vec![Some(g)])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Reduction {
    /// Everything to `1 x 1`.
    Sum,
    Mean,
    /// `n x d` to `n x 1`.
    SumRows,
    /// `n x d` to `1 x d`.
    SumCols,
}

impl Op for Reduction {
    fn name(&self) -> &'static str {
        match self {
            Reduction::Sum => "sum",
            Reduction::Mean => "mean",
            Reduction::SumRows => "sum_rows",
            Reduction::SumCols => "sum_cols",
        }
    }

    fn forward(&self, inputs: &[&Matrix]) -> Result<Matrix> {
        let x = inputs[0];
        Ok(match self {
            Reduction::Sum => Matrix::from_elem((1, 1), x.sum()),
            Reduction::Mean => {
                if x.is_empty() {
                    return Err(TensorError::Contract("mean of an empty matrix".into()));
                }
                Matrix::from_elem((1, 1), x.sum() / x.len() as f64)
            }
            Reduction::SumRows => x.sum_axis(Axis(1)).insert_axis(Axis(1)),
            Reduction::SumCols => x.sum_axis(Axis(0)).insert_axis(Axis(0)),
        })
    }

    fn backward(&self, ctx: &BackwardContext<'_>) -> Result<Vec<Option<Matrix>>> {
        let shape = ctx.inputs[0].dim();
        let g = ctx.grad;
        let out = match self {
            Reduction::Sum => Matrix::from_elem(shape, g[[0, 0]]),
            Reduction::Mean => Matrix::from_elem(shape, g[[0, 0]] / (shape.0 * shape.1) as f64),
            Reduction::SumRows | Reduction::SumCols => g.broadcast(shape).expect("reduced shape").to_owned(),
        };
        Ok(vec![Some(out)])
    }
}

/// `a * b`, or `a * b^T` when `transpose_rhs` is set.
#[derive(Debug, Clone, Copy)]
pub struct MatMul {
    pub transpose_rhs: bool,
}

impl Op for MatMul {
    fn name(&self) -> &'static str {
        if self.transpose_rhs {
            "matmul_t"
        } else {
            "matmul"
        }
    }

    fn forward(&self, inputs: &[&Matrix]) -> Result<Matrix> {
        let (a, b) = (inputs[0], inputs[1]);
        let inner = if self.transpose_rhs { b.ncols() } else { b.nrows() };
        if a.ncols() != inner {
            return Err(shape_err(self.name(), format!("{:?} with {:?}", a.dim(), b.dim())));
        }
        Ok(if self.transpose_rhs { a.dot(&b.t()) } else { a.dot(b) })
    }

    fn backward(&self, ctx: &BackwardContext<'_>) -> Result<Vec<Option<Matrix>>> {
        let (a, b, g) = (ctx.inputs[0], ctx.inputs[1], ctx.grad);
        let ga = ctx.needs_grad[0].then(|| if self.transpose_rhs { g.dot(b) } else { g.dot(&b.t()) });
        let gb = ctx.needs_grad[1].then(|| if self.transpose_rhs { g.t().dot(a) } else { a.t().dot(g) });
        Ok(vec![ga, gb])
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Transpose;

impl Op for Transpose {
    fn name(&self) -> &'static str {
        "transpose"
    }

    fn forward(&self, inputs: &[&Matrix]) -> Result<Matrix> {
        Ok(inputs[0].t().to_owned())
    }

    fn backward(&self, ctx: &BackwardContext<'_>) -> Result<Vec<Option<Matrix>>> {
        Ok(vec![Some(ctx.grad.t().to_owned())])
    }
}

/// Row-wise softmax, or log-softmax when `log` is set.
#[derive(Debug, Clone, Copy)]
pub struct SoftmaxRows {
    pub log: bool,
}

pub(crate) fn softmax_rows(x: &Matrix) -> Matrix {
    let mut out = x.clone();
    for mut row in out.rows_mut() {
        let max = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        row.mapv_inplace(|v| (v - max).exp());
        let total = row.sum();
        row.mapv_inplace(|v| v / total);
    }
    out
}

impl Op for SoftmaxRows {
    fn name(&self) -> &'static str {
        if self.log {
            "log_softmax_rows"
        } else {
            "softmax_rows"
        }
    }

    fn forward(&self, inputs: &[&Matrix]) -> Result<Matrix> {
        let x = inputs[0];
        if x.ncols() == 0 {
            return Err(shape_err(self.name(), "softmax over zero columns"));
        }
        if !self.log {
            return Ok(softmax_rows(x));
        }
        let mut out = x.clone();
        for mut row in out.rows_mut() {
            let max = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
            let lse = max + row.iter().map(|&v| (v - max).exp()).sum::<f64>().ln();
            row.mapv_inplace(|v| v - lse);
        }
        Ok(out)
    }

    fn backward(&self, ctx: &BackwardContext<'_>) -> Result<Vec<Option<Matrix>>> {
        let g = ctx.grad;
        let y = ctx.output;
        let out = if self.log {
            let p = y.mapv(f64::exp);
            let gsum = g.sum_axis(Axis(1)).insert_axis(Axis(1));
            g - &(&p * &gsum)
        } else {
            let dot = (g * y).sum_axis(Axis(1)).insert_axis(Axis(1));
            y * &(g - &dot)
        };
        Ok(vec![Some(out)])
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ConcatCols;

impl Op for ConcatCols {
    fn name(&self) -> &'static str {
        "concat_cols"
    }

    fn forward(&self, inputs: &[&Matrix]) -> Result<Matrix> {
        let rows = inputs.first().map(|m| m.nrows()).unwrap_or(0);
        if let Some(m) = inputs.iter().find(|m| m.nrows() != rows) {
            return Err(shape_err("concat_cols", format!("row count {} vs {}", m.nrows(), rows)));
        }
        let views: Vec<_> = inputs.iter().map(|m| m.view()).collect();
        ndarray::concatenate(Axis(1), &views).map_err(|e| shape_err("concat_cols", e.to_string()))
    }

    fn backward(&self, ctx: &BackwardContext<'_>) -> Result<Vec<Option<Matrix>>> {
        let mut start = 0;
        let mut out = Vec::with_capacity(ctx.inputs.len());
        for (m, need) in ctx.inputs.iter().zip(ctx.needs_grad) {
            let end = start + m.ncols();
            out.push(need.then(|| ctx.grad.slice(s![.., start..end]).to_owned()));
            start = end;
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct SliceCols {
    pub start: usize,
    pub end: usize,
}

impl Op for SliceCols {
    fn name(&self) -> &'static str {
        "slice_cols"
    }

    fn forward(&self, inputs: &[&Matrix]) -> Result<Matrix> {
        let x = inputs[0];
        if self.start > self.end || self.end > x.ncols() {
            return Err(shape_err("slice_cols", format!("{}..{} of {} columns", self.start, self.end, x.ncols())));
        }
        Ok(x.slice(s![.., self.start..self.end]).to_owned())
    }

    fn backward(&self, ctx: &BackwardContext<'_>) -> Result<Vec<Option<Matrix>>> {
        let mut g = Matrix::zeros(ctx.inputs[0].dim());
        g.slice_mut(s![.., self.start..self.end]).assign(ctx.grad);
        Ok(vec![Some(g)])
    }
}

/// `out[r] = x[index[r]]`.
#[derive(Debug, Clone)]
pub struct GatherRows {
    pub index: Arc<Vec<usize>>,
}

impl Op for GatherRows {
    fn name(&self) -> &'static str {
        "gather_rows"
    }

    fn forward(&self, inputs: &[&Matrix]) -> Result<Matrix> {
        let x = inputs[0];
        if let Some(&bad) = self.index.iter().find(|&&i| i >= x.nrows()) {
            return Err(shape_err("gather_rows", format!("row {bad} of {}", x.nrows())));
        }
        Ok(x.select(Axis(0), &self.index))
    }

    fn backward(&self, ctx: &BackwardContext<'_>) -> Result<Vec<Option<Matrix>>> {
        let mut g = Matrix::zeros(ctx.inputs[0].dim());
        for (r, &i) in self.index.iter().enumerate() {
            g.row_mut(i).scaled_add(1.0, &ctx.grad.row(r));
        }
        Ok(vec![Some(g)])
    }
}

/// `out[index[r]] += x[r]` into an `rows x d` zero matrix.
#[derive(Debug, Clone)]
pub struct ScatterAddRows {
    pub index: Arc<Vec<usize>>,
    pub rows: usize,
}

impl Op for ScatterAddRows {
    fn name(&self) -> &'static str {
        "scatter_add_rows"
    }

    fn forward(&self, inputs: &[&Matrix]) -> Result<Matrix> {
        let x = inputs[0];
        if x.nrows() != self.index.len() {
            return Err(shape_err("scatter_add_rows", format!("{} rows for {} indices", x.nrows(), self.index.len())));
        }
        let mut out = Matrix::zeros((self.rows, x.ncols()));
        for (r, &i) in self.index.iter().enumerate() {
            if i >= self.rows {
                return Err(shape_err("scatter_add_rows", format!("target row {i} of {}", self.rows)));
            }
            out.row_mut(i).scaled_add(1.0, &x.row(r));
        }
        Ok(out)
    }

    fn backward(&self, ctx: &BackwardContext<'_>) -> Result<Vec<Option<Matrix>>> {
        Ok(vec![Some(ctx.grad.select(Axis(0), &self.index))])
    }
}

/// Picks `x[rows[i], cols[i]]` into a column vector.
#[derive(Debug, Clone)]
pub struct SelectEntries {
    pub rows: Arc<Vec<usize>>,
    pub cols: Arc<Vec<usize>>,
}

impl Op for SelectEntries {
    fn name(&self) -> &'static str {
        "select"
    }

    fn forward(&self, inputs: &[&Matrix]) -> Result<Matrix> {
        let x = inputs[0];
        if self.rows.len() != self.cols.len() {
            return Err(shape_err("select", "row and column index lists differ in length"));
        }
        let mut out = Matrix::zeros((self.rows.len(), 1));
        for (k, (&r, &c)) in self.rows.iter().zip(self.cols.iter()).enumerate() {
            out[[k, 0]] = *x
                .get((r, c))
                .ok_or_else(|| shape_err("select", format!("entry ({r}, {c}) of {:?}", x.dim())))?;
        }
        Ok(out)
    }

    fn backward(&self, ctx: &BackwardContext<'_>) -> Result<Vec<Option<Matrix>>> {
        let mut g = Matrix::zeros(ctx.inputs[0].dim());
        for (k, (&r, &c)) in self.rows.iter().zip(self.cols.iter()).enumerate() {
            g[[r, c]] += ctx.grad[[k, 0]];
        }
        Ok(vec![Some(g)])
    }
}

/// Constant sparse matrix times a variable: gather, multiply, scatter.
#[derive(Debug, Clone)]
pub struct Spmm {
    pub lhs: Arc<CsrMatrix>,
}

impl Op for Spmm {
    fn name(&self) -> &'static str {
        "spmm"
    }

    fn forward(&self, inputs: &[&Matrix]) -> Result<Matrix> {
        self.lhs.mul_dense(inputs[0])
    }

    fn backward(&self, ctx: &BackwardContext<'_>) -> Result<Vec<Option<Matrix>>> {
        Ok(vec![Some(self.lhs.transpose_mul_dense(ctx.grad)?)])
    }
}

/// Euclidean norm of each row, `n x d` to `n x 1`. The gradient at a zero row is zero.
#[derive(Debug, Clone, Copy)]
pub struct NormRows;

impl Op for NormRows {
    fn name(&self) -> &'static str {
        "norm_rows"
    }

    fn forward(&self, inputs: &[&Matrix]) -> Result<Matrix> {
        Ok(inputs[0].map_axis(Axis(1), |r| r.dot(&r).sqrt()).insert_axis(Axis(1)))
    }

    fn backward(&self, ctx: &BackwardContext<'_>) -> Result<Vec<Option<Matrix>>> {
        let x = ctx.inputs[0];
        let mut g = x.clone();
        for ((mut row, &n), &gr) in g.rows_mut().into_iter().zip(ctx.output.iter()).zip(ctx.grad.iter()) {
            let coef = if n < NORM_FLOOR { 0.0 } else { gr / n };
            row.mapv_inplace(|v| v * coef);
        }
        Ok(vec![Some(g)])
    }
}

impl<'t> Var<'t> {
    fn binary(self, kind: BinaryKind, other: Var<'t>) -> Result<Var<'t>> {
        self.tape().apply(Binary(kind), &[self, other])
    }

    fn unary(self, f: Unary) -> Result<Var<'t>> {
        self.tape().apply(f, &[self])
    }

    pub fn add(self, other: Var<'t>) -> Result<Var<'t>> {
        self.binary(BinaryKind::Add, other)
    }

    pub fn sub(self, other: Var<'t>) -> Result<Var<'t>> {
        self.binary(BinaryKind::Sub, other)
    }

    pub fn mul(self, other: Var<'t>) -> Result<Var<'t>> {
        self.binary(BinaryKind::Mul, other)
    }

    pub fn div(self, other: Var<'t>) -> Result<Var<'t>> {
        self.binary(BinaryKind::Div, other)
    }

    pub fn neg(self) -> Result<Var<'t>> {
        self.unary(Unary::Neg)
    }

    pub fn scale(self, c: f64) -> Result<Var<'t>> {
        self.unary(Unary::Scale(c))
    }

    pub fn offset(self, c: f64) -> Result<Var<'t>> {
        self.unary(Unary::Offset(c))
    }

    pub fn exp(self) -> Result<Var<'t>> {
        self.unary(Unary::Exp)
    }

    pub fn log(self) -> Result<Var<'t>> {
        self.unary(Unary::Log)
    }

    pub fn sqrt(self) -> Result<Var<'t>> {
        self.unary(Unary::Sqrt)
    }

    pub fn square(self) -> Result<Var<'t>> {
        self.unary(Unary::Square)
    }

    pub fn cosh(self) -> Result<Var<'t>> {
        self.unary(Unary::Cosh)
    }

    pub fn sinh(self) -> Result<Var<'t>> {
        self.unary(Unary::Sinh)
    }

    pub fn tanh(self) -> Result<Var<'t>> {
        self.unary(Unary::Tanh)
    }

    pub fn cos(self) -> Result<Var<'t>> {
        self.unary(Unary::Cos)
    }

    pub fn sin(self) -> Result<Var<'t>> {
        self.unary(Unary::Sin)
    }

    pub fn acosh(self) -> Result<Var<'t>> {
        self.unary(Unary::Acosh)
    }

    pub fn acos(self) -> Result<Var<'t>> {
        self.unary(Unary::Acos)
    }

    pub fn relu(self) -> Result<Var<'t>> {
        self.unary(Unary::Relu)
    }

    pub fn softplus(self) -> Result<Var<'t>> {
        self.unary(Unary::Softplus)
    }

    pub fn sigmoid(self) -> Result<Var<'t>> {
        self.unary(Unary::Sigmoid)
    }

    pub fn clamp_min(self, lo: f64) -> Result<Var<'t>> {
        self.unary(Unary::ClampMin(lo))
    }

    pub fn clamp_max(self, hi: f64) -> Result<Var<'t>> {
        self.unary(Unary::ClampMax(hi))
    }

    pub fn sum(self) -> Result<Var<'t>> {
        self.tape().apply(Reduction::Sum, &[self])
    }

    pub fn mean(self) -> Result<Var<'t>> {
        self.tape().apply(Reduction::Mean, &[self])
    }

    pub fn sum_rows(self) -> Result<Var<'t>> {
        self.tape().apply(Reduction::SumRows, &[self])
    }

    pub fn sum_cols(self) -> Result<Var<'t>> {
        self.tape().apply(Reduction::SumCols, &[self])
    }

    pub fn norm_rows(self) -> Result<Var<'t>> {
        self.tape().apply(NormRows, &[self])
    }

    pub fn matmul(self, rhs: Var<'t>) -> Result<Var<'t>> {
        self.tape().apply(MatMul { transpose_rhs: false }, &[self, rhs])
    }

    /// `self * rhs^T`.
    pub fn matmul_t(self, rhs: Var<'t>) -> Result<Var<'t>> {
        self.tape().apply(MatMul { transpose_rhs: true }, &[self, rhs])
    }

    pub fn t(self) -> Result<Var<'t>> {
        self.tape().apply(Transpose, &[self])
    }

    pub fn softmax_rows(self) -> Result<Var<'t>> {
        self.tape().apply(SoftmaxRows { log: false }, &[self])
    }

    pub fn log_softmax_rows(self) -> Result<Var<'t>> {
        self.tape().apply(SoftmaxRows { log: true }, &[self])
    }

    pub fn concat_cols(parts: &[Var<'t>]) -> Result<Var<'t>> {
        let first = parts.first().ok_or_else(|| TensorError::Contract("concat of nothing".into()))?;
        first.tape().apply(ConcatCols, parts)
    }

    pub fn slice_cols(self, start: usize, end: usize) -> Result<Var<'t>> {
        self.tape().apply(SliceCols { start, end }, &[self])
    }

    pub fn gather_rows(self, index: Arc<Vec<usize>>) -> Result<Var<'t>> {
        self.tape().apply(GatherRows { index }, &[self])
    }

    pub fn scatter_add_rows(self, index: Arc<Vec<usize>>, rows: usize) -> Result<Var<'t>> {
        self.tape().apply(ScatterAddRows { index, rows }, &[self])
    }

    pub fn select(self, rows: Arc<Vec<usize>>, cols: Arc<Vec<usize>>) -> Result<Var<'t>> {
        self.tape().apply(SelectEntries { rows, cols }, &[self])
    }

    /// `lhs * self` for a constant sparse `lhs`.
    pub fn left_spmm(self, lhs: Arc<CsrMatrix>) -> Result<Var<'t>> {
        self.tape().apply(Spmm { lhs }, &[self])
    }
}
