//! Central finite-difference verification of reverse-mode gradients.

use crate::error::{Result, TensorError};
use crate::tape::{Matrix, Tape, Var};

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_relative_error: f64,
    /// `(parameter, flat index)` where the largest error occurred.
    pub worst: Option<(usize, usize)>,
    pub pass: bool,
}

fn check_step(step: f64) -> Result<()> {
    if !(1e-7..=1e-3).contains(&step) {
        return Err(TensorError::Contract(format!("finite-difference step {step} outside [1e-7, 1e-3]")));
    }
    Ok(())
}

/// Evaluates the scalar `f` at `params` on a fresh tape.
pub fn evaluate<F>(f: &F, params: &[Matrix]) -> Result<f64>
where
    F: for<'t> Fn(&'t Tape, &[Var<'t>]) -> Result<Var<'t>>,
{
    let tape = Tape::new();
    let vars: Vec<Var<'_>> = params.iter().map(|p| tape.constant(p.clone())).collect();
    f(&tape, &vars)?.scalar_value()
}

/// Reverse-mode gradients of `f` at `params`. Parameters that do not reach
/// the output get a zero gradient.
pub fn analytic_gradients<F>(f: &F, params: &[Matrix]) -> Result<Vec<Matrix>>
where
    F: for<'t> Fn(&'t Tape, &[Var<'t>]) -> Result<Var<'t>>,
{
    let tape = Tape::new();
    let vars: Vec<Var<'_>> = params.iter().map(|p| tape.param(p.clone())).collect();
    let out = f(&tape, &vars)?;
    let grads = tape.backward(out)?;
    Ok(vars
        .iter()
        .zip(params)
        .map(|(v, p)| grads.get(v).cloned().unwrap_or_else(|| Matrix::zeros(p.dim())))
        .collect())
}

/// Central differences `(f(x + h e_i) - f(x - h e_i)) / 2h` for every coordinate.
pub fn numeric_gradients<F>(f: &F, params: &[Matrix], step: f64) -> Result<Vec<Matrix>>
where
    F: for<'t> Fn(&'t Tape, &[Var<'t>]) -> Result<Var<'t>>,
{
    check_step(step)?;
    let mut work = params.to_vec();
    let mut out = Vec::with_capacity(params.len());
    for p in 0..params.len() {
        let mut g = Matrix::zeros(params[p].dim());
        for index in 0..params[p].len() {
            let original = params[p].as_slice_memory_order().map(|s| s[index]);
            let original = original.unwrap_or_else(|| params[p].iter().nth(index).copied().unwrap());
            let mut at = |x: f64| -> Result<f64> {
                set_flat(&mut work[p], index, x);
                let v = evaluate(f, &work)?;
                if !v.is_finite() {
                    return Err(TensorError::NonFinite { param: p, index });
                }
                Ok(v)
            };
            let plus = at(original + step)?;
            let minus = at(original - step)?;
            set_flat(&mut work[p], index, original);
            set_flat(&mut g, index, (plus - minus) / (2.0 * step));
        }
        out.push(g);
    }
    Ok(out)
}

fn set_flat(m: &mut Matrix, index: usize, value: f64) {
    let cols = m.ncols();
    m[[index / cols, index % cols]] = value;
}

/// Compares gradient sets with the relative error `|a - n| / max(1, |a|, |n|)`.
pub fn compare_gradients(analytic: &[Matrix], numeric: &[Matrix], tol: f64) -> Result<GradCheckReport> {
    if analytic.len() != numeric.len() {
        return Err(TensorError::Contract("gradient lists differ in length".into()));
    }
    let mut report = GradCheckReport { max_relative_error: 0.0, worst: None, pass: true };
    for (p, (a, n)) in analytic.iter().zip(numeric).enumerate() {
        if a.dim() != n.dim() {
            return Err(TensorError::Contract(format!("gradient {p} shapes {:?} vs {:?}", a.dim(), n.dim())));
        }
        for (index, (&x, &y)) in a.iter().zip(n.iter()).enumerate() {
            if !x.is_finite() {
                return Err(TensorError::NonFinite { param: p, index });
            }
            let err = (x - y).abs() / 1f64.max(x.abs()).max(y.abs());
            if err > report.max_relative_error || report.worst.is_none() {
                report.max_relative_error = err.max(report.max_relative_error);
                report.worst = Some((p, index));
            }
        }
    }
    report.pass = report.max_relative_error <= tol;
    Ok(report)
}

/// Checks reverse-mode gradients of the scalar function `f` against central differences.
pub fn grad_check<F>(f: F, params: &[Matrix], step: f64, tol: f64) -> Result<GradCheckReport>
where
    F: for<'t> Fn(&'t Tape, &[Var<'t>]) -> Result<Var<'t>>,
{
    check_step(step)?;
    let analytic = analytic_gradients(&f, params)?;
    let numeric = numeric_gradients(&f, params, step)?;
    compare_gradients(&analytic, &numeric, tol)
}
