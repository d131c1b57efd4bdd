use std::sync::Arc;

use curvgnn_autodiff::{
    analytic_gradients, compare_gradients, grad_check, numeric_gradients, AdamConfig, CsrMatrix, Matrix,
    OptimizerState, Result, Tape, TensorError, Var,
};
use ndarray::array;
use proptest::prelude::*;

fn lcg_matrix(rows: usize, cols: usize, seed: u64, lo: f64, hi: f64) -> Matrix {
    let mut s = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
    Matrix::from_shape_fn((rows, cols), |_| {
        s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        lo + (hi - lo) * ((s >> 11) as f64 / (1u64 << 53) as f64)
    })
}

fn check_unary(name: &str, f: fn(Var<'_>) -> Result<Var<'_>>, lo: f64, hi: f64) {
    let x = lcg_matrix(3, 4, name.len() as u64, lo, hi);
    let weights = lcg_matrix(3, 4, 99, -1.0, 1.0);
    let report = grad_check(
        |tape, p| {
            let w = tape.constant(weights.clone());
            f(p[0])?.mul(w)?.sum()
        },
        &[x],
        1e-6,
        1e-6,
    )
    .unwrap();
    assert!(report.pass, "{name}: {report:?}");
}

#[test]
fn unary_primitives_pass_gradient_check() {
    check_unary("neg", |x| x.neg(), -2.0, 2.0);
    check_unary("exp", |x| x.exp(), -2.0, 2.0);
    check_unary("log", |x| x.log(), 0.5, 3.0);
    check_unary("sqrt", |x| x.sqrt(), 0.5, 3.0);
    check_unary("square", |x| x.square(), -2.0, 2.0);
    check_unary("cosh", |x| x.cosh(), -2.0, 2.0);
    check_unary("sinh", |x| x.sinh(), -2.0, 2.0);
    check_unary("tanh", |x| x.tanh(), -2.0, 2.0);
    check_unary("cos", |x| x.cos(), -2.0, 2.0);
    check_unary("sin", |x| x.sin(), -2.0, 2.0);
    check_unary("acosh", |x| x.acosh(), 1.2, 4.0);
    check_unary("acos", |x| x.acos(), -0.9, 0.9);
    check_unary("relu", |x| x.relu(), 0.1, 2.0);
    check_unary("relu-neg", |x| x.relu(), -2.0, -0.1);
    check_unary("softplus", |x| x.softplus(), -3.0, 3.0);
    check_unary("sigmoid", |x| x.sigmoid(), -3.0, 3.0);
    check_unary("scale", |x| x.scale(-2.5), -2.0, 2.0);
    check_unary("offset", |x| x.offset(0.7), -2.0, 2.0);
    check_unary("clamp_min", |x| x.clamp_min(0.0), 0.1, 2.0);
    check_unary("clamp_max", |x| x.clamp_max(0.0), 0.1, 2.0);
    check_unary("norm_rows", |x| x.norm_rows(), -2.0, 2.0);
    check_unary("softmax_rows", |x| x.softmax_rows(), -2.0, 2.0);
    check_unary("log_softmax_rows", |x| x.log_softmax_rows(), -2.0, 2.0);
    check_unary("sum_rows", |x| x.sum_rows(), -2.0, 2.0);
    check_unary("sum_cols", |x| x.sum_cols(), -2.0, 2.0);
    check_unary("mean", |x| x.mean(), -2.0, 2.0);
    check_unary("transpose", |x| x.t()?.sin()?.t(), -2.0, 2.0);
    check_unary("slice", |x| x.slice_cols(1, 3)?.sum_rows(), -2.0, 2.0);
}

#[test]
fn binary_primitives_pass_gradient_check_with_broadcasting() {
    let shapes = [((3, 4), (3, 4)), ((3, 4), (1, 4)), ((3, 4), (3, 1)), ((1, 1), (3, 4)), ((3, 1), (1, 4))];
    for (i, (sa, sb)) in shapes.into_iter().enumerate() {
        let a = lcg_matrix(sa.0, sa.1, i as u64, -2.0, 2.0);
        let b = lcg_matrix(sb.0, sb.1, 50 + i as u64, 0.5, 2.0);
        for op in 0..4 {
            let report = grad_check(
                |_, p| {
                    let out = match op {
                        0 => p[0].add(p[1]),
                        1 => p[0].sub(p[1]),
                        2 => p[0].mul(p[1]),
                        _ => p[0].div(p[1]),
                    }?;
                    out.square()?.sum()
                },
                &[a.clone(), b.clone()],
                1e-6,
                1e-6,
            )
            .unwrap();
            assert!(report.pass, "op {op} shapes {sa:?} {sb:?}: {report:?}");
        }
    }
}

#[test]
fn structural_primitives_pass_gradient_check() {
    let a = lcg_matrix(4, 3, 1, -1.0, 1.0);
    let b = lcg_matrix(3, 2, 2, -1.0, 1.0);
    let c = lcg_matrix(5, 3, 3, -1.0, 1.0);
    let idx = Arc::new(vec![2, 0, 2, 3, 1]);
    let sparse = Arc::new(
        CsrMatrix::from_triplets(4, 4, &[(0, 1, 0.5), (1, 0, 0.5), (2, 2, 1.0), (3, 0, -0.3), (3, 3, 0.7)]).unwrap(),
    );
    let report = grad_check(
        |tape, p| {
            let prod = p[0].matmul(p[1])?;
            let prod_t = p[0].matmul_t(p[2])?;
            let cat = Var::concat_cols(&[prod, prod_t, p[0]])?;
            let gathered = cat.gather_rows(idx.clone())?;
            let scattered = gathered.scatter_add_rows(idx.clone(), 4)?;
            let mixed = scattered.left_spmm(sparse.clone())?;
            let picked = mixed.select(Arc::new(vec![0, 1, 3, 3]), Arc::new(vec![0, 4, 2, 9]))?;
            let w = tape.constant(lcg_matrix(4, 10, 8, -1.0, 1.0));
            mixed.mul(w)?.sum()?.add(picked.square()?.sum()?)
        },
        &[a, b, c],
        1e-6,
        1e-6,
    )
    .unwrap();
    assert!(report.pass, "{report:?}");
}

#[test]
fn matmul_forward_example() {
    let tape = Tape::new();
    let a = tape.constant(array![[1.0, 2.0], [3.0, 4.0]]);
    let b = tape.constant(array![[1.0], [1.0]]);
    assert_eq!(*a.matmul(b).unwrap().value().unwrap(), array![[3.0], [7.0]]);
}

#[test]
fn softmax_and_relu_examples() {
    let tape = Tape::new();
    let s = tape.constant(array![[0.0, 0.0, 0.0]]).softmax_rows().unwrap().value().unwrap();
    for &p in s.iter() {
        assert!((p - 1.0 / 3.0).abs() < 1e-15);
    }
    let r = tape.constant(array![[-1.0, 2.0]]).relu().unwrap().value().unwrap();
    assert_eq!(*r, array![[0.0, 2.0]]);
}

#[test]
fn scalar_backward_examples() {
    let tape = Tape::new();
    let x = tape.param(array![[3.0]]);
    let y = x.square().unwrap();
    assert_eq!(tape.backward(y).unwrap().get(&x).unwrap()[[0, 0]], 6.0);

    let x = tape.param(array![[0.0]]);
    let y = x.sinh().unwrap();
    assert_eq!(tape.backward(y).unwrap().get(&x).unwrap()[[0, 0]], 1.0);
}

#[test]
fn matmul_sum_matches_finite_differences() {
    let w = lcg_matrix(4, 4, 17, -1.0, 1.0);
    let v = lcg_matrix(4, 1, 18, -1.0, 1.0);
    let report = grad_check(|tape, p| p[0].matmul(tape.constant(v.clone()))?.sum(), &[w], 1e-5, 1e-6).unwrap();
    assert!(report.pass, "{report:?}");
}

fn sum_of_squares<'t>(_: &'t Tape, p: &[Var<'t>]) -> Result<Var<'t>> {
    p[0].square()?.sum()?.add(p[1].square()?.sum()?)
}

fn plain_sum<'t>(_: &'t Tape, p: &[Var<'t>]) -> Result<Var<'t>> {
    p[0].sum()
}

fn overflowing<'t>(_: &'t Tape, p: &[Var<'t>]) -> Result<Var<'t>> {
    p[0].exp()?.scale(1e308)?.scale(1e10)?.sum()
}

fn tanh_log_softmax<'t>(_: &'t Tape, p: &[Var<'t>]) -> Result<Var<'t>> {
    p[0].matmul(p[1])?.tanh()?.log_softmax_rows()?.mean()
}

#[test]
fn sum_of_squares_passes_and_corrupted_gradient_fails() {
    let params = vec![lcg_matrix(3, 3, 5, -2.0, 2.0), lcg_matrix(1, 4, 6, -2.0, 2.0)];
    let f = sum_of_squares;
    let report = grad_check(f, &params, 1e-5, 1e-6).unwrap();
    assert!(report.pass);

    let analytic = analytic_gradients(&f, &params).unwrap();
    let numeric = numeric_gradients(&f, &params, 1e-5).unwrap();
    let corrupted: Vec<Matrix> = analytic.iter().map(|g| g * 1.01).collect();
    let report = compare_gradients(&corrupted, &numeric, 1e-6).unwrap();
    assert!(!report.pass, "{report:?}");
}

#[test]
fn grad_check_rejects_bad_step_and_reports_non_finite() {
    let x = array![[1.0, 2.0]];
    let f = plain_sum;
    assert!(matches!(grad_check(f, std::slice::from_ref(&x), 1e-2, 1e-6), Err(TensorError::Contract(_))));

    let y = array![[1.0, 1e-7]];
    let err = numeric_gradients(&overflowing, &[y], 1e-6);
    assert!(matches!(err, Err(TensorError::NonFinite { param: 0, index: 0 })));
}

#[test]
fn backward_requires_scalar_and_clears_tape() {
    let tape = Tape::new();
    let x = tape.param(array![[1.0, 2.0]]);
    let y = x.square().unwrap();
    assert!(matches!(tape.backward(y), Err(TensorError::Contract(_))));

    let s = y.sum().unwrap();
    let grads = tape.backward(s).unwrap();
    assert_eq!(grads.get(&x).unwrap(), &array![[2.0, 4.0]]);
    assert!(tape.is_empty());
    assert!(matches!(x.value(), Err(TensorError::StaleVar)));
}

#[test]
fn sequential_backward_passes_do_not_interfere() {
    let tape = Tape::new();
    let first = {
        let x = tape.param(array![[2.0]]);
        let y = x.cube_like().unwrap();
        tape.backward(y).unwrap().get(&x).unwrap()[[0, 0]]
    };
    let second = {
        let x = tape.param(array![[2.0]]);
        let y = x.cube_like().unwrap();
        tape.backward(y).unwrap().get(&x).unwrap()[[0, 0]]
    };
    assert_eq!(first, 12.0);
    assert_eq!(first.to_bits(), second.to_bits());
}

trait CubeLike<'t> {
    fn cube_like(self) -> Result<Var<'t>>;
}

impl<'t> CubeLike<'t> for Var<'t> {
    fn cube_like(self) -> Result<Var<'t>> {
        self.square()?.mul(self)
    }
}

#[test]
fn shape_and_domain_errors() {
    let tape = Tape::new();
    let a = tape.constant(Matrix::zeros((2, 3)));
    let b = tape.constant(Matrix::zeros((2, 2)));
    assert!(matches!(a.matmul(b), Err(TensorError::Shape { .. })));
    assert!(matches!(a.add(tape.constant(Matrix::zeros((3, 3)))), Err(TensorError::Shape { .. })));
    assert!(matches!(tape.constant(array![[0.5]]).acosh(), Err(TensorError::Domain { .. })));
    assert!(matches!(tape.constant(array![[-1.0]]).log(), Err(TensorError::Domain { .. })));
    assert!(matches!(a.div(tape.scalar(0.0)), Err(TensorError::Domain { .. })));
}

#[test]
fn gradients_are_bit_identical_across_runs() {
    let params = vec![lcg_matrix(5, 4, 3, -1.0, 1.0), lcg_matrix(4, 3, 4, -1.0, 1.0)];
    let f = tanh_log_softmax;
    let a = analytic_gradients(&f, &params).unwrap();
    let b = analytic_gradients(&f, &params).unwrap();
    for (x, y) in a.iter().zip(&b) {
        assert!(x.iter().zip(y.iter()).all(|(p, q)| p.to_bits() == q.to_bits()));
    }
}

#[test]
fn adam_zero_gradient_leaves_parameter_unchanged() {
    let config = AdamConfig { weight_decay: 0.0, ..AdamConfig::default() };
    let mut params = vec![array![[1.5, -2.0]]];
    let mut state = OptimizerState::new(config, &params);
    state.step(&mut params, &[Some(Matrix::zeros((1, 2)))]).unwrap();
    assert_eq!(params[0], array![[1.5, -2.0]]);
    assert_eq!(state.step_count, 1);
}

#[test]
fn adam_first_step_moves_by_learning_rate() {
    let config = AdamConfig { learning_rate: 0.1, weight_decay: 0.0, ..AdamConfig::default() };
    let mut params = vec![array![[0.0]]];
    let mut state = OptimizerState::new(config, &params);
    state.step(&mut params, &[Some(array![[1.0]])]).unwrap();
    // m_hat = 1, v_hat = 1, so the step is lr / (1 + eps).
    let expected = -0.1 / (1.0 + 1e-8);
    assert!((params[0][[0, 0]] - expected).abs() < 1e-15);
}

#[test]
fn adam_constant_gradient_approaches_learning_rate_steps() {
    let config = AdamConfig { learning_rate: 0.01, weight_decay: 0.0, ..AdamConfig::default() };
    let mut params = vec![array![[0.0]]];
    let mut state = OptimizerState::new(config, &params);
    let mut previous = 0.0;
    for _ in 0..500 {
        state.step(&mut params, &[Some(array![[-3.0]])]).unwrap();
        let delta = params[0][[0, 0]] - previous;
        previous = params[0][[0, 0]];
        assert!((delta - 0.01).abs() < 1e-6);
    }
}

#[test]
fn adam_missing_gradient_is_a_contract_error() {
    let mut params = vec![array![[1.0]], array![[2.0]]];
    let mut state = OptimizerState::new(AdamConfig::default(), &params);
    let err = state.step(&mut params, &[Some(array![[1.0]]), None]);
    assert!(matches!(err, Err(TensorError::Contract(_))));
    assert_eq!(state.step_count, 0);
}

proptest! {
    #[test]
    fn softmax_rows_sum_to_one(values in proptest::collection::vec(-30.0f64..30.0, 12)) {
        let tape = Tape::new();
        let x = tape.constant(Matrix::from_shape_vec((3, 4), values).unwrap());
        let s = x.softmax_rows().unwrap().value().unwrap();
        for row in s.rows() {
            prop_assert!((row.sum() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn random_compositions_pass_gradient_check(
        values in proptest::collection::vec(-1.5f64..1.5, 6),
        weights in proptest::collection::vec(-1.0f64..1.0, 6),
    ) {
        let x = Matrix::from_shape_vec((2, 3), values).unwrap();
        let w = Matrix::from_shape_vec((3, 2), weights).unwrap();
        let report = grad_check(
            |_, p| p[0].matmul(p[1])?.cosh()?.log()?.add(p[0].sin()?.matmul(p[1])?)?.softplus()?.sum(),
            &[x, w],
            1e-6,
            1e-6,
        ).unwrap();
        prop_assert!(report.pass, "{:?}", report);
    }
}
