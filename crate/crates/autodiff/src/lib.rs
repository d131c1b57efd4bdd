//! A small tape-based reverse-mode differentiation engine over dense `f64` matrices.
//!
//! ```
//! use curvgnn_autodiff::{Matrix, Tape};
//!
//! let tape = Tape::new();
//! let x = tape.param(Matrix::from_elem((1, 1), 3.0));
//! let y = x.square().unwrap();
//! let grads = tape.backward(y).unwrap();
//! assert_eq!(grads.get(&x).unwrap()[[0, 0]], 6.0);
//! ```

mod error;
mod gradcheck;
mod ops;
mod optim;
mod sparse;
mod tape;

pub use error::{Result, TensorError};
pub use gradcheck::{analytic_gradients, compare_gradients, evaluate, grad_check, numeric_gradients, GradCheckReport};
pub use ops::{
    Binary, BinaryKind, ConcatCols, GatherRows, MatMul, NormRows, Reduction, ScatterAddRows, SelectEntries,
    SliceCols, SoftmaxRows, Spmm, Transpose, Unary, ACOSH_GRAD_FLOOR, ACOS_GRAD_FLOOR, NORM_FLOOR,
};
pub use optim::{AdamConfig, OptimizerState};
pub use sparse::CsrMatrix;
pub use tape::{BackwardContext, Gradients, Matrix, Op, Tape, Var};
