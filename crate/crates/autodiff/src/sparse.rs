//! Constant compressed-sparse-row matrices used on the left of a dense product.

use crate::error::{shape_err, Result};
use crate::tape::Matrix;

#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    rows: usize,
    cols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    /// Builds from `(row, col, value)` entries. Entries keep their relative
    /// order within a row, so products sum in a reproducible order.
    pub fn from_triplets(rows: usize, cols: usize, entries: &[(usize, usize, f64)]) -> Result<Self> {
        let mut counts = vec![0usize; rows];
        for &(r, c, _) in entries {
            if r >= rows || c >= cols {
                return Err(shape_err(
                    "csr",
                    format!("entry ({r}, {c}) outside {rows} x {cols}"),
                ));
            }
            counts[r] += 1;
        }
        let mut indptr = Vec::with_capacity(rows + 1);
        indptr.push(0);
        for c in &counts {
            indptr.push(indptr.last().unwrap() + c);
        }
        let mut cursor = indptr[..rows].to_vec();
        let mut indices = vec![0; entries.len()];
        let mut values = vec![0.0; entries.len()];
        for &(r, c, v) in entries {
            indices[cursor[r]] = c;
            values[cursor[r]] = v;
            cursor[r] += 1;
        }
        Ok(Self { rows, cols, indptr, indices, values })
    }

    /// Keeps the non-zero entries of a dense matrix.
    pub fn from_dense(m: &Matrix) -> Self {
        let (rows, cols) = m.dim();
        let mut indptr = Vec::with_capacity(rows + 1);
        let mut indices = Vec::new();
        let mut values = Vec::new();
        indptr.push(0);
        for row in m.rows() {
            for (c, &v) in row.iter().enumerate() {
                if v != 0.0 {
                    indices.push(c);
                    values.push(v);
                }
            }
            indptr.push(indices.len());
        }
        Self { rows, cols, indptr, indices, values }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// `(col, value)` pairs of one row.
    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.indptr[r]..self.indptr[r + 1];
        self.indices[span.clone()].iter().copied().zip(self.values[span].iter().copied())
    }

    /// Returns a copy whose values are mapped through `f(row, col, value)`.
    pub fn map_values(&self, mut f: impl FnMut(usize, usize, f64) -> f64) -> Self {
        let mut out = self.clone();
        for r in 0..self.rows {
            for k in self.indptr[r]..self.indptr[r + 1] {
                out.values[k] = f(r, self.indices[k], self.values[k]);
            }
        }
        out
    }

    pub fn to_dense(&self) -> Matrix {
        let mut m = Matrix::zeros((self.rows, self.cols));
        for r in 0..self.rows {
            for (c, v) in self.row(r) {
                m[[r, c]] += v;
            }
        }
        m
    }

    /// `self * dense`.
    pub fn mul_dense(&self, dense: &Matrix) -> Result<Matrix> {
        if dense.nrows() != self.cols {
            return Err(shape_err(
                "spmm",
                format!("{} x {} times {:?}", self.rows, self.cols, dense.dim()),
            ));
        }
        let mut out = Matrix::zeros((self.rows, dense.ncols()));
        for r in 0..self.rows {
            let mut out_row = out.row_mut(r);
            for (c, v) in self.row(r) {
                out_row.scaled_add(v, &dense.row(c));
            }
        }
        Ok(out)
    }

    /// `self^T * dense`, computed by scattering rows.
    pub fn transpose_mul_dense(&self, dense: &Matrix) -> Result<Matrix> {
        if dense.nrows() != self.rows {
            return Err(shape_err(
                "spmm_t",
                format!("({} x {})^T times {:?}", self.rows, self.cols, dense.dim()),
            ));
        }
        let mut out = Matrix::zeros((self.cols, dense.ncols()));
        for r in 0..self.rows {
            let src = dense.row(r);
            for (c, v) in self.row(r) {
                out.row_mut(c).scaled_add(v, &src);
            }
        }
        Ok(out)
    }
}
