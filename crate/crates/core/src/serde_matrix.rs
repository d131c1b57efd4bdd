//! Matrices as nested JSON arrays (`[[row], [row], ...]`).

use curvgnn_autodiff::Matrix;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

pub fn to_rows(m: &Matrix) -> Vec<Vec<f64>> {
    m.rows().into_iter().map(|r| r.to_vec()).collect()
}

pub fn from_rows(rows: Vec<Vec<f64>>, cols_if_empty: usize) -> Result<Matrix, String> {
    let cols = rows.first().map_or(cols_if_empty, Vec::len);
    let n = rows.len();
    let mut flat = Vec::with_capacity(n * cols);
    for (i, r) in rows.into_iter().enumerate() {
        if r.len() != cols {
            return Err(format!("row {i} has {} entries, expected {cols}", r.len()));
        }
        flat.extend(r);
    }
    Matrix::from_shape_vec((n, cols), flat).map_err(|e| e.to_string())
}

pub fn serialize<S: Serializer>(m: &Matrix, s: S) -> Result<S::Ok, S::Error> {
    to_rows(m).serialize(s)
}

pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Matrix, D::Error> {
    let rows = Vec::<Vec<f64>>::deserialize(d)?;
    from_rows(rows, 0).map_err(serde::de::Error::custom)
}

pub mod arc {
    use std::sync::Arc;

    use super::*;

    pub fn serialize<S: Serializer>(m: &Arc<Matrix>, s: S) -> Result<S::Ok, S::Error> {
        super::serialize(m, s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Arc<Matrix>, D::Error> {
        super::deserialize(d).map(Arc::new)
    }
}
