//! JSON forms of complex scalars and matrices.
//!
//! A scalar is either a bare number or `[re, im]`; a matrix is a list of
//! rows of scalars.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{CMat, C64};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Scalar {
    Real(f64),
    Complex([f64; 2]),
}

impl Scalar {
    pub fn value(self) -> C64 {
        match self {
            Scalar::Real(re) => C64::new(re, 0.0),
            Scalar::Complex([re, im]) => C64::new(re, im),
        }
    }
}

impl From<C64> for Scalar {
    fn from(z: C64) -> Self {
        if z.im == 0.0 {
            Scalar::Real(z.re)
        } else {
            Scalar::Complex([z.re, z.im])
        }
    }
}

pub type Matrix = Vec<Vec<Scalar>>;

pub fn scalars(values: &[Scalar]) -> Vec<C64> {
    values.iter().map(|s| s.value()).collect()
}

pub fn to_matrix(m: &CMat) -> Matrix {
    (0..m.nrows()).map(|i| (0..m.ncols()).map(|j| Scalar::from(m[(i, j)])).collect()).collect()
}

/// Parses a rectangular matrix; `what` names it in error messages.
pub fn from_matrix(rows: &Matrix, what: &str) -> Result<CMat> {
    let n = rows.len();
    let k = rows.first().map_or(0, Vec::len);
    if let Some(i) = rows.iter().position(|r| r.len() != k) {
        return Err(Error::Manifest(format!("{what}: row {i} has {} entries, expected {k}", rows[i].len())));
    }
    Ok(CMat::from_fn(n, k, |i, j| rows[i][j].value()))
}

pub fn square(rows: &Matrix, dim: usize, what: &str) -> Result<CMat> {
    let m = from_matrix(rows, what)?;
    if m.shape() != (dim, dim) {
        return Err(Error::Manifest(format!("{what}: expected {dim}x{dim}, got {}x{}", m.nrows(), m.ncols())));
    }
    Ok(m)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scalars_and_matrices() {
        let rows: Matrix = serde_json::from_str("[[1, [0, 2]], [[3.5, -1], 0]]").unwrap();
        let m = from_matrix(&rows, "m").unwrap();
        assert_eq!(m[(0, 1)], C64::new(0.0, 2.0));
        assert_eq!(m[(1, 0)], C64::new(3.5, -1.0));
        assert_eq!(from_matrix(&to_matrix(&m), "m").unwrap(), m);
        let text = serde_json::to_string(&to_matrix(&m)).unwrap();
        assert_eq!(text, "[[1.0,[0.0,2.0]],[[3.5,-1.0],0.0]]");
        let ragged: Matrix = serde_json::from_str("[[1, 2], [3]]").unwrap();
        assert!(matches!(from_matrix(&ragged, "m"), Err(Error::Manifest(_))));
        assert!(square(&rows, 3, "m").is_err());
    }
}
