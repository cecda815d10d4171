//! Numeric helpers and the row-major matrix exchange format.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dense matrix as stored in JSON artifacts: explicit shape plus row-major
/// data, independent of the in-memory layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixDef {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl MatrixDef {
    pub fn from_matrix(m: &DMatrix<f64>) -> Self {
        let mut data = Vec::with_capacity(m.nrows() * m.ncols());
        for r in 0..m.nrows() {
            for c in 0..m.ncols() {
                data.push(m[(r, c)]);
            }
        }
        Self {
            rows: m.nrows(),
            cols: m.ncols(),
            data,
        }
    }

    pub fn to_matrix(&self) -> Result<DMatrix<f64>> {
        if self.data.len() != self.rows * self.cols {
            return Err(Error::Data(format!(
                "matrix payload has {} entries, expected {}x{}",
                self.data.len(),
                self.rows,
                self.cols
            )));
        }
        Ok(DMatrix::from_row_slice(self.rows, self.cols, &self.data))
    }
}

/// Numerically stable `ln(sum(exp(x)))`.
pub fn logsumexp(xs: &[f64]) -> f64 {
    let max = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    let sum: f64 = xs.iter().map(|&x| (x - max).exp()).sum();
    max + sum.ln()
}

/// Mean of a slice; 0 for an empty slice.
pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Population standard deviation of a slice.
pub fn pop_std(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    let m = mean(xs);
    (xs.iter().map(|&x| (x - m).powi(2)).sum::<f64>() / xs.len() as f64).sqrt()
}

/// Sample standard deviation (n-1 denominator); 0 when fewer than 2 values.
pub fn sample_std(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    (xs.iter().map(|&x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn matrix_def_round_trip_is_row_major() {
        let m = DMatrix::from_row_slice(2, 3, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let def = MatrixDef::from_matrix(&m);
        assert_eq!(def.data, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        assert_eq!(def.to_matrix().unwrap(), m);
    }

    #[test]
    fn matrix_def_rejects_bad_payload() {
        let def = MatrixDef {
            rows: 2,
            cols: 2,
            data: vec![1.0, 2.0, 3.0],
        };
        assert!(def.to_matrix().is_err());
    }

    #[test]
    fn logsumexp_matches_direct_evaluation() {
        let xs = [0.1, -0.4, 2.3];
        let direct = xs.iter().map(|x: &f64| x.exp()).sum::<f64>().ln();
        assert_relative_eq!(logsumexp(&xs), direct, max_relative = 1e-12);
    }

    #[test]
    fn logsumexp_survives_large_magnitudes() {
        let xs = [-1100.0, -1100.5];
        let got = logsumexp(&xs);
        assert!(got.is_finite());
        assert_relative_eq!(got, -1100.0 + (1.0 + (-0.5f64).exp()).ln());
    }

    #[test]
    fn moments() {
        let xs = [1.0, 3.0];
        assert_relative_eq!(mean(&xs), 2.0);
        assert_relative_eq!(pop_std(&xs), 1.0);
        assert_relative_eq!(sample_std(&xs), 2.0f64.sqrt());
    }
}
