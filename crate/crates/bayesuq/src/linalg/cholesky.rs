//! Dense Cholesky factorization of symmetric positive definite operators.

use super::{DenseMatrix, LinOp, MatrixOperator};
use crate::error::{Error, Result};

/// Lower-triangular factor `L` of an SPD matrix, `L Lᵀ = A`.
#[derive(Debug, Clone)]
pub struct CholeskyFactor {
    lower: DenseMatrix,
}

/// Factor an SPD operator. Structured operators are materialized first.
///
/// A nonpositive pivot yields [`Error::NotPositiveDefinite`] naming the
/// offending index.
pub fn cholesky_factor(m: &MatrixOperator) -> Result<CholeskyFactor> {
    let dense = m.dense()?;
    cholesky_dense(&dense)
}

pub(crate) fn cholesky_dense(a: &DenseMatrix) -> Result<CholeskyFactor> {
    let n = a.rows();
    if a.cols() != n {
        return Err(Error::dim("cholesky input (square)", n, a.cols()));
    }
    let mut l = DenseMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            let mut sum = a.get(i, j);
            for k in 0..j {
                sum -= l.get(i, k) * l.get(j, k);
            }
            if i == j {
                if sum <= 0.0 || !sum.is_finite() {
                    return Err(Error::NotPositiveDefinite { pivot: i });
                }
                l.set(i, j, sum.sqrt());
            } else {
                l.set(i, j, sum / l.get(j, j));
            }
        }
    }
    Ok(CholeskyFactor { lower: l })
}

impl CholeskyFactor {
    pub fn dim(&self) -> usize {
        self.lower.rows()
    }

    pub fn lower(&self) -> &DenseMatrix {
        &self.lower
    }

    /// Solve `L y = b` by forward substitution.
    pub fn solve_lower(&self, b: &[f64]) -> Result<Vec<f64>> {
        let n = self.dim();
        if b.len() != n {
            return Err(Error::dim("triangular solve rhs", n, b.len()));
        }
        let mut y = vec![0.0; n];
        for i in 0..n {
            let mut sum = b[i];
            for k in 0..i {
                sum -= self.lower.get(i, k) * y[k];
            }
            y[i] = sum / self.lower.get(i, i);
        }
        Ok(y)
    }

    /// Solve `Lᵀ x = b` by back substitution.
    pub fn solve_upper_transpose(&self, b: &[f64]) -> Result<Vec<f64>> {
        let n = self.dim();
        if b.len() != n {
            return Err(Error::dim("triangular solve rhs", n, b.len()));
        }
        let mut x = vec![0.0; n];
        for i in (0..n).rev() {
            let mut sum = b[i];
            for k in i + 1..n {
                sum -= self.lower.get(k, i) * x[k];
            }
            x[i] = sum / self.lower.get(i, i);
        }
        Ok(x)
    }

    /// Solve `L Lᵀ x = b`.
    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        let y = self.solve_lower(b)?;
        self.solve_upper_transpose(&y)
    }

    /// `L Lᵀ`, for reconstruction checks.
    pub fn reconstruct(&self) -> DenseMatrix {
        let lt = self.lower.transpose();
        self.lower.matmul(&lt).expect("square factor")
    }

    pub fn log_det(&self) -> f64 {
        (0..self.dim())
            .map(|i| self.lower.get(i, i).ln())
            .sum::<f64>()
            * 2.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{gmrf_precision, MrfDims};
    use approx::assert_relative_eq;

    #[test]
    fn identity_factors_to_identity() {
        let id = MatrixOperator::Dense(DenseMatrix::identity(3));
        let f = cholesky_factor(&id).unwrap();
        assert_eq!(f.lower(), &DenseMatrix::identity(3));
    }

    #[test]
    fn two_by_two_hand_example() {
        // [[4,2],[2,3]] -> L = [[2,0],[1,sqrt(2)]]
        let a = MatrixOperator::Dense(
            DenseMatrix::from_rows(&[vec![4.0, 2.0], vec![2.0, 3.0]]).unwrap(),
        );
        let f = cholesky_factor(&a).unwrap();
        assert_relative_eq!(f.lower().get(0, 0), 2.0, epsilon = 1e-14);
        assert_relative_eq!(f.lower().get(1, 0), 1.0, epsilon = 1e-14);
        assert_relative_eq!(f.lower().get(0, 1), 0.0, epsilon = 1e-14);
        assert_relative_eq!(f.lower().get(1, 1), 2f64.sqrt(), epsilon = 1e-14);
        // Reconstruction oracle.
        let r = f.reconstruct();
        let ad = a.dense().unwrap();
        for i in 0..2 {
            for j in 0..2 {
                assert_relative_eq!(r.get(i, j), ad.get(i, j), epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn gmrf_precision_reconstructs() {
        let q = gmrf_precision(4, 1.0, MrfDims::One).unwrap();
        let f = cholesky_factor(&q).unwrap();
        let r = f.reconstruct();
        let qd = q.dense().unwrap();
        let mut err = 0.0;
        for i in 0..4 {
            for j in 0..4 {
                err += (r.get(i, j) - qd.get(i, j)).powi(2);
            }
        }
        assert!(err.sqrt() / qd.frobenius_norm() < 1e-12);
    }

    #[test]
    fn non_spd_reports_pivot() {
        let a = MatrixOperator::Dense(
            DenseMatrix::from_rows(&[vec![1.0, 2.0], vec![2.0, 1.0]]).unwrap(),
        );
        match cholesky_factor(&a) {
            Err(Error::NotPositiveDefinite { pivot }) => assert_eq!(pivot, 1),
            other => panic!("expected pivot failure, got {other:?}"),
        }
    }

    #[test]
    fn triangular_solves_invert() {
        let q = gmrf_precision(6, 2.5, MrfDims::One).unwrap();
        let f = cholesky_factor(&q).unwrap();
        let b = vec![1.0, -2.0, 0.5, 3.0, 0.0, 1.0];
        let x = f.solve(&b).unwrap();
        let back = q.apply_vec(&x);
        for (a, b) in back.iter().zip(&b) {
            assert_relative_eq!(a, b, epsilon = 1e-10);
        }
    }
}
