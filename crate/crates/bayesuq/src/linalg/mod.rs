//! Dense and structured linear algebra underpinning MRF precisions, direct
//! Gaussian sampling and the randomized least-squares posterior sampler.
//!
//! Everything is built around the [`LinOp`] trait: a matrix known through its
//! action and the action of its transpose. Structured operators (banded
//! symmetric matrices, Kronecker sums and products on column-stacked grids,
//! first-order difference stencils) are applied matrix-free and only
//! materialized on demand for small problems.

mod cgls;
mod cholesky;
mod csv;
mod ops;

pub use cgls::{cgls_solve, cgls_solve_from, CglsOptions, CglsResult};
pub use cholesky::{cholesky_factor, CholeskyFactor};
pub use csv::{read_dense_csv, write_dense_csv};
pub use ops::{difference_matrix, gmrf_precision, Diff1d, Diff2d, RowScaled, Scaled, Stacked};

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Grid dimensionality of a Markov-random-field stencil.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MrfDims {
    One,
    Two,
}

/// A linear operator known through its action and the action of its
/// transpose.
///
/// Operators are immutable after construction and safe to share across
/// threads; `apply` does not mutate internal state.
pub trait LinOp: Sync {
    fn rows(&self) -> usize;
    fn cols(&self) -> usize;
    fn apply(&self, x: &[f64], out: &mut [f64]);
    fn apply_transpose(&self, y: &[f64], out: &mut [f64]);

    fn apply_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.rows()];
        self.apply(x, &mut out);
        out
    }

    fn apply_transpose_vec(&self, y: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.cols()];
        self.apply_transpose(y, &mut out);
        out
    }
}

impl<T: LinOp + ?Sized> LinOp for &T {
    fn rows(&self) -> usize {
        (**self).rows()
    }
    fn cols(&self) -> usize {
        (**self).cols()
    }
    fn apply(&self, x: &[f64], out: &mut [f64]) {
        (**self).apply(x, out)
    }
    fn apply_transpose(&self, y: &[f64], out: &mut [f64]) {
        (**self).apply_transpose(y, out)
    }
}

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        DenseMatrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.set(i, i, 1.0);
        }
        m
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::invalid("dense matrix needs at least one row"));
        }
        let cols = rows[0].len();
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::invalid("dense matrix rows have unequal lengths"));
        }
        let data = rows.iter().flatten().copied().collect();
        Ok(DenseMatrix {
            rows: rows.len(),
            cols,
            data,
        })
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::dim("dense matrix data", rows * cols, data.len()));
        }
        Ok(DenseMatrix { rows, cols, data })
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn transpose(&self) -> DenseMatrix {
        let mut t = DenseMatrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t.set(j, i, self.get(i, j));
            }
        }
        t
    }

    pub fn matmul(&self, other: &DenseMatrix) -> Result<DenseMatrix> {
        if self.cols != other.rows {
            return Err(Error::dim("matmul inner dimension", self.cols, other.rows));
        }
        let mut out = DenseMatrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self.get(i, k);
                if a == 0.0 {
                    continue;
                }
                for j in 0..other.cols {
                    out.data[i * other.cols + j] += a * other.get(k, j);
                }
            }
        }
        Ok(out)
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

impl LinOp for DenseMatrix {
    fn rows(&self) -> usize {
        self.rows
    }
    fn cols(&self) -> usize {
        self.cols
    }

    fn apply(&self, x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.cols);
        debug_assert_eq!(out.len(), self.rows);
        for (i, o) in out.iter_mut().enumerate() {
            *o = crate::util::dot(self.row(i), x);
        }
    }

    fn apply_transpose(&self, y: &[f64], out: &mut [f64]) {
        debug_assert_eq!(y.len(), self.rows);
        debug_assert_eq!(out.len(), self.cols);
        out.fill(0.0);
        for (i, &yi) in y.iter().enumerate() {
            if yi == 0.0 {
                continue;
            }
            crate::util::axpy(yi, self.row(i), out);
        }
    }
}

/// Structured matrix representations used throughout the library.
///
/// Kronecker forms act on column-stacked `N x N` grids and are applied
/// matrix-free; they are materialized only for `N <= 64`.
#[derive(Debug, Clone)]
pub enum MatrixOperator {
    Dense(DenseMatrix),
    /// Symmetric banded matrix. `bands[0]` is the main diagonal (length n);
    /// `bands[k]` the k-th sub/super diagonal (length n - k).
    BandedSym { n: usize, bands: Vec<Vec<f64>> },
    /// `scale * (I ⊗ F + F ⊗ I)` for a square factor F.
    KroneckerSum {
        factor: Box<MatrixOperator>,
        scale: f64,
    },
    /// `F ⊗ F` for a square factor F.
    KroneckerSquare { factor: Box<MatrixOperator> },
}

/// Largest grid side for which Kronecker forms are materialized.
pub const KRONECKER_DENSE_LIMIT: usize = 64;

impl MatrixOperator {
    pub fn banded_sym(n: usize, bands: Vec<Vec<f64>>) -> Result<Self> {
        if bands.is_empty() || bands[0].len() != n {
            return Err(Error::invalid("banded matrix needs a main diagonal of length n"));
        }
        for (k, band) in bands.iter().enumerate() {
            if band.len() != n - k {
                return Err(Error::dim("band length", n - k, band.len()));
            }
        }
        Ok(MatrixOperator::BandedSym { n, bands })
    }

    fn factor_side(factor: &MatrixOperator) -> Result<usize> {
        if factor.rows() != factor.cols() {
            return Err(Error::invalid("Kronecker factor must be square"));
        }
        Ok(factor.rows())
    }

    pub fn kronecker_sum(factor: MatrixOperator, scale: f64) -> Result<Self> {
        Self::factor_side(&factor)?;
        Ok(MatrixOperator::KroneckerSum {
            factor: Box::new(factor),
            scale,
        })
    }

    pub fn kronecker_square(factor: MatrixOperator) -> Result<Self> {
        Self::factor_side(&factor)?;
        Ok(MatrixOperator::KroneckerSquare {
            factor: Box::new(factor),
        })
    }

    /// Materialize as a dense matrix. Kronecker forms refuse grids larger
    /// than [`KRONECKER_DENSE_LIMIT`] per side.
    pub fn dense(&self) -> Result<DenseMatrix> {
        match self {
            MatrixOperator::Dense(m) => Ok(m.clone()),
            MatrixOperator::BandedSym { n, bands } => {
                let mut m = DenseMatrix::zeros(*n, *n);
                for (k, band) in bands.iter().enumerate() {
                    for (i, &v) in band.iter().enumerate() {
                        m.set(i, i + k, v);
                        m.set(i + k, i, v);
                    }
                }
                Ok(m)
            }
            MatrixOperator::KroneckerSum { factor, .. }
            | MatrixOperator::KroneckerSquare { factor, .. } => {
                let side = factor.rows();
                if side > KRONECKER_DENSE_LIMIT {
                    return Err(Error::invalid(format!(
                        "refusing to materialize Kronecker operator with side {side} > {KRONECKER_DENSE_LIMIT}"
                    )));
                }
                let n = self.cols();
                let mut m = DenseMatrix::zeros(self.rows(), n);
                let mut e = vec![0.0; n];
                let mut col = vec![0.0; self.rows()];
                for j in 0..n {
                    e[j] = 1.0;
                    self.apply(&e, &mut col);
                    e[j] = 0.0;
                    for (i, &v) in col.iter().enumerate() {
                        m.set(i, j, v);
                    }
                }
                Ok(m)
            }
        }
    }
}

impl LinOp for MatrixOperator {
    fn rows(&self) -> usize {
        match self {
            MatrixOperator::Dense(m) => m.rows,
            MatrixOperator::BandedSym { n, .. } => *n,
            MatrixOperator::KroneckerSum { factor, .. }
            | MatrixOperator::KroneckerSquare { factor } => factor.rows() * factor.rows(),
        }
    }

    fn cols(&self) -> usize {
        match self {
            MatrixOperator::Dense(m) => m.cols,
            _ => self.rows(),
        }
    }

    fn apply(&self, x: &[f64], out: &mut [f64]) {
        match self {
            MatrixOperator::Dense(m) => m.apply(x, out),
            MatrixOperator::BandedSym { n, bands } => banded_apply(*n, bands, x, out),
            MatrixOperator::KroneckerSum { factor, scale } => {
                kron_sum_apply(factor, *scale, x, out, false)
            }
            MatrixOperator::KroneckerSquare { factor } => kron_square_apply(factor, x, out, false),
        }
    }

    fn apply_transpose(&self, y: &[f64], out: &mut [f64]) {
        match self {
            MatrixOperator::Dense(m) => m.apply_transpose(y, out),
            // Symmetric by construction.
            MatrixOperator::BandedSym { n, bands } => banded_apply(*n, bands, y, out),
            MatrixOperator::KroneckerSum { factor, scale } => {
                kron_sum_apply(factor, *scale, y, out, true)
            }
            MatrixOperator::KroneckerSquare { factor } => kron_square_apply(factor, y, out, true),
        }
    }
}

fn banded_apply(n: usize, bands: &[Vec<f64>], x: &[f64], out: &mut [f64]) {
    debug_assert_eq!(x.len(), n);
    for (o, (xi, b0)) in out.iter_mut().zip(x.iter().zip(&bands[0])) {
        *o = b0 * xi;
    }
    for (k, band) in bands.iter().enumerate().skip(1) {
        for (i, &v) in band.iter().enumerate() {
            out[i] += v * x[i + k];
            out[i + k] += v * x[i];
        }
    }
}

/// Apply `scale * (I ⊗ F + F ⊗ I)` (or its transpose) to a column-stacked
/// grid: `vec(F X) + vec(X Fᵀ)`.
fn kron_sum_apply(factor: &MatrixOperator, scale: f64, x: &[f64], out: &mut [f64], transpose: bool) {
    let n = factor.rows();
    debug_assert_eq!(x.len(), n * n);
    let mut col_in = vec![0.0; n];
    let mut col_out = vec![0.0; n];
    out.fill(0.0);
    // I ⊗ F: transform each column of X.
    for j in 0..n {
        col_in.copy_from_slice(&x[j * n..(j + 1) * n]);
        if transpose {
            factor.apply_transpose(&col_in, &mut col_out);
        } else {
            factor.apply(&col_in, &mut col_out);
        }
        out[j * n..(j + 1) * n].copy_from_slice(&col_out);
    }
    // F ⊗ I: transform each row of X.
    for i in 0..n {
        for (j, c) in col_in.iter_mut().enumerate() {
            *c = x[j * n + i];
        }
        if transpose {
            factor.apply_transpose(&col_in, &mut col_out);
        } else {
            factor.apply(&col_in, &mut col_out);
        }
        for (j, &v) in col_out.iter().enumerate() {
            out[j * n + i] += v;
        }
    }
    for o in out.iter_mut() {
        *o *= scale;
    }
}

/// Apply `F ⊗ F` (or its transpose) to a column-stacked grid: `vec(F X Fᵀ)`.
fn kron_square_apply(factor: &MatrixOperator, x: &[f64], out: &mut [f64], transpose: bool) {
    let n = factor.rows();
    debug_assert_eq!(x.len(), n * n);
    let mut tmp = vec![0.0; n * n];
    let mut col_in = vec![0.0; n];
    let mut col_out = vec![0.0; n];
    for j in 0..n {
        col_in.copy_from_slice(&x[j * n..(j + 1) * n]);
        if transpose {
            factor.apply_transpose(&col_in, &mut col_out);
        } else {
            factor.apply(&col_in, &mut col_out);
        }
        tmp[j * n..(j + 1) * n].copy_from_slice(&col_out);
    }
    for i in 0..n {
        for (j, c) in col_in.iter_mut().enumerate() {
            *c = tmp[j * n + i];
        }
        if transpose {
            factor.apply_transpose(&col_in, &mut col_out);
        } else {
            factor.apply(&col_in, &mut col_out);
        }
        for (j, &v) in col_out.iter().enumerate() {
            out[j * n + i] = v;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn random_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
        (0..n).map(|_| rng.gen::<f64>() - 0.5).collect()
    }

    /// <A x, y> == <x, Aᵀ y> for random probes.
    fn check_adjoint(op: &dyn LinOp, probes: usize, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..probes {
            let x = random_vec(&mut rng, op.cols());
            let y = random_vec(&mut rng, op.rows());
            let ax = op.apply_vec(&x);
            let aty = op.apply_transpose_vec(&y);
            let lhs = crate::util::dot(&ax, &y);
            let rhs = crate::util::dot(&x, &aty);
            let scale = lhs.abs().max(rhs.abs()).max(1e-30);
            assert!(
                ((lhs - rhs) / scale).abs() < 1e-10,
                "adjoint identity violated: {lhs} vs {rhs}"
            );
        }
    }

    #[test]
    fn dense_apply_and_transpose() {
        let m = DenseMatrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0], vec![5.0, 6.0]]).unwrap();
        assert_eq!(m.apply_vec(&[1.0, 1.0]), vec![3.0, 7.0, 11.0]);
        assert_eq!(m.apply_transpose_vec(&[1.0, 0.0, 1.0]), vec![6.0, 8.0]);
        check_adjoint(&m, 100, 1);
    }

    #[test]
    fn banded_matches_dense() {
        let op = MatrixOperator::banded_sym(
            4,
            vec![vec![2.0, 2.0, 2.0, 2.0], vec![-1.0, -1.0, -1.0]],
        )
        .unwrap();
        let d = op.dense().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..20 {
            let x = random_vec(&mut rng, 4);
            let y1 = op.apply_vec(&x);
            let y2 = d.apply_vec(&x);
            for (a, b) in y1.iter().zip(&y2) {
                assert_relative_eq!(a, b, epsilon = 1e-14);
            }
        }
        check_adjoint(&op, 100, 3);
    }

    #[test]
    fn kronecker_sum_matches_materialized_product() {
        // N = 2 grid: I2 ⊗ L2 + L2 ⊗ I2 with L2 = [[2,-1],[-1,2]].
        let l2 = MatrixOperator::banded_sym(2, vec![vec![2.0, 2.0], vec![-1.0]]).unwrap();
        let q = MatrixOperator::kronecker_sum(l2, 1.0).unwrap();
        let dense = q.dense().unwrap();
        let expected = DenseMatrix::from_rows(&[
            vec![4.0, -1.0, -1.0, 0.0],
            vec![-1.0, 4.0, 0.0, -1.0],
            vec![-1.0, 0.0, 4.0, -1.0],
            vec![0.0, -1.0, -1.0, 4.0],
        ])
        .unwrap();
        assert_eq!(dense, expected);

        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x = random_vec(&mut rng, 4);
        let y1 = q.apply_vec(&x);
        let y2 = expected.apply_vec(&x);
        for (a, b) in y1.iter().zip(&y2) {
            assert_relative_eq!(a, b, epsilon = 1e-13);
        }
        check_adjoint(&q, 100, 5);
    }

    #[test]
    fn kronecker_square_matches_materialized_product() {
        let b = MatrixOperator::Dense(
            DenseMatrix::from_rows(&[vec![1.0, 0.5], vec![0.25, 2.0]]).unwrap(),
        );
        let bb = MatrixOperator::kronecker_square(b.clone()).unwrap();
        // Explicit B ⊗ B for column-stacked 2x2 grids.
        let bd = b.dense().unwrap();
        let mut kron = DenseMatrix::zeros(4, 4);
        for i in 0..2 {
            for j in 0..2 {
                for k in 0..2 {
                    for l in 0..2 {
                        // (B ⊗ B)[j*2+k][l*2+i] pairs column-block with row-block.
                        kron.set(j * 2 + k, l * 2 + i, bd.get(j, l) * bd.get(k, i));
                    }
                }
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..20 {
            let x = random_vec(&mut rng, 4);
            let y1 = bb.apply_vec(&x);
            let y2 = kron.apply_vec(&x);
            for (a, b) in y1.iter().zip(&y2) {
                assert_relative_eq!(a, b, epsilon = 1e-13);
            }
        }
        check_adjoint(&bb, 100, 7);
    }

    #[test]
    fn kronecker_materialization_guard() {
        let big = MatrixOperator::banded_sym(65, vec![vec![2.0; 65], vec![-1.0; 64]]).unwrap();
        let q = MatrixOperator::kronecker_sum(big, 1.0).unwrap();
        assert!(q.dense().is_err());
    }

    #[test]
    fn adjoint_identity_all_kinds() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut rows = Vec::new();
        for _ in 0..8 {
            rows.push(random_vec(&mut rng, 5));
        }
        let dense = MatrixOperator::Dense(DenseMatrix::from_rows(&rows).unwrap());
        check_adjoint(&dense, 100, 9);

        let banded = gmrf_precision(16, 3.0, MrfDims::One).unwrap();
        check_adjoint(&banded, 100, 10);

        let kron = gmrf_precision(16, 2.0, MrfDims::Two).unwrap();
        check_adjoint(&kron, 100, 11);
    }
}
