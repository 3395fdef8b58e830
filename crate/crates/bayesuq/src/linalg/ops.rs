//! Structured operators: MRF precision stencils, first-order difference
//! operators, and combinators used to assemble stacked least-squares systems.

use super::{DenseMatrix, LinOp, MatrixOperator, MrfDims};
use crate::error::{Error, Result};

/// Precision operator of a zero-boundary Gaussian Markov random field.
///
/// 1D: the tridiagonal stencil `d * tridiag(-1, 2, -1)` of size `n`.
/// 2D: `d * (I_N ⊗ L_N + L_N ⊗ I_N)` on column-stacked `N x N` grids, with
/// `n = N^2`.
pub fn gmrf_precision(n: usize, d: f64, dims: MrfDims) -> Result<MatrixOperator> {
    if n == 0 {
        return Err(Error::invalid("gmrf_precision needs n >= 1"));
    }
    if d <= 0.0 {
        return Err(Error::invalid("gmrf_precision needs d > 0"));
    }
    match dims {
        MrfDims::One => {
            let mut bands = vec![vec![2.0 * d; n]];
            if n > 1 {
                bands.push(vec![-d; n - 1]);
            }
            MatrixOperator::banded_sym(n, bands)
        }
        MrfDims::Two => {
            let side = (n as f64).sqrt().round() as usize;
            if side * side != n {
                return Err(Error::invalid(format!(
                    "2D GMRF needs a square grid; {n} is not a perfect square"
                )));
            }
            let mut bands = vec![vec![2.0; side]];
            if side > 1 {
                bands.push(vec![-1.0; side - 1]);
            }
            let l = MatrixOperator::banded_sym(side, bands)?;
            MatrixOperator::kronecker_sum(l, d)
        }
    }
}

/// First-order difference matrix `D_n` with zero boundary conditions,
/// materialized densely: `(n+1) x n` with rows `[1, 0, ...]`,
/// `[..., -1, 1, ...]` and `[..., 0, -1]`.
pub fn difference_matrix(n: usize) -> Result<MatrixOperator> {
    if n == 0 {
        return Err(Error::invalid("difference_matrix needs n >= 1"));
    }
    let mut m = DenseMatrix::zeros(n + 1, n);
    for j in 0..n {
        m.set(j, j, 1.0);
        m.set(j + 1, j, -1.0);
    }
    Ok(MatrixOperator::Dense(m))
}

/// Matrix-free `D_n`: (n+1) first differences of an n-vector under zero
/// boundaries.
#[derive(Debug, Clone)]
pub struct Diff1d {
    n: usize,
}

impl Diff1d {
    pub fn new(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::invalid("Diff1d needs n >= 1"));
        }
        Ok(Diff1d { n })
    }
}

impl LinOp for Diff1d {
    fn rows(&self) -> usize {
        self.n + 1
    }
    fn cols(&self) -> usize {
        self.n
    }

    fn apply(&self, x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.n);
        out[0] = x[0];
        for i in 1..self.n {
            out[i] = x[i] - x[i - 1];
        }
        out[self.n] = -x[self.n - 1];
    }

    fn apply_transpose(&self, y: &[f64], out: &mut [f64]) {
        debug_assert_eq!(y.len(), self.n + 1);
        for j in 0..self.n {
            out[j] = y[j] - y[j + 1];
        }
    }
}

/// Matrix-free stacked 2D difference operator
/// `[I_N ⊗ D_N; D_N ⊗ I_N]` on column-stacked `N x N` grids:
/// vertical differences within each column followed by horizontal
/// differences within each row, `2 N (N+1)` rows in total.
#[derive(Debug, Clone)]
pub struct Diff2d {
    side: usize,
}

impl Diff2d {
    pub fn new(side: usize) -> Result<Self> {
        if side == 0 {
            return Err(Error::invalid("Diff2d needs side >= 1"));
        }
        Ok(Diff2d { side })
    }

    pub fn side(&self) -> usize {
        self.side
    }
}

impl LinOp for Diff2d {
    fn rows(&self) -> usize {
        2 * self.side * (self.side + 1)
    }
    fn cols(&self) -> usize {
        self.side * self.side
    }

    fn apply(&self, x: &[f64], out: &mut [f64]) {
        let n = self.side;
        debug_assert_eq!(x.len(), n * n);
        // I ⊗ D: differences down each column.
        for j in 0..n {
            let col = &x[j * n..(j + 1) * n];
            let o = &mut out[j * (n + 1)..(j + 1) * (n + 1)];
            o[0] = col[0];
            for i in 1..n {
                o[i] = col[i] - col[i - 1];
            }
            o[n] = -col[n - 1];
        }
        // D ⊗ I: differences along each row, column-stacked (n+1) blocks of n.
        let off = n * (n + 1);
        for k in 0..=n {
            for i in 0..n {
                let v = if k == 0 {
                    x[i]
                } else if k == n {
                    -x[(n - 1) * n + i]
                } else {
                    x[k * n + i] - x[(k - 1) * n + i]
                };
                out[off + k * n + i] = v;
            }
        }
    }

    fn apply_transpose(&self, y: &[f64], out: &mut [f64]) {
        let n = self.side;
        debug_assert_eq!(y.len(), self.rows());
        // (I ⊗ D)ᵀ block.
        for j in 0..n {
            let yb = &y[j * (n + 1)..(j + 1) * (n + 1)];
            let o = &mut out[j * n..(j + 1) * n];
            for i in 0..n {
                o[i] = yb[i] - yb[i + 1];
            }
        }
        // (D ⊗ I)ᵀ block.
        let off = n * (n + 1);
        for j in 0..n {
            for i in 0..n {
                out[j * n + i] += y[off + j * n + i] - y[off + (j + 1) * n + i];
            }
        }
    }
}

/// Vertical stack `[top; bottom]` of two operators with matching column
/// counts.
pub struct Stacked<'a> {
    top: &'a dyn LinOp,
    bottom: &'a dyn LinOp,
}

impl<'a> Stacked<'a> {
    pub fn new(top: &'a dyn LinOp, bottom: &'a dyn LinOp) -> Result<Self> {
        if top.cols() != bottom.cols() {
            return Err(Error::dim("stacked operator columns", top.cols(), bottom.cols()));
        }
        Ok(Stacked { top, bottom })
    }
}

impl LinOp for Stacked<'_> {
    fn rows(&self) -> usize {
        self.top.rows() + self.bottom.rows()
    }
    fn cols(&self) -> usize {
        self.top.cols()
    }

    fn apply(&self, x: &[f64], out: &mut [f64]) {
        let (a, b) = out.split_at_mut(self.top.rows());
        self.top.apply(x, a);
        self.bottom.apply(x, b);
    }

    fn apply_transpose(&self, y: &[f64], out: &mut [f64]) {
        let (ya, yb) = y.split_at(self.top.rows());
        self.top.apply_transpose(ya, out);
        let mut tmp = vec![0.0; self.cols()];
        self.bottom.apply_transpose(yb, &mut tmp);
        for (o, t) in out.iter_mut().zip(&tmp) {
            *o += t;
        }
    }
}

/// Per-row scaling `diag(w) · A`.
pub struct RowScaled<'a> {
    op: &'a dyn LinOp,
    weights: Vec<f64>,
}

impl<'a> RowScaled<'a> {
    pub fn new(op: &'a dyn LinOp, weights: Vec<f64>) -> Result<Self> {
        if weights.len() != op.rows() {
            return Err(Error::dim("row weights", op.rows(), weights.len()));
        }
        Ok(RowScaled { op, weights })
    }
}

impl LinOp for RowScaled<'_> {
    fn rows(&self) -> usize {
        self.op.rows()
    }
    fn cols(&self) -> usize {
        self.op.cols()
    }

    fn apply(&self, x: &[f64], out: &mut [f64]) {
        self.op.apply(x, out);
        for (o, w) in out.iter_mut().zip(&self.weights) {
            *o *= w;
        }
    }

    fn apply_transpose(&self, y: &[f64], out: &mut [f64]) {
        let scaled: Vec<f64> = y.iter().zip(&self.weights).map(|(v, w)| v * w).collect();
        self.op.apply_transpose(&scaled, out);
    }
}

/// Uniform scaling `c · A`.
pub struct Scaled<'a> {
    op: &'a dyn LinOp,
    factor: f64,
}

impl<'a> Scaled<'a> {
    pub fn new(op: &'a dyn LinOp, factor: f64) -> Self {
        Scaled { op, factor }
    }
}

impl LinOp for Scaled<'_> {
    fn rows(&self) -> usize {
        self.op.rows()
    }
    fn cols(&self) -> usize {
        self.op.cols()
    }

    fn apply(&self, x: &[f64], out: &mut [f64]) {
        self.op.apply(x, out);
        for o in out.iter_mut() {
            *o *= self.factor;
        }
    }

    fn apply_transpose(&self, y: &[f64], out: &mut [f64]) {
        self.op.apply_transpose(y, out);
        for o in out.iter_mut() {
            *o *= self.factor;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn gmrf_1d_matches_stencil() {
        let q = gmrf_precision(3, 1.0, MrfDims::One).unwrap().dense().unwrap();
        let expected = DenseMatrix::from_rows(&[
            vec![2.0, -1.0, 0.0],
            vec![-1.0, 2.0, -1.0],
            vec![0.0, -1.0, 2.0],
        ])
        .unwrap();
        assert_eq!(q, expected);
    }

    #[test]
    fn gmrf_scales_linearly_in_d() {
        let q1 = gmrf_precision(3, 1.0, MrfDims::One).unwrap().dense().unwrap();
        let q2 = gmrf_precision(3, 2.0, MrfDims::One).unwrap().dense().unwrap();
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(q2.get(i, j), 2.0 * q1.get(i, j));
            }
        }
    }

    #[test]
    fn gmrf_rejects_bad_arguments() {
        assert!(gmrf_precision(3, 0.0, MrfDims::One).is_err());
        assert!(gmrf_precision(3, -1.0, MrfDims::One).is_err());
        assert!(gmrf_precision(5, 1.0, MrfDims::Two).is_err());
    }

    #[test]
    fn difference_matrix_hand_example() {
        let d = difference_matrix(2).unwrap().dense().unwrap();
        let expected = DenseMatrix::from_rows(&[
            vec![1.0, 0.0],
            vec![-1.0, 1.0],
            vec![0.0, -1.0],
        ])
        .unwrap();
        assert_eq!(d, expected);
    }

    #[test]
    fn constant_vector_differences_vanish_in_interior() {
        let d = Diff1d::new(5).unwrap();
        let y = d.apply_vec(&[3.0; 5]);
        assert_eq!(y[0], 3.0);
        assert_eq!(y[5], -3.0);
        for v in &y[1..5] {
            assert_eq!(*v, 0.0);
        }
    }

    #[test]
    fn l1_norm_hand_evaluation() {
        // ||D_4 (1,2,3,4)||_1 = 1 + 1 + 1 + 1 + 4 = 8
        let d = Diff1d::new(4).unwrap();
        let y = d.apply_vec(&[1.0, 2.0, 3.0, 4.0]);
        let l1: f64 = y.iter().map(|v| v.abs()).sum();
        assert_eq!(l1, 8.0);
    }

    #[test]
    fn dtd_equals_gmrf_precision_exactly() {
        for n in [1usize, 2, 5, 16] {
            let d = difference_matrix(n).unwrap().dense().unwrap();
            let dtd = d.transpose().matmul(&d).unwrap();
            let l = gmrf_precision(n, 1.0, MrfDims::One).unwrap().dense().unwrap();
            assert_eq!(dtd, l, "DᵀD != L for n = {n}");
        }
    }

    #[test]
    fn diff1d_matches_dense_difference_matrix() {
        let mf = Diff1d::new(7).unwrap();
        let dense = difference_matrix(7).unwrap();
        let x: Vec<f64> = (0..7).map(|i| (i as f64).cos()).collect();
        assert_eq!(mf.apply_vec(&x), dense.apply_vec(&x));
        let y: Vec<f64> = (0..8).map(|i| (i as f64).sin()).collect();
        let a = mf.apply_transpose_vec(&y);
        let b = dense.apply_transpose_vec(&y);
        for (u, v) in a.iter().zip(&b) {
            assert_relative_eq!(u, v, epsilon = 1e-14);
        }
    }

    #[test]
    fn diff2d_transpose_product_is_2d_gmrf_stencil() {
        // DᵀD for the stacked 2D stencil equals I ⊗ L + L ⊗ I.
        let side = 4;
        let d2 = Diff2d::new(side).unwrap();
        let q = gmrf_precision(side * side, 1.0, MrfDims::Two).unwrap();
        let x: Vec<f64> = (0..side * side).map(|i| ((i * 7) % 5) as f64 - 2.0).collect();
        let dtdx = d2.apply_transpose_vec(&d2.apply_vec(&x));
        let qx = q.apply_vec(&x);
        for (a, b) in dtdx.iter().zip(&qx) {
            assert_relative_eq!(a, b, epsilon = 1e-12);
        }
    }

    #[test]
    fn stacked_and_scaled_combinators() {
        let top = DenseMatrix::identity(3);
        let bottom_op = difference_matrix(3).unwrap();
        let stacked = Stacked::new(&top, &bottom_op).unwrap();
        assert_eq!(stacked.rows(), 7);
        let x = vec![1.0, 2.0, 3.0];
        let y = stacked.apply_vec(&x);
        assert_eq!(&y[..3], &x[..]);
        assert_eq!(&y[3..], &[1.0, 1.0, 1.0, -3.0]);

        let scaled = Scaled::new(&top, 2.0);
        assert_eq!(scaled.apply_vec(&x), vec![2.0, 4.0, 6.0]);

        let rw = RowScaled::new(&top, vec![1.0, 0.0, -1.0]).unwrap();
        assert_eq!(rw.apply_vec(&x), vec![1.0, 0.0, -3.0]);
        // Adjoint identity for the combinators.
        let probe_y = vec![0.5, -1.0, 2.0, 0.0, 1.0, -0.5, 0.25];
        let lhs = crate::util::dot(&stacked.apply_vec(&x), &probe_y);
        let rhs = crate::util::dot(&x, &stacked.apply_transpose_vec(&probe_y));
        assert_relative_eq!(lhs, rhs, epsilon = 1e-12);
    }
}
