//! Forward models mapping parameters to data.
//!
//! Linear models carry an adjoint through their [`MatrixOperator`]; nonlinear
//! models carry the forward map and optionally a Jacobian. Evaluation is pure
//! and models are safe to share across chains.

use crate::error::{Error, Result};
use crate::geometry::Geometry;
use crate::linalg::{DenseMatrix, LinOp, MatrixOperator};
use std::sync::Arc;

pub type ForwardFn = Arc<dyn Fn(&[f64]) -> Result<Vec<f64>> + Send + Sync>;
pub type JacobianFn = Arc<dyn Fn(&[f64]) -> Result<DenseMatrix> + Send + Sync>;

#[derive(Clone)]
enum ModelKind {
    Linear(Arc<MatrixOperator>),
    Nonlinear {
        forward: ForwardFn,
        jacobian: Option<JacobianFn>,
    },
}

/// A map from parameter space to data space with geometry attached.
#[derive(Clone)]
pub struct ForwardModel {
    kind: ModelKind,
    domain: Geometry,
    range: Geometry,
}

impl std::fmt::Debug for ForwardModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let kind = match &self.kind {
            ModelKind::Linear(_) => "linear",
            ModelKind::Nonlinear { jacobian, .. } => {
                if jacobian.is_some() {
                    "nonlinear+jacobian"
                } else {
                    "nonlinear"
                }
            }
        };
        f.debug_struct("ForwardModel")
            .field("kind", &kind)
            .field("domain", &self.domain)
            .field("range", &self.range)
            .finish()
    }
}

impl ForwardModel {
    pub fn linear(op: MatrixOperator, domain: Geometry, range: Geometry) -> Result<Self> {
        if op.cols() != domain.par_dim() {
            return Err(Error::dim("model domain", op.cols(), domain.par_dim()));
        }
        if op.rows() != range.par_dim() {
            return Err(Error::dim("model range", op.rows(), range.par_dim()));
        }
        Ok(ForwardModel {
            kind: ModelKind::Linear(Arc::new(op)),
            domain,
            range,
        })
    }

    /// Linear model on default 1D geometries inferred from the operator shape.
    pub fn linear_default(op: MatrixOperator) -> Self {
        let domain = Geometry::continuous_1d(op.cols());
        let range = Geometry::continuous_1d(op.rows());
        ForwardModel {
            kind: ModelKind::Linear(Arc::new(op)),
            domain,
            range,
        }
    }

    pub fn nonlinear(
        forward: ForwardFn,
        jacobian: Option<JacobianFn>,
        domain: Geometry,
        range: Geometry,
    ) -> Self {
        ForwardModel {
            kind: ModelKind::Nonlinear { forward, jacobian },
            domain,
            range,
        }
    }

    pub fn is_linear(&self) -> bool {
        matches!(self.kind, ModelKind::Linear(_))
    }

    /// The underlying operator of a linear model.
    pub fn operator(&self) -> Option<&MatrixOperator> {
        match &self.kind {
            ModelKind::Linear(op) => Some(op),
            ModelKind::Nonlinear { .. } => None,
        }
    }

    pub fn domain_geometry(&self) -> &Geometry {
        &self.domain
    }

    pub fn range_geometry(&self) -> &Geometry {
        &self.range
    }

    pub fn domain_dim(&self) -> usize {
        self.domain.par_dim()
    }

    pub fn range_dim(&self) -> usize {
        self.range.par_dim()
    }

    /// Evaluate `A(x)`.
    pub fn apply_forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.domain_dim() {
            return Err(Error::dim("forward input", self.domain_dim(), x.len()));
        }
        match &self.kind {
            ModelKind::Linear(op) => Ok(op.apply_vec(x)),
            ModelKind::Nonlinear { forward, .. } => {
                let y = forward(x)?;
                if y.len() != self.range_dim() {
                    return Err(Error::dim("forward output", self.range_dim(), y.len()));
                }
                Ok(y)
            }
        }
    }

    /// Evaluate `Aᵀ y`; only defined for linear models.
    pub fn apply_adjoint(&self, y: &[f64]) -> Result<Vec<f64>> {
        if y.len() != self.range_dim() {
            return Err(Error::dim("adjoint input", self.range_dim(), y.len()));
        }
        match &self.kind {
            ModelKind::Linear(op) => Ok(op.apply_transpose_vec(y)),
            ModelKind::Nonlinear { .. } => Err(Error::capability(
                "adjoint is only defined for linear models",
            )),
        }
    }

    /// Dense Jacobian at `x`. For a linear model this is its matrix.
    pub fn jacobian(&self, x: &[f64]) -> Result<DenseMatrix> {
        if x.len() != self.domain_dim() {
            return Err(Error::dim("jacobian input", self.domain_dim(), x.len()));
        }
        match &self.kind {
            ModelKind::Linear(op) => op.dense(),
            ModelKind::Nonlinear { jacobian, .. } => match jacobian {
                Some(jac) => {
                    let j = jac(x)?;
                    if j.rows() != self.range_dim() || j.cols() != self.domain_dim() {
                        return Err(Error::dim(
                            "jacobian shape",
                            self.range_dim() * self.domain_dim(),
                            j.rows() * j.cols(),
                        ));
                    }
                    Ok(j)
                }
                None => Err(Error::capability(
                    "model provides no Jacobian; gradient-based samplers cannot use it",
                )),
            },
        }
    }

    /// Vector-Jacobian product `J(x)ᵀ v` without materializing `J` for
    /// linear models.
    pub fn vjp(&self, x: &[f64], v: &[f64]) -> Result<Vec<f64>> {
        match &self.kind {
            ModelKind::Linear(_) => self.apply_adjoint(v),
            ModelKind::Nonlinear { .. } => {
                let j = self.jacobian(x)?;
                Ok(j.apply_transpose_vec(v))
            }
        }
    }

    /// True when gradient-based samplers can obtain `Jᵀ v` from this model.
    pub fn has_jacobian(&self) -> bool {
        match &self.kind {
            ModelKind::Linear(_) => true,
            ModelKind::Nonlinear { jacobian, .. } => jacobian.is_some(),
        }
    }

    /// Load a linear model from a dense header-free CSV matrix
    /// (rows = range dimension).
    pub fn from_dense_csv(path: &std::path::Path) -> Result<Self> {
        let m = crate::linalg::read_dense_csv(path)?;
        Ok(Self::linear_default(MatrixOperator::Dense(m)))
    }
}

/// Gaussian convolution kernel with standard deviation `psf_std` grid units,
/// truncated at `±4 psf_std` and normalized to unit sum. Index 0 is the
/// center tap.
fn gaussian_kernel(psf_std: f64) -> Vec<f64> {
    let half = (4.0 * psf_std).ceil().max(1.0) as usize;
    let mut taps: Vec<f64> = (0..=half)
        .map(|j| (-((j * j) as f64) / (2.0 * psf_std * psf_std)).exp())
        .collect();
    let sum: f64 = taps[0] + 2.0 * taps[1..].iter().sum::<f64>();
    for t in taps.iter_mut() {
        *t /= sum;
    }
    taps
}

/// 1D Gaussian blur: an `n x n` banded Toeplitz operator with zero boundary
/// conditions.
pub fn convolution_model_1d(n: usize, psf_std: f64) -> Result<ForwardModel> {
    let op = convolution_operator_1d(n, psf_std)?;
    ForwardModel::linear(
        op,
        Geometry::continuous_1d(n),
        Geometry::continuous_1d(n),
    )
}

pub(crate) fn convolution_operator_1d(n: usize, psf_std: f64) -> Result<MatrixOperator> {
    if n == 0 {
        return Err(Error::invalid("convolution model needs n >= 1"));
    }
    if psf_std <= 0.0 {
        return Err(Error::invalid("psf_std must be positive"));
    }
    let taps = gaussian_kernel(psf_std);
    let width = taps.len().min(n);
    let bands = (0..width).map(|k| vec![taps[k]; n - k]).collect();
    MatrixOperator::banded_sym(n, bands)
}

/// Separable 2D Gaussian blur `B ⊗ B` acting on column-stacked `N x N`
/// images, zero boundary conditions.
pub fn convolution_model_2d(n_side: usize, psf_std: f64) -> Result<ForwardModel> {
    let b = convolution_operator_1d(n_side, psf_std)?;
    let op = MatrixOperator::kronecker_square(b)?;
    ForwardModel::linear(
        op,
        Geometry::image_2d(n_side, n_side),
        Geometry::image_2d(n_side, n_side),
    )
}

/// Gravitational constant in N m^2 / kg^2.
pub const GRAVITATIONAL_CONSTANT: f64 = 6.6743e-11;

/// Vertical gravity anomaly of a buried sphere, measured at `m` equispaced
/// surface points on `[-8000, 8000]`. Parameters are depth `z`, density
/// contrast `rho` and radius `r`; the forward map is singular at `z = 0`,
/// so nonpositive depths produce an evaluation error.
pub fn gravity_model(m: usize) -> Result<ForwardModel> {
    if m == 0 {
        return Err(Error::invalid("gravity model needs m >= 1"));
    }
    let grid: Arc<Vec<f64>> = Arc::new(match m {
        1 => vec![-8000.0],
        _ => (0..m)
            .map(|i| -8000.0 + 16000.0 * i as f64 / (m - 1) as f64)
            .collect(),
    });
    let c = 4.0 / 3.0 * std::f64::consts::PI * GRAVITATIONAL_CONSTANT;

    let fwd_grid = Arc::clone(&grid);
    let forward: ForwardFn = Arc::new(move |wrt: &[f64]| {
        let (z, rho, r) = (wrt[0], wrt[1], wrt[2]);
        if z <= 0.0 {
            return Err(Error::Evaluation(format!(
                "gravity forward undefined for depth z = {z} (needs z > 0)"
            )));
        }
        Ok(fwd_grid
            .iter()
            .map(|&xi| c * rho * r.powi(3) * z / (z * z + xi * xi).powf(1.5))
            .collect())
    });

    let jac_grid = Arc::clone(&grid);
    let jacobian: JacobianFn = Arc::new(move |wrt: &[f64]| {
        let (z, rho, r) = (wrt[0], wrt[1], wrt[2]);
        if z <= 0.0 {
            return Err(Error::Evaluation(format!(
                "gravity Jacobian undefined for depth z = {z} (needs z > 0)"
            )));
        }
        let mut j = DenseMatrix::zeros(jac_grid.len(), 3);
        for (i, &xi) in jac_grid.iter().enumerate() {
            let u = z * z + xi * xi;
            let shape = z / u.powf(1.5);
            j.set(i, 0, -c * rho * r.powi(3) * (2.0 * z * z - xi * xi) / u.powf(2.5));
            j.set(i, 1, c * r.powi(3) * shape);
            j.set(i, 2, 3.0 * c * rho * r * r * shape);
        }
        Ok(j)
    });

    Ok(ForwardModel::nonlinear(
        forward,
        Some(jacobian),
        Geometry::discrete(["z", "rho", "r"])?,
        Geometry::continuous_1d_on(m, (-8000.0, 8000.0)),
    ))
}

/// Central finite-difference Jacobian, used as an oracle in tests and for
/// user models without derivative information.
pub fn finite_difference_jacobian(
    model: &ForwardModel,
    x: &[f64],
    relative_step: f64,
) -> Result<DenseMatrix> {
    let m = model.range_dim();
    let d = model.domain_dim();
    let mut j = DenseMatrix::zeros(m, d);
    for col in 0..d {
        let h = relative_step * x[col].abs().max(1.0);
        let mut xp = x.to_vec();
        let mut xm = x.to_vec();
        xp[col] += h;
        xm[col] -= h;
        let fp = model.apply_forward(&xp)?;
        let fm = model.apply_forward(&xm)?;
        for row in 0..m {
            j.set(row, col, (fp[row] - fm[row]) / (2.0 * h));
        }
    }
    Ok(j)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn identity_model_round_trip() {
        let m = ForwardModel::linear_default(MatrixOperator::Dense(DenseMatrix::identity(4)));
        let x = vec![1.0, -2.0, 3.0, 4.0];
        assert_eq!(m.apply_forward(&x).unwrap(), x);
        assert_eq!(m.apply_adjoint(&x).unwrap(), x);
    }

    #[test]
    fn forward_dimension_mismatch_names_sizes() {
        let m = ForwardModel::linear_default(MatrixOperator::Dense(DenseMatrix::identity(4)));
        let err = m.apply_forward(&[1.0]).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("expected 4") && msg.contains("got 1"), "{msg}");
    }

    #[test]
    fn adjoint_identity_random_matrix() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let mut rows = Vec::new();
        for _ in 0..8 {
            rows.push((0..5).map(|_| rng.gen::<f64>() - 0.5).collect::<Vec<_>>());
        }
        let m = ForwardModel::linear_default(MatrixOperator::Dense(
            DenseMatrix::from_rows(&rows).unwrap(),
        ));
        for _ in 0..100 {
            let x: Vec<f64> = (0..5).map(|_| rng.gen::<f64>() - 0.5).collect();
            let y: Vec<f64> = (0..8).map(|_| rng.gen::<f64>() - 0.5).collect();
            let lhs = crate::util::dot(&m.apply_forward(&x).unwrap(), &y);
            let rhs = crate::util::dot(&x, &m.apply_adjoint(&y).unwrap());
            assert_relative_eq!(lhs, rhs, max_relative = 1e-12);
        }
    }

    #[test]
    fn convolution_rows_sum_to_one_in_interior() {
        let model = convolution_model_1d(64, 3.0).unwrap();
        let op = model.operator().unwrap().dense().unwrap();
        let half = (4.0 * 3.0f64).ceil() as usize;
        for i in half..64 - half {
            let s: f64 = (0..64).map(|j| op.get(i, j)).sum();
            assert_relative_eq!(s, 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn tiny_psf_is_identity() {
        let model = convolution_model_1d(16, 1e-6).unwrap();
        let op = model.operator().unwrap().dense().unwrap();
        for i in 0..16 {
            for j in 0..16 {
                let expected = if i == j { 1.0 } else { 0.0 };
                assert_relative_eq!(op.get(i, j), expected, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn impulse_reproduces_kernel() {
        let n = 65;
        let model = convolution_model_1d(n, 2.0).unwrap();
        let mut impulse = vec![0.0; n];
        impulse[n / 2] = 1.0;
        let blurred = model.apply_forward(&impulse).unwrap();
        let taps = gaussian_kernel(2.0);
        assert_relative_eq!(blurred[n / 2], taps[0], epsilon = 1e-14);
        for j in 1..taps.len() {
            assert_relative_eq!(blurred[n / 2 + j], taps[j], epsilon = 1e-14);
            assert_relative_eq!(blurred[n / 2 - j], taps[j], epsilon = 1e-14);
        }
    }

    #[test]
    fn blur_is_shift_covariant_in_interior() {
        let n = 64;
        let model = convolution_model_1d(n, 2.0).unwrap();
        let mut a = vec![0.0; n];
        let mut b = vec![0.0; n];
        a[25] = 1.0;
        b[26] = 1.0;
        let ba = model.apply_forward(&a).unwrap();
        let bb = model.apply_forward(&b).unwrap();
        for i in 10..n - 10 {
            assert_relative_eq!(ba[i], bb[i + 1], epsilon = 1e-14);
        }
    }

    #[test]
    fn blur_2d_impulse_is_outer_product_of_kernels() {
        let n = 17;
        let model = convolution_model_2d(n, 1.5).unwrap();
        let mut impulse = vec![0.0; n * n];
        let c = n / 2;
        impulse[c * n + c] = 1.0; // column-stacked center pixel
        let blurred = model.apply_forward(&impulse).unwrap();
        let taps = gaussian_kernel(1.5);
        let tap = |k: i64| -> f64 {
            let k = k.unsigned_abs() as usize;
            if k < taps.len() {
                taps[k]
            } else {
                0.0
            }
        };
        for col in 0..n {
            for row in 0..n {
                let expected = tap(row as i64 - c as i64) * tap(col as i64 - c as i64);
                assert_relative_eq!(blurred[col * n + row], expected, epsilon = 1e-13);
            }
        }
    }

    #[test]
    fn blur_2d_matches_materialized_kronecker() {
        let n = 8;
        let model = convolution_model_2d(n, 1.0).unwrap();
        let dense = model.operator().unwrap().dense().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        let x: Vec<f64> = (0..n * n).map(|_| rng.gen::<f64>()).collect();
        let y1 = model.apply_forward(&x).unwrap();
        let y2 = dense.apply_vec(&x);
        for (a, b) in y1.iter().zip(&y2) {
            assert_relative_eq!(a, b, epsilon = 1e-12);
        }
        // Adjoint equals the dense transpose action.
        let v: Vec<f64> = (0..n * n).map(|_| rng.gen::<f64>()).collect();
        let a1 = model.apply_adjoint(&v).unwrap();
        let a2 = dense.apply_transpose_vec(&v);
        for (a, b) in a1.iter().zip(&a2) {
            assert_relative_eq!(a, b, epsilon = 1e-12);
        }
    }

    #[test]
    fn gravity_grid_endpoints() {
        let model = gravity_model(100).unwrap();
        match model.range_geometry() {
            Geometry::Continuous1D { n, interval } => {
                assert_eq!(*n, 100);
                assert_eq!(*interval, (-8000.0, 8000.0));
            }
            g => panic!("unexpected geometry {g:?}"),
        }
    }

    #[test]
    fn gravity_forward_is_even_in_xi() {
        let model = gravity_model(100).unwrap();
        let y = model.apply_forward(&[1500.0, 800.0, 1000.0]).unwrap();
        for i in 0..50 {
            assert_relative_eq!(y[i], y[99 - i], max_relative = 1e-12);
        }
    }

    #[test]
    fn gravity_peak_value_at_origin() {
        // Odd m puts a grid point exactly at xi = 0, where the anomaly is
        // c * rho * r^3 / z^2.
        let model = gravity_model(101).unwrap();
        let y = model.apply_forward(&[1500.0, 800.0, 1000.0]).unwrap();
        let c = 4.0 / 3.0 * std::f64::consts::PI * GRAVITATIONAL_CONSTANT;
        let expected = c * 800.0 * 1000.0f64.powi(3) / 1500.0f64.powi(2);
        assert_relative_eq!(y[50], expected, max_relative = 1e-13);
        assert_relative_eq!(y[50], 9.94e-5, max_relative = 1e-3);
    }

    #[test]
    fn gravity_jacobian_matches_finite_differences() {
        let model = gravity_model(100).unwrap();
        let x = vec![1500.0, 800.0, 1000.0];
        let j = model.jacobian(&x).unwrap();
        let fd = finite_difference_jacobian(&model, &x, 1e-6).unwrap();
        for i in 0..100 {
            for c in 0..3 {
                let a = j.get(i, c);
                let b = fd.get(i, c);
                if a.abs() > 1e-18 {
                    assert_relative_eq!(a, b, max_relative = 1e-5);
                }
            }
        }
    }

    #[test]
    fn gravity_density_column_is_forward_over_rho() {
        let model = gravity_model(101).unwrap();
        let x = vec![1500.0, 800.0, 1000.0];
        let y = model.apply_forward(&x).unwrap();
        let j = model.jacobian(&x).unwrap();
        for i in 0..101 {
            assert_relative_eq!(j.get(i, 1), y[i] / 800.0, max_relative = 1e-12);
        }
    }

    #[test]
    fn gravity_rejects_nonpositive_depth() {
        let model = gravity_model(10).unwrap();
        assert!(model.apply_forward(&[0.0, 800.0, 1000.0]).is_err());
        assert!(model.apply_forward(&[-5.0, 800.0, 1000.0]).is_err());
    }

    #[test]
    fn nonlinear_without_jacobian_is_a_capability_error() {
        let forward: ForwardFn = Arc::new(|x: &[f64]| Ok(vec![x[0] * x[0]]));
        let m = ForwardModel::nonlinear(
            forward,
            None,
            Geometry::continuous_1d(1),
            Geometry::continuous_1d(1),
        );
        assert!(matches!(m.jacobian(&[1.0]), Err(Error::Capability(_))));
        assert!(matches!(m.apply_adjoint(&[1.0]), Err(Error::Capability(_))));
    }

    #[test]
    fn linear_model_jacobian_is_its_matrix() {
        let op = MatrixOperator::Dense(
            DenseMatrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap(),
        );
        let m = ForwardModel::linear_default(op.clone());
        let j = m.jacobian(&[0.7, -0.3]).unwrap();
        assert_eq!(j, op.dense().unwrap());
    }
}
