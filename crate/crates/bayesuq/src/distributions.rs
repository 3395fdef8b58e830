//! Probability densities with deferred (conditional) parameters.
//!
//! A [`Distribution`] is a named density whose parameters are either concrete
//! values or declared functions of other named variables. Conditioning
//! resolves deferred parameters; fully specified distributions evaluate
//! log-densities, gradients where defined, and sample directly where a
//! sampler exists.

use crate::error::{Error, Result};
use crate::geometry::Geometry;
use crate::linalg::{cholesky_factor, gmrf_precision, Diff1d, Diff2d, LinOp, MrfDims};
use crate::models::ForwardModel;
use crate::samples::{Provenance, Samples};
use crate::util::ln_gamma;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution as RandDistribution, Gamma as GammaSampler, StandardNormal};
use std::collections::HashMap;
use std::sync::Arc;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Named transform applied to a conditioning variable's value when a deferred
/// scalar parameter is resolved. Declared (not inferred) so that problem
/// structure stays inspectable for conjugacy detection.
#[derive(Clone)]
pub enum ScalarMap {
    Identity,
    Reciprocal,
    Square,
    Custom(Arc<dyn Fn(f64) -> f64 + Send + Sync>),
}

impl ScalarMap {
    pub fn eval(&self, v: f64) -> f64 {
        match self {
            ScalarMap::Identity => v,
            ScalarMap::Reciprocal => 1.0 / v,
            ScalarMap::Square => v * v,
            ScalarMap::Custom(f) => f(v),
        }
    }
}

impl std::fmt::Debug for ScalarMap {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ScalarMap::Identity => write!(f, "Identity"),
            ScalarMap::Reciprocal => write!(f, "Reciprocal"),
            ScalarMap::Square => write!(f, "Square"),
            ScalarMap::Custom(_) => write!(f, "Custom"),
        }
    }
}

/// A scalar parameter: a concrete value, or deferred on a named variable.
#[derive(Debug, Clone)]
pub enum ScalarParam {
    Fixed(f64),
    Deferred { dep: String, map: ScalarMap },
}

impl ScalarParam {
    pub fn deferred(dep: impl Into<String>, map: ScalarMap) -> Self {
        ScalarParam::Deferred {
            dep: dep.into(),
            map,
        }
    }

    pub fn value(&self) -> Result<f64> {
        match self {
            ScalarParam::Fixed(v) => Ok(*v),
            ScalarParam::Deferred { dep, .. } => Err(Error::invalid(format!(
                "parameter still deferred on '{dep}'"
            ))),
        }
    }

    pub fn dep(&self) -> Option<&str> {
        match self {
            ScalarParam::Fixed(_) => None,
            ScalarParam::Deferred { dep, .. } => Some(dep),
        }
    }

    fn resolve(&self, bindings: &HashMap<String, Vec<f64>>) -> Result<ScalarParam> {
        match self {
            ScalarParam::Fixed(v) => Ok(ScalarParam::Fixed(*v)),
            ScalarParam::Deferred { dep, map } => match bindings.get(dep) {
                Some(v) => {
                    if v.len() != 1 {
                        return Err(Error::dim(
                            format!("scalar binding for '{dep}'"),
                            1,
                            v.len(),
                        ));
                    }
                    Ok(ScalarParam::Fixed(map.eval(v[0])))
                }
                None => Ok(self.clone()),
            },
        }
    }
}

/// Mean of a Gaussian: concrete, the value of another variable, or a forward
/// model applied to another variable.
#[derive(Clone)]
pub enum MeanParam {
    Fixed(Vec<f64>),
    Var { dep: String },
    Model { dep: String, model: ForwardModel },
}

impl std::fmt::Debug for MeanParam {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            MeanParam::Fixed(v) => write!(f, "Fixed(dim {})", v.len()),
            MeanParam::Var { dep } => write!(f, "Var({dep})"),
            MeanParam::Model { dep, model } => {
                write!(f, "{}({dep})", if model.is_linear() { "A@" } else { "A" })
            }
        }
    }
}

impl MeanParam {
    pub fn dep_name(&self) -> Option<&str> {
        match self {
            MeanParam::Fixed(_) => None,
            MeanParam::Var { dep } | MeanParam::Model { dep, .. } => Some(dep),
        }
    }

    fn resolve(&self, bindings: &HashMap<String, Vec<f64>>, dim: usize) -> Result<MeanParam> {
        match self {
            MeanParam::Fixed(v) => Ok(MeanParam::Fixed(v.clone())),
            MeanParam::Var { dep } => match bindings.get(dep) {
                Some(v) => {
                    if v.len() != dim {
                        return Err(Error::dim(format!("binding for '{dep}'"), dim, v.len()));
                    }
                    Ok(MeanParam::Fixed(v.clone()))
                }
                None => Ok(self.clone()),
            },
            MeanParam::Model { dep, model } => match bindings.get(dep) {
                Some(v) => Ok(MeanParam::Fixed(model.apply_forward(v)?)),
                None => Ok(self.clone()),
            },
        }
    }
}

/// Parameterization tag for the Gaussian spread.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GaussianTag {
    Cov,
    Prec,
    SqrtCov,
    SqrtPrec,
}

/// Isotropic (possibly deferred) or diagonal Gaussian spread.
#[derive(Debug, Clone)]
pub struct GaussianSpread {
    pub tag: GaussianTag,
    pub value: SpreadValue,
}

#[derive(Debug, Clone)]
pub enum SpreadValue {
    Scalar(ScalarParam),
    Diag(Vec<f64>),
}

impl GaussianSpread {
    pub fn fixed_std(std: f64) -> Self {
        GaussianSpread {
            tag: GaussianTag::SqrtCov,
            value: SpreadValue::Scalar(ScalarParam::Fixed(std)),
        }
    }

    pub fn fixed_cov(cov: f64) -> Self {
        GaussianSpread {
            tag: GaussianTag::Cov,
            value: SpreadValue::Scalar(ScalarParam::Fixed(cov)),
        }
    }

    pub fn fixed_prec(prec: f64) -> Self {
        GaussianSpread {
            tag: GaussianTag::Prec,
            value: SpreadValue::Scalar(ScalarParam::Fixed(prec)),
        }
    }

    pub fn diag_std(stds: Vec<f64>) -> Self {
        GaussianSpread {
            tag: GaussianTag::SqrtCov,
            value: SpreadValue::Diag(stds),
        }
    }

    /// Precision deferred as the identity of a named variable (`prec = s`).
    pub fn prec_of(dep: impl Into<String>) -> Self {
        GaussianSpread {
            tag: GaussianTag::Prec,
            value: SpreadValue::Scalar(ScalarParam::deferred(dep, ScalarMap::Identity)),
        }
    }

    /// Covariance deferred as the reciprocal of a named variable
    /// (`cov = 1/s`).
    pub fn cov_reciprocal_of(dep: impl Into<String>) -> Self {
        GaussianSpread {
            tag: GaussianTag::Cov,
            value: SpreadValue::Scalar(ScalarParam::deferred(dep, ScalarMap::Reciprocal)),
        }
    }

    pub fn deferred(tag: GaussianTag, dep: impl Into<String>, map: ScalarMap) -> Self {
        GaussianSpread {
            tag,
            value: SpreadValue::Scalar(ScalarParam::deferred(dep, map)),
        }
    }

    fn dep(&self) -> Option<&str> {
        match &self.value {
            SpreadValue::Scalar(p) => p.dep(),
            SpreadValue::Diag(_) => None,
        }
    }

    fn resolve(&self, bindings: &HashMap<String, Vec<f64>>) -> Result<GaussianSpread> {
        Ok(GaussianSpread {
            tag: self.tag,
            value: match &self.value {
                SpreadValue::Scalar(p) => SpreadValue::Scalar(p.resolve(bindings)?),
                SpreadValue::Diag(d) => SpreadValue::Diag(d.clone()),
            },
        })
    }

    fn to_variance(tag: GaussianTag, raw: f64) -> Result<f64> {
        let v = match tag {
            GaussianTag::Cov => raw,
            GaussianTag::Prec => 1.0 / raw,
            GaussianTag::SqrtCov => raw * raw,
            GaussianTag::SqrtPrec => 1.0 / (raw * raw),
        };
        if !(v.is_finite() && v > 0.0) {
            return Err(Error::invalid(format!(
                "Gaussian spread resolves to nonpositive variance {v}"
            )));
        }
        Ok(v)
    }

    /// Per-coordinate variances for a fully specified spread.
    pub(crate) fn variances(&self, dim: usize) -> Result<Vec<f64>> {
        match &self.value {
            SpreadValue::Scalar(p) => {
                let v = Self::to_variance(self.tag, p.value()?)?;
                Ok(vec![v; dim])
            }
            SpreadValue::Diag(d) => {
                if d.len() != dim {
                    return Err(Error::dim("diagonal spread", dim, d.len()));
                }
                d.iter()
                    .map(|&raw| Self::to_variance(self.tag, raw))
                    .collect()
            }
        }
    }
}

/// Gaussian with isotropic or diagonal spread.
#[derive(Debug, Clone)]
pub struct GaussianDist {
    pub mean: MeanParam,
    pub spread: GaussianSpread,
}

/// Gamma in shape/rate parameterization: mean = shape / rate.
#[derive(Debug, Clone)]
pub struct GammaDist {
    pub shape: f64,
    pub rate: f64,
}

/// `exp` of a Gaussian with the given location and variance.
#[derive(Debug, Clone)]
pub struct LognormalDist {
    pub location: f64,
    pub variance: f64,
}

/// Box uniform.
#[derive(Debug, Clone)]
pub struct UniformDist {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

/// Markov-random-field prior on first differences with zero boundary
/// conditions. `scale` is the precision `d` for GMRF and the scale `b` for
/// LMRF/CMRF.
#[derive(Debug, Clone)]
pub struct MrfDist {
    pub location: Vec<f64>,
    pub scale: ScalarParam,
    pub dims: MrfDims,
}

type UserLogpdf = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;
type UserGrad = Arc<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>;
type UserSampler = Arc<dyn Fn(&mut ChaCha8Rng) -> Vec<f64> + Send + Sync>;

/// User-supplied density with optional gradient and sampler.
#[derive(Clone)]
pub struct UserDist {
    pub logpdf: UserLogpdf,
    pub grad: Option<UserGrad>,
    pub sampler: Option<UserSampler>,
}

impl std::fmt::Debug for UserDist {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("UserDist")
            .field("grad", &self.grad.is_some())
            .field("sampler", &self.sampler.is_some())
            .finish()
    }
}

#[derive(Debug, Clone)]
pub enum DistKind {
    Gaussian(GaussianDist),
    Gamma(GammaDist),
    Lognormal(LognormalDist),
    Uniform(UniformDist),
    Gmrf(MrfDist),
    Lmrf(MrfDist),
    Cmrf(MrfDist),
    UserDefined(UserDist),
}

/// A named density with possibly-deferred parameters.
#[derive(Debug, Clone)]
pub struct Distribution {
    name: String,
    geometry: Geometry,
    kind: DistKind,
}

impl Distribution {
    pub fn gaussian(name: impl Into<String>, mean: Vec<f64>, spread: GaussianSpread) -> Result<Self> {
        let geometry = Geometry::continuous_1d(mean.len());
        Self::gaussian_on(name, mean, spread, geometry)
    }

    pub fn gaussian_on(
        name: impl Into<String>,
        mean: Vec<f64>,
        spread: GaussianSpread,
        geometry: Geometry,
    ) -> Result<Self> {
        if geometry.par_dim() != mean.len() {
            return Err(Error::dim("gaussian mean", geometry.par_dim(), mean.len()));
        }
        Ok(Distribution {
            name: name.into(),
            geometry,
            kind: DistKind::Gaussian(GaussianDist {
                mean: MeanParam::Fixed(mean),
                spread,
            }),
        })
    }

    /// Gaussian whose mean is a forward model applied to another variable:
    /// the usual data distribution `y ~ Gaussian(A(x), ...)`.
    pub fn gaussian_model(
        name: impl Into<String>,
        dep: impl Into<String>,
        model: ForwardModel,
        spread: GaussianSpread,
    ) -> Result<Self> {
        let geometry = model.range_geometry().clone();
        Ok(Distribution {
            name: name.into(),
            geometry,
            kind: DistKind::Gaussian(GaussianDist {
                mean: MeanParam::Model {
                    dep: dep.into(),
                    model,
                },
                spread,
            }),
        })
    }

    /// Gaussian whose mean is the value of another variable.
    pub fn gaussian_of_var(
        name: impl Into<String>,
        dep: impl Into<String>,
        geometry: Geometry,
        spread: GaussianSpread,
    ) -> Result<Self> {
        Ok(Distribution {
            name: name.into(),
            geometry,
            kind: DistKind::Gaussian(GaussianDist {
                mean: MeanParam::Var { dep: dep.into() },
                spread,
            }),
        })
    }

    pub fn gamma(name: impl Into<String>, shape: f64, rate: f64) -> Result<Self> {
        if shape <= 0.0 || rate <= 0.0 {
            return Err(Error::invalid("gamma needs positive shape and rate"));
        }
        Ok(Distribution {
            name: name.into(),
            geometry: Geometry::continuous_1d(1),
            kind: DistKind::Gamma(GammaDist { shape, rate }),
        })
    }

    pub fn lognormal(name: impl Into<String>, location: f64, variance: f64) -> Result<Self> {
        if variance <= 0.0 {
            return Err(Error::invalid("lognormal needs positive variance"));
        }
        Ok(Distribution {
            name: name.into(),
            geometry: Geometry::continuous_1d(1),
            kind: DistKind::Lognormal(LognormalDist { location, variance }),
        })
    }

    pub fn uniform(name: impl Into<String>, lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        if lo.len() != hi.len() {
            return Err(Error::dim("uniform bounds", lo.len(), hi.len()));
        }
        if lo.iter().zip(&hi).any(|(a, b)| a >= b) {
            return Err(Error::invalid("uniform needs lo < hi per coordinate"));
        }
        let geometry = Geometry::continuous_1d(lo.len());
        Ok(Distribution {
            name: name.into(),
            geometry,
            kind: DistKind::Uniform(UniformDist { lo, hi }),
        })
    }

    fn mrf_geometry(location: &[f64], dims: MrfDims) -> Result<Geometry> {
        match dims {
            MrfDims::One => Ok(Geometry::continuous_1d(location.len())),
            MrfDims::Two => {
                let side = (location.len() as f64).sqrt().round() as usize;
                if side * side != location.len() {
                    return Err(Error::invalid(
                        "2D MRF location length must be a perfect square",
                    ));
                }
                Ok(Geometry::image_2d(side, side))
            }
        }
    }

    pub fn gmrf(
        name: impl Into<String>,
        location: Vec<f64>,
        precision: f64,
        dims: MrfDims,
    ) -> Result<Self> {
        if precision <= 0.0 {
            return Err(Error::invalid("GMRF precision must be positive"));
        }
        Self::gmrf_param(name, location, ScalarParam::Fixed(precision), dims)
    }

    pub fn gmrf_param(
        name: impl Into<String>,
        location: Vec<f64>,
        precision: ScalarParam,
        dims: MrfDims,
    ) -> Result<Self> {
        let geometry = Self::mrf_geometry(&location, dims)?;
        Ok(Distribution {
            name: name.into(),
            geometry,
            kind: DistKind::Gmrf(MrfDist {
                location,
                scale: precision,
                dims,
            }),
        })
    }

    pub fn lmrf(
        name: impl Into<String>,
        location: Vec<f64>,
        scale: f64,
        dims: MrfDims,
    ) -> Result<Self> {
        if scale <= 0.0 {
            return Err(Error::invalid("LMRF scale must be positive"));
        }
        Self::lmrf_param(name, location, ScalarParam::Fixed(scale), dims)
    }

    pub fn lmrf_param(
        name: impl Into<String>,
        location: Vec<f64>,
        scale: ScalarParam,
        dims: MrfDims,
    ) -> Result<Self> {
        let geometry = Self::mrf_geometry(&location, dims)?;
        Ok(Distribution {
            name: name.into(),
            geometry,
            kind: DistKind::Lmrf(MrfDist {
                location,
                scale,
                dims,
            }),
        })
    }

    pub fn cmrf(
        name: impl Into<String>,
        location: Vec<f64>,
        scale: f64,
        dims: MrfDims,
    ) -> Result<Self> {
        if scale <= 0.0 {
            return Err(Error::invalid("CMRF scale must be positive"));
        }
        let geometry = Self::mrf_geometry(&location, dims)?;
        Ok(Distribution {
            name: name.into(),
            geometry,
            kind: DistKind::Cmrf(MrfDist {
                location,
                scale: ScalarParam::Fixed(scale),
                dims,
            }),
        })
    }

    pub fn user_defined(
        name: impl Into<String>,
        geometry: Geometry,
        logpdf: UserLogpdf,
        grad: Option<UserGrad>,
        sampler: Option<UserSampler>,
    ) -> Self {
        Distribution {
            name: name.into(),
            geometry,
            kind: DistKind::UserDefined(UserDist {
                logpdf,
                grad,
                sampler,
            }),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn geometry(&self) -> &Geometry {
        &self.geometry
    }

    pub fn par_dim(&self) -> usize {
        self.geometry.par_dim()
    }

    pub fn kind(&self) -> &DistKind {
        &self.kind
    }

    pub fn family_name(&self) -> &'static str {
        match &self.kind {
            DistKind::Gaussian(_) => "Gaussian",
            DistKind::Gamma(_) => "Gamma",
            DistKind::Lognormal(_) => "Lognormal",
            DistKind::Uniform(_) => "Uniform",
            DistKind::Gmrf(_) => "GMRF",
            DistKind::Lmrf(_) => "LMRF",
            DistKind::Cmrf(_) => "CMRF",
            DistKind::UserDefined(_) => "UserDefined",
        }
    }

    /// Names of variables this distribution still defers on.
    pub fn conditioning_variables(&self) -> Vec<String> {
        let mut deps = Vec::new();
        match &self.kind {
            DistKind::Gaussian(g) => {
                if let Some(d) = g.mean.dep_name() {
                    deps.push(d.to_string());
                }
                if let Some(d) = g.spread.dep() {
                    deps.push(d.to_string());
                }
            }
            DistKind::Gmrf(m) | DistKind::Lmrf(m) | DistKind::Cmrf(m) => {
                if let Some(d) = m.scale.dep() {
                    deps.push(d.to_string());
                }
            }
            _ => {}
        }
        deps.dedup();
        deps
    }

    pub fn is_fully_specified(&self) -> bool {
        self.conditioning_variables().is_empty()
    }

    /// Resolve deferred parameters at the given bindings. Names that are not
    /// conditioning variables of this distribution are an error; conditioning
    /// variables absent from `bindings` stay deferred.
    pub fn condition(&self, bindings: &HashMap<String, Vec<f64>>) -> Result<Distribution> {
        let valid = self.conditioning_variables();
        for name in bindings.keys() {
            if !valid.iter().any(|v| v == name) {
                return Err(Error::UnknownVariable {
                    name: name.clone(),
                    valid,
                });
            }
        }
        self.condition_unchecked(bindings)
    }

    /// As [`Self::condition`] but ignores bindings for unrelated names;
    /// used when resolving whole joint assignments.
    pub(crate) fn condition_unchecked(
        &self,
        bindings: &HashMap<String, Vec<f64>>,
    ) -> Result<Distribution> {
        let kind = match &self.kind {
            DistKind::Gaussian(g) => DistKind::Gaussian(GaussianDist {
                mean: g.mean.resolve(bindings, self.par_dim())?,
                spread: g.spread.resolve(bindings)?,
            }),
            DistKind::Gmrf(m) => DistKind::Gmrf(MrfDist {
                location: m.location.clone(),
                scale: m.scale.resolve(bindings)?,
                dims: m.dims,
            }),
            DistKind::Lmrf(m) => DistKind::Lmrf(MrfDist {
                location: m.location.clone(),
                scale: m.scale.resolve(bindings)?,
                dims: m.dims,
            }),
            DistKind::Cmrf(m) => DistKind::Cmrf(MrfDist {
                location: m.location.clone(),
                scale: m.scale.resolve(bindings)?,
                dims: m.dims,
            }),
            other => other.clone(),
        };
        Ok(Distribution {
            name: self.name.clone(),
            geometry: self.geometry.clone(),
            kind,
        })
    }

    fn require_fully_specified(&self) -> Result<()> {
        let deps = self.conditioning_variables();
        if deps.is_empty() {
            Ok(())
        } else {
            Err(Error::invalid(format!(
                "distribution '{}' still conditions on {deps:?}",
                self.name
            )))
        }
    }

    fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.par_dim() {
            return Err(Error::dim(
                format!("logpdf input for '{}'", self.name),
                self.par_dim(),
                x.len(),
            ));
        }
        Ok(())
    }

    /// Log density at `x`, up to family-consistent constants.
    /// Parameter-dependent factors are always included. Out-of-support
    /// points return `-inf`.
    pub fn logpdf(&self, x: &[f64]) -> Result<f64> {
        self.require_fully_specified()?;
        self.check_dim(x)?;
        match &self.kind {
            DistKind::Gaussian(g) => {
                let mean = match &g.mean {
                    MeanParam::Fixed(m) => m,
                    _ => unreachable!("fully specified"),
                };
                let vars = g.spread.variances(self.par_dim())?;
                let mut lp = 0.0;
                for ((xi, mi), vi) in x.iter().zip(mean).zip(&vars) {
                    let d = xi - mi;
                    lp -= 0.5 * (d * d / vi + vi.ln() + LN_2PI);
                }
                Ok(lp)
            }
            DistKind::Gamma(g) => {
                let s = x[0];
                if s <= 0.0 {
                    return Ok(f64::NEG_INFINITY);
                }
                Ok(g.shape * g.rate.ln() - ln_gamma(g.shape) + (g.shape - 1.0) * s.ln()
                    - g.rate * s)
            }
            DistKind::Lognormal(l) => {
                let s = x[0];
                if s <= 0.0 {
                    return Ok(f64::NEG_INFINITY);
                }
                let d = s.ln() - l.location;
                Ok(-s.ln() - 0.5 * (LN_2PI + l.variance.ln()) - d * d / (2.0 * l.variance))
            }
            DistKind::Uniform(u) => {
                for ((xi, lo), hi) in x.iter().zip(&u.lo).zip(&u.hi) {
                    if xi < lo || xi > hi {
                        return Ok(f64::NEG_INFINITY);
                    }
                }
                Ok(-u
                    .lo
                    .iter()
                    .zip(&u.hi)
                    .map(|(lo, hi)| (hi - lo).ln())
                    .sum::<f64>())
            }
            DistKind::Gmrf(m) => {
                let d = m.scale.value()?;
                let stencil = DiffStencil::for_dist(m, self.par_dim())?;
                let q = stencil.quadratic(x, &m.location);
                Ok(0.5 * self.par_dim() as f64 * d.ln() - 0.5 * d * q)
            }
            DistKind::Lmrf(m) => {
                let b = m.scale.value()?;
                let stencil = DiffStencil::for_dist(m, self.par_dim())?;
                let t = stencil.l1_functional(x, &m.location);
                Ok(-t / b - stencil.n_terms() as f64 * (2.0 * b).ln())
            }
            DistKind::Cmrf(m) => {
                let b = m.scale.value()?;
                let stencil = DiffStencil::for_dist(m, self.par_dim())?;
                let terms = stencil.terms(x, &m.location);
                Ok(terms
                    .iter()
                    .map(|t| b.ln() - (b * b + t * t).ln())
                    .sum())
            }
            DistKind::UserDefined(u) => Ok((u.logpdf)(x)),
        }
    }

    /// Gradient of the log density at `x`. Non-differentiable families
    /// (LMRF, Uniform) produce a capability error; the boundary of a
    /// constrained support is an evaluation error.
    pub fn grad_logpdf(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.require_fully_specified()?;
        self.check_dim(x)?;
        match &self.kind {
            DistKind::Gaussian(g) => {
                let mean = match &g.mean {
                    MeanParam::Fixed(m) => m,
                    _ => unreachable!("fully specified"),
                };
                let vars = g.spread.variances(self.par_dim())?;
                Ok(x.iter()
                    .zip(mean)
                    .zip(&vars)
                    .map(|((xi, mi), vi)| -(xi - mi) / vi)
                    .collect())
            }
            DistKind::Gamma(g) => {
                let s = x[0];
                if s <= 0.0 {
                    return Err(Error::Evaluation(format!(
                        "gamma gradient undefined at boundary x = {s}"
                    )));
                }
                Ok(vec![(g.shape - 1.0) / s - g.rate])
            }
            DistKind::Lognormal(l) => {
                let s = x[0];
                if s <= 0.0 {
                    return Err(Error::Evaluation(format!(
                        "lognormal gradient undefined at boundary x = {s}"
                    )));
                }
                Ok(vec![(-1.0 - (s.ln() - l.location) / l.variance) / s])
            }
            DistKind::Uniform(_) => Err(Error::capability(
                "uniform log-density has no useful gradient",
            )),
            DistKind::Gmrf(m) => {
                let d = m.scale.value()?;
                let stencil = DiffStencil::for_dist(m, self.par_dim())?;
                let terms = stencil.terms(x, &m.location);
                let mut g = stencil.apply_transpose(&terms);
                for gi in g.iter_mut() {
                    *gi *= -d;
                }
                Ok(g)
            }
            DistKind::Lmrf(_) => Err(Error::capability(
                "LMRF log-density is not differentiable; use UGLA or a non-gradient sampler",
            )),
            DistKind::Cmrf(m) => {
                let b = m.scale.value()?;
                let stencil = DiffStencil::for_dist(m, self.par_dim())?;
                let terms = stencil.terms(x, &m.location);
                let weights: Vec<f64> = terms
                    .iter()
                    .map(|t| -2.0 * t / (b * b + t * t))
                    .collect();
                Ok(stencil.apply_transpose(&weights))
            }
            DistKind::UserDefined(u) => match &u.grad {
                Some(g) => Ok(g(x)),
                None => Err(Error::capability(
                    "user-defined density provides no gradient",
                )),
            },
        }
    }

    /// `N` independent draws. Families without a direct sampler (LMRF, CMRF)
    /// produce a capability error pointing at MCMC.
    pub fn sample_direct(&self, rng: &mut ChaCha8Rng, n: usize) -> Result<Samples> {
        self.require_fully_specified()?;
        let dim = self.par_dim();
        let mut data = Vec::with_capacity(n * dim);
        match &self.kind {
            DistKind::Gaussian(g) => {
                let mean = match &g.mean {
                    MeanParam::Fixed(m) => m.clone(),
                    _ => unreachable!("fully specified"),
                };
                let stds: Vec<f64> = g
                    .spread
                    .variances(dim)?
                    .into_iter()
                    .map(f64::sqrt)
                    .collect();
                for _ in 0..n {
                    for (m, s) in mean.iter().zip(&stds) {
                        let z: f64 = rng.sample(StandardNormal);
                        data.push(m + s * z);
                    }
                }
            }
            DistKind::Gamma(g) => {
                let sampler = GammaSampler::new(g.shape, 1.0 / g.rate)
                    .map_err(|e| Error::invalid(format!("gamma sampler: {e}")))?;
                for _ in 0..n {
                    data.push(sampler.sample(rng));
                }
            }
            DistKind::Lognormal(l) => {
                let sd = l.variance.sqrt();
                for _ in 0..n {
                    let z: f64 = rng.sample(StandardNormal);
                    data.push((l.location + sd * z).exp());
                }
            }
            DistKind::Uniform(u) => {
                for _ in 0..n {
                    for (lo, hi) in u.lo.iter().zip(&u.hi) {
                        data.push(lo + (hi - lo) * rng.gen::<f64>());
                    }
                }
            }
            DistKind::Gmrf(m) => {
                // x = mu + L^{-T} z with L the Cholesky factor of Q.
                let d = m.scale.value()?;
                let q = gmrf_precision(dim, d, m.dims)?;
                let chol = cholesky_factor(&q)?;
                let mut z = vec![0.0; dim];
                for _ in 0..n {
                    for zi in z.iter_mut() {
                        *zi = rng.sample(StandardNormal);
                    }
                    let x = chol.solve_upper_transpose(&z)?;
                    data.extend(x.iter().zip(&m.location).map(|(xi, mi)| xi + mi));
                }
            }
            DistKind::Lmrf(_) | DistKind::Cmrf(_) => {
                return Err(Error::capability(format!(
                    "{} has no direct sampler; sample it with an MCMC strategy",
                    self.family_name()
                )));
            }
            DistKind::UserDefined(u) => match &u.sampler {
                Some(s) => {
                    for _ in 0..n {
                        let x = s(rng);
                        if x.len() != dim {
                            return Err(Error::dim("user sample", dim, x.len()));
                        }
                        data.extend_from_slice(&x);
                    }
                }
                None => {
                    return Err(Error::capability(
                        "user-defined density provides no sampler",
                    ))
                }
            },
        }
        Samples::new(data, n, dim, self.geometry.clone()).map(|s| {
            s.with_provenance(Provenance {
                sampler: "direct".into(),
                seed: None,
            })
        })
    }
}

/// First-difference stencil shared by the MRF families: 1D uses the
/// `(n+1) x n` operator, 2D stacks vertical and horizontal differences on the
/// column-stacked grid (2N(N+1) terms, each weighted 1/2 in the LMRF
/// functional).
pub(crate) struct DiffStencil {
    one_d: Option<Diff1d>,
    two_d: Option<Diff2d>,
    weight: f64,
}

impl DiffStencil {
    pub(crate) fn new(par_dim: usize, dims: MrfDims) -> Result<Self> {
        match dims {
            MrfDims::One => Ok(DiffStencil {
                one_d: Some(Diff1d::new(par_dim)?),
                two_d: None,
                weight: 1.0,
            }),
            MrfDims::Two => {
                let side = (par_dim as f64).sqrt().round() as usize;
                if side * side != par_dim {
                    return Err(Error::invalid("2D stencil needs a square grid"));
                }
                Ok(DiffStencil {
                    one_d: None,
                    two_d: Some(Diff2d::new(side)?),
                    weight: 0.5,
                })
            }
        }
    }

    fn for_dist(m: &MrfDist, par_dim: usize) -> Result<Self> {
        Self::new(par_dim, m.dims)
    }

    pub(crate) fn op(&self) -> &dyn LinOp {
        match (&self.one_d, &self.two_d) {
            (Some(d), _) => d,
            (_, Some(d)) => d,
            _ => unreachable!(),
        }
    }

    pub(crate) fn n_terms(&self) -> usize {
        self.op().rows()
    }

    /// Structural weight of each difference term in the l1 functional.
    pub(crate) fn weight(&self) -> f64 {
        self.weight
    }

    pub(crate) fn terms(&self, x: &[f64], location: &[f64]) -> Vec<f64> {
        if location.iter().all(|&v| v == 0.0) {
            self.op().apply_vec(x)
        } else {
            let centered: Vec<f64> = x.iter().zip(location).map(|(a, b)| a - b).collect();
            self.op().apply_vec(&centered)
        }
    }

    pub(crate) fn apply_transpose(&self, t: &[f64]) -> Vec<f64> {
        self.op().apply_transpose_vec(t)
    }

    /// `T(x) = w Σ |(D(x - loc))_i|`, the exponent functional of the LMRF.
    pub(crate) fn l1_functional(&self, x: &[f64], location: &[f64]) -> f64 {
        self.weight * self.terms(x, location).iter().map(|t| t.abs()).sum::<f64>()
    }

    /// `(x - loc)ᵀ L (x - loc)` via the difference terms (weight-free; the
    /// 2D GMRF precision is the plain Kronecker sum).
    pub(crate) fn quadratic(&self, x: &[f64], location: &[f64]) -> f64 {
        self.terms(x, location).iter().map(|t| t * t).sum()
    }
}
