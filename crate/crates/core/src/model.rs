//! The spiked-covariance single-index data model.
//!
//! Features are `a ~ N(0, I + lambda v v^T)` and labels are
//! `y = f(a . v0) + eps`. The overlaps of an iterate with the frame
//! `e1 = v0`, `e2 = (v - eta1 v0) / eta2` drive all population dynamics.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::gaussian::{hermite_poly, Polynomial};

pub(crate) const UNIT_TOL: f64 = 1e-9;

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub(crate) fn check_unit(x: &[f64]) -> Result<()> {
    let n = norm(x);
    if (n - 1.0).abs() > UNIT_TOL || !n.is_finite() {
        return Err(Error::NotUnitNorm { norm: n });
    }
    Ok(())
}

pub(crate) fn standard_normal_vec<R: Rng + ?Sized>(d: usize, rng: &mut R) -> Vec<f64> {
    (0..d).map(|_| rng.sample(StandardNormal)).collect()
}

/// Activation function with exact first and second derivatives.
///
/// Polynomial activations get closed-form population quantities; everything
/// else goes through quadrature.
#[derive(Debug, Clone, PartialEq)]
pub enum Activation {
    Polynomial {
        f: Polynomial,
        df: Polynomial,
        d2f: Polynomial,
    },
    Tanh,
}

impl Activation {
    pub fn polynomial(f: Polynomial) -> Self {
        let df = f.derivative();
        let d2f = df.derivative();
        Self::Polynomial { f, df, d2f }
    }

    /// The `k`-th probabilists' Hermite polynomial.
    pub fn hermite(k: usize) -> Result<Self> {
        Ok(Self::polynomial(hermite_poly(k)?))
    }

    pub fn as_polynomial(&self) -> Option<&Polynomial> {
        match self {
            Self::Polynomial { f, .. } => Some(f),
            Self::Tanh => None,
        }
    }

    #[inline]
    pub fn value(&self, u: f64) -> f64 {
        match self {
            Self::Polynomial { f, .. } => f.eval(u),
            Self::Tanh => u.tanh(),
        }
    }

    #[inline]
    pub fn derivative(&self, u: f64) -> f64 {
        match self {
            Self::Polynomial { df, .. } => df.eval(u),
            Self::Tanh => 1.0 - u.tanh().powi(2),
        }
    }

    #[inline]
    pub fn second_derivative(&self, u: f64) -> f64 {
        match self {
            Self::Polynomial { d2f, .. } => d2f.eval(u),
            Self::Tanh => {
                let t = u.tanh();
                -2.0 * t * (1.0 - t * t)
            }
        }
    }
}

impl FromStr for Activation {
    type Err = Error;

    /// Accepts `h<k>`, `poly:c0,c1,...` (ascending degree) and `tanh`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let bad = |reason: &str| Error::Parse {
            input: s.to_string(),
            reason: reason.to_string(),
        };
        if s == "tanh" {
            return Ok(Self::Tanh);
        }
        if let Some(rest) = s.strip_prefix("poly:") {
            let coeffs = rest
                .split(',')
                .map(|c| c.trim().parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| bad(&e.to_string()))?;
            return Ok(Self::polynomial(Polynomial::new(coeffs)?));
        }
        if let Some(k) = s.strip_prefix('h') {
            let k = k
                .parse::<usize>()
                .map_err(|_| bad("expected h<k>, poly:c0,c1,... or tanh"))?;
            return Self::hermite(k);
        }
        Err(bad("expected h<k>, poly:c0,c1,... or tanh"))
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Tanh => write!(f, "tanh"),
            Self::Polynomial { f: p, .. } => {
                for k in 0..=crate::gaussian::MAX_DEGREE {
                    if hermite_poly(k).as_ref() == Ok(p) {
                        return write!(f, "h{k}");
                    }
                }
                let cs: Vec<String> = p.coefficients().iter().map(|c| c.to_string()).collect();
                write!(f, "poly:{}", cs.join(","))
            }
        }
    }
}

/// Overlaps `(m1, m2) = (X . e1, X . e2)` of an iterate with the frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorrelationState {
    pub m1: f64,
    pub m2: f64,
}

impl CorrelationState {
    /// Fails unless `m1^2 + m2^2 <= 1 + 1e-9`.
    pub fn new(m1: f64, m2: f64) -> Result<Self> {
        let s = Self { m1, m2 };
        if !(m1.is_finite() && m2.is_finite()) || s.norm_sq() > 1.0 + UNIT_TOL {
            return Err(Error::OutsideDisk { x1: m1, x2: m2 });
        }
        Ok(s)
    }

    pub fn norm_sq(&self) -> f64 {
        self.m1 * self.m1 + self.m2 * self.m2
    }
}

/// Ground-truth parameters of the generative model.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    d: usize,
    lambda: f64,
    eta1: f64,
    noise_std: f64,
    v0: Vec<f64>,
    v: Vec<f64>,
    spike_gain: f64,
}

impl ModelParams {
    /// Canonical placement: `v0` is the first standard basis vector and the
    /// spike is `v = eta1 b0 + eta2 b1`.
    pub fn new(d: usize, lambda: f64, eta1: f64, noise_std: f64) -> Result<Self> {
        if d < 2 {
            return Err(invalid("d", format!("dimension must be at least 2, got {d}")));
        }
        if !(0.0..=1.0).contains(&eta1) {
            return Err(invalid("eta1", format!("must lie in [0, 1], got {eta1}")));
        }
        let eta2 = (1.0 - eta1 * eta1).max(0.0).sqrt();
        let mut v0 = vec![0.0; d];
        v0[0] = 1.0;
        let mut v = vec![0.0; d];
        v[0] = eta1;
        v[1] = eta2;
        Self::with_directions(v0, v, lambda, noise_std)
    }

    /// Arbitrary unit vectors `v0` (target) and `v` (spike); `eta1 = v . v0`
    /// must be non-negative.
    pub fn with_directions(v0: Vec<f64>, v: Vec<f64>, lambda: f64, noise_std: f64) -> Result<Self> {
        if v0.len() != v.len() {
            return Err(Error::DimensionMismatch {
                expected: v0.len(),
                got: v.len(),
            });
        }
        if v0.len() < 2 {
            return Err(invalid("d", "dimension must be at least 2"));
        }
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(invalid("lambda", format!("must be finite and >= 0, got {lambda}")));
        }
        if !(noise_std >= 0.0 && noise_std.is_finite()) {
            return Err(invalid(
                "noise_std",
                format!("must be finite and >= 0, got {noise_std}"),
            ));
        }
        for x in [&v0, &v] {
            let n = norm(x);
            if (n - 1.0).abs() > 1e-12 {
                return Err(Error::NotUnitNorm { norm: n });
            }
        }
        let eta1 = dot(&v, &v0);
        if eta1 < -1e-12 {
            return Err(invalid("eta1", format!("v . v0 must be >= 0, got {eta1}")));
        }
        Ok(Self {
            d: v0.len(),
            lambda,
            eta1: eta1.clamp(0.0, 1.0),
            noise_std,
            v0,
            v,
            spike_gain: (1.0 + lambda).sqrt() - 1.0,
        })
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn eta1(&self) -> f64 {
        self.eta1
    }

    pub fn eta2(&self) -> f64 {
        (1.0 - self.eta1 * self.eta1).max(0.0).sqrt()
    }

    pub fn noise_std(&self) -> f64 {
        self.noise_std
    }

    pub fn v0(&self) -> &[f64] {
        &self.v0
    }

    pub fn spike(&self) -> &[f64] {
        &self.v
    }

    /// Draws `a ~ N(0, I + lambda v v^T)` as `z + (sqrt(1 + lambda) - 1)(v . z) v`.
    pub fn sample_features<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let mut a = vec![0.0; self.d];
        self.sample_features_into(rng, &mut a);
        a
    }

    /// Allocation-free variant of [`Self::sample_features`].
    pub fn sample_features_into<R: Rng + ?Sized>(&self, rng: &mut R, a: &mut [f64]) {
        debug_assert_eq!(a.len(), self.d);
        for x in a.iter_mut() {
            *x = rng.sample(StandardNormal);
        }
        if self.spike_gain != 0.0 {
            let c = self.spike_gain * dot(&self.v, a);
            for (x, vi) in a.iter_mut().zip(&self.v) {
                *x += c * vi;
            }
        }
    }

    /// `f(a . v0) + noise_std * xi`. No noise is drawn when `noise_std == 0`.
    pub fn label<R: Rng + ?Sized>(&self, a: &[f64], f: &Activation, rng: &mut R) -> f64 {
        let clean = f.value(dot(a, &self.v0));
        if self.noise_std > 0.0 {
            let xi: f64 = rng.sample(StandardNormal);
            clean + self.noise_std * xi
        } else {
            clean
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, f: &Activation, rng: &mut R) -> Sample {
        let a = self.sample_features(rng);
        let y = self.label(&a, f, rng);
        Sample { a, y }
    }
}

/// Orthonormal pair `e1 = v0`, `e2` = normalized residual of the spike.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub e1: Vec<f64>,
    pub e2: Vec<f64>,
}

impl Frame {
    /// When the spike coincides with `v0` the residual vanishes and `e2` is
    /// fixed to a deterministic unit vector orthogonal to `e1`.
    pub fn from_params(params: &ModelParams) -> Self {
        let e1 = params.v0().to_vec();
        let eta1 = dot(params.spike(), &e1);
        let mut e2: Vec<f64> = params.spike().iter().zip(&e1).map(|(v, e)| v - eta1 * e).collect();
        let n = norm(&e2);
        if n > 1e-12 {
            e2.iter_mut().for_each(|x| *x /= n);
        } else {
            // least aligned basis vector, Gram-Schmidt against e1
            let k = e1
                .iter()
                .enumerate()
                .min_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
                .map(|(k, _)| k)
                .unwrap_or(0);
            e2 = e1.iter().map(|e| -e1[k] * e).collect();
            e2[k] += 1.0;
            let n = norm(&e2);
            e2.iter_mut().for_each(|x| *x /= n);
        }
        Self { e1, e2 }
    }

    pub fn overlaps(&self, x: &[f64]) -> CorrelationState {
        CorrelationState {
            m1: dot(x, &self.e1),
            m2: dot(x, &self.e2),
        }
    }
}

/// One labelled observation.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub a: Vec<f64>,
    pub y: f64,
}

/// Squared loss `(f(x . a) - y)^2`.
pub fn loss(x: &[f64], s: &Sample, f: &Activation) -> f64 {
    let r = f.value(dot(x, &s.a)) - s.y;
    r * r
}

/// `2 (f(x . a) - y) f'(x . a) a`.
pub fn euclidean_grad_loss(x: &[f64], s: &Sample, f: &Activation) -> Result<Vec<f64>> {
    if x.len() != s.a.len() {
        return Err(Error::DimensionMismatch {
            expected: x.len(),
            got: s.a.len(),
        });
    }
    check_unit(x)?;
    let u = dot(x, &s.a);
    let scale = 2.0 * (f.value(u) - s.y) * f.derivative(u);
    if !scale.is_finite() {
        return Err(Error::NonFinite {
            step: 0,
            what: format!("loss gradient scale {scale} at x . a = {u}"),
        });
    }
    Ok(s.a.iter().map(|ai| scale * ai).collect())
}

/// Projection of `g` onto the tangent space of the sphere at `x`.
pub fn spherical_grad(x: &[f64], g: &[f64]) -> Result<Vec<f64>> {
    if x.len() != g.len() {
        return Err(Error::DimensionMismatch {
            expected: x.len(),
            got: g.len(),
        });
    }
    check_unit(x)?;
    let c = dot(g, x);
    Ok(g.iter().zip(x).map(|(gi, xi)| gi - c * xi).collect())
}

/// `(x . e1, x . e2)`.
pub fn overlaps(x: &[f64], frame: &Frame) -> Result<CorrelationState> {
    check_unit(x)?;
    Ok(frame.overlaps(x))
}
