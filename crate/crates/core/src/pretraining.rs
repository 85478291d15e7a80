//! Initial iterates for SGD: uniform on the sphere, PCA on unlabeled data,
//! prescribed overlaps, and transfer vectors. Also the reference formulas
//! for the top sample eigenvector of a spiked covariance.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::model::{dot, norm, standard_normal_vec, Activation, Frame, ModelParams};

/// Default power-iteration tolerance on successive iterates.
pub const PCA_TOL: f64 = 1e-8;
/// Default power-iteration budget.
pub const PCA_MAX_ITERS: usize = 1000;

/// How an SGD run is initialized. Canonical strings: `random`, `pca:<n>`,
/// `fixed:<m1>,<m2>`, `transfer:<eta>`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InitSpec {
    Random,
    /// PCA on this many unlabeled samples.
    Pca(usize),
    FixedCorrelation(f64, f64),
    /// Overlap `eta` with the target, uniform otherwise.
    Transfer(f64),
}

impl InitSpec {
    /// PCA with the default `20 d` unlabeled samples.
    pub fn default_pca(d: usize) -> Self {
        Self::Pca(20 * d)
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            Self::Random => Ok(()),
            Self::Pca(n) if n < 2 => Err(invalid("init", format!("pca needs n >= 2, got {n}"))),
            Self::Pca(_) => Ok(()),
            Self::FixedCorrelation(m1, m2) => {
                if !(m1.is_finite() && m2.is_finite()) || m1 * m1 + m2 * m2 > 1.0 + 1e-12 {
                    Err(Error::OutsideDisk { x1: m1, x2: m2 })
                } else {
                    Ok(())
                }
            }
            Self::Transfer(eta) if eta > 0.0 && eta <= 1.0 => Ok(()),
            Self::Transfer(eta) => Err(invalid("init", format!("transfer eta must lie in (0, 1], got {eta}"))),
        }
    }
}

impl fmt::Display for InitSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Random => write!(f, "random"),
            Self::Pca(n) => write!(f, "pca:{n}"),
            Self::FixedCorrelation(m1, m2) => write!(f, "fixed:{m1},{m2}"),
            Self::Transfer(eta) => write!(f, "transfer:{eta}"),
        }
    }
}

impl FromStr for InitSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let err = |reason: &str| Error::Parse {
            input: s.to_string(),
            reason: reason.to_string(),
        };
        let num = |t: &str| t.trim().parse::<f64>().map_err(|e| err(&e.to_string()));
        let t = s.trim();
        let spec = if t == "random" {
            Self::Random
        } else if let Some(rest) = t.strip_prefix("pca:") {
            Self::Pca(
                rest.trim()
                    .parse()
                    .map_err(|e: std::num::ParseIntError| err(&e.to_string()))?,
            )
        } else if let Some(rest) = t.strip_prefix("fixed:") {
            let (a, b) = rest.split_once(',').ok_or_else(|| err("expected fixed:<m1>,<m2>"))?;
            Self::FixedCorrelation(num(a)?, num(b)?)
        } else if let Some(rest) = t.strip_prefix("transfer:") {
            Self::Transfer(num(rest)?)
        } else {
            return Err(err("expected random, pca:<n>, fixed:<m1>,<m2> or transfer:<eta>"));
        };
        spec.validate()?;
        Ok(spec)
    }
}

impl Serialize for InitSpec {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for InitSpec {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Top eigenvector of a sample covariance.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PcaEstimate {
    pub v_hat: Vec<f64>,
    pub top_eigenvalue: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// `X0 ~ Uniform(S^{d-1})` as a normalized Gaussian vector.
pub fn random_sphere_init<R: Rng + ?Sized>(d: usize, rng: &mut R) -> Result<Vec<f64>> {
    if d < 2 {
        return Err(invalid("d", format!("dimension must be at least 2, got {d}")));
    }
    loop {
        let mut x = standard_normal_vec(d, rng);
        let n = norm(&x);
        if n > 0.0 {
            x.iter_mut().for_each(|v| *v /= n);
            return Ok(x);
        }
    }
}

/// Power iteration on `(1/n) sum a_i a_i^T` for `n` row-major samples of
/// length `d` in `data`. Each iteration costs `O(n d)`; the `d x d` matrix is
/// never formed. A non-converged estimate is still returned.
pub fn pca_top_eigenvector<R: Rng + ?Sized>(
    data: &[f64],
    d: usize,
    tol: f64,
    max_iters: usize,
    rng: &mut R,
) -> Result<PcaEstimate> {
    if d == 0 || !data.len().is_multiple_of(d) {
        return Err(invalid(
            "data",
            format!("length {} is not a multiple of d = {d}", data.len()),
        ));
    }
    let n = data.len() / d;
    if n < 2 {
        return Err(invalid("data", format!("need at least 2 samples, got {n}")));
    }
    if !(tol > 0.0) || max_iters == 0 {
        return Err(invalid("tol, max_iters", "must be positive"));
    }
    let apply = |v: &[f64], out: &mut [f64]| {
        out.iter_mut().for_each(|o| *o = 0.0);
        for row in data.chunks_exact(d) {
            let c = dot(row, v);
            for (o, r) in out.iter_mut().zip(row) {
                *o += c * r;
            }
        }
        let inv = 1.0 / n as f64;
        out.iter_mut().for_each(|o| *o *= inv);
    };

    let mut v = standard_normal_vec(d, rng);
    let n0 = norm(&v);
    v.iter_mut().for_each(|x| *x /= n0);
    let mut w = vec![0.0; d];
    let mut converged = false;
    let mut iterations = 0;
    while iterations < max_iters {
        iterations += 1;
        apply(&v, &mut w);
        let nw = norm(&w);
        if nw == 0.0 || !nw.is_finite() {
            return Err(Error::NonFinite {
                step: iterations,
                what: "power iteration collapsed".into(),
            });
        }
        w.iter_mut().for_each(|x| *x /= nw);
        let diff = v.iter().zip(&w).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        std::mem::swap(&mut v, &mut w);
        if diff < tol {
            converged = true;
            break;
        }
    }
    apply(&v, &mut w);
    let top_eigenvalue = dot(&v, &w);
    Ok(PcaEstimate {
        v_hat: v,
        top_eigenvalue,
        iterations,
        converged,
    })
}

/// Limiting `|v_hat . v|^2` for aspect ratio `gamma = d / n`:
/// `(1 - gamma/lambda^2) / (1 + gamma/lambda^2)` above `lambda = sqrt(gamma)`,
/// zero below.
pub fn bbp_limit_correlation(gamma: f64, lambda: f64) -> f64 {
    if lambda < gamma.sqrt() {
        return 0.0;
    }
    let r = gamma / (lambda * lambda);
    ((1.0 - r) / (1.0 + r)).clamp(0.0, 1.0)
}

/// Support edges `((1 - sqrt(gamma))^2, (1 + sqrt(gamma))^2)` of the
/// Marcenko-Pastur law.
pub fn marcenko_pastur_edges(gamma: f64) -> (f64, f64) {
    let s = gamma.sqrt();
    ((1.0 - s).powi(2), (1.0 + s).powi(2))
}

/// Sign choice for the PCA estimate, which is only defined up to `+-`.
#[derive(Debug, Clone, PartialEq, Default)]
pub enum PcaSign {
    /// Align with the true spike `v`.
    #[default]
    AlignSpike,
    /// Keep the sign with the lower empirical loss on `n_samples` fresh
    /// labeled samples.
    LabeledLoss { activation: Activation, n_samples: usize },
    /// Whatever power iteration returns.
    AsComputed,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InitOptions {
    pub pca_sign: PcaSign,
    pub pca_tol: f64,
    pub pca_max_iters: usize,
}

impl Default for InitOptions {
    fn default() -> Self {
        Self {
            pca_sign: PcaSign::AlignSpike,
            pca_tol: PCA_TOL,
            pca_max_iters: PCA_MAX_ITERS,
        }
    }
}

/// An initial iterate together with the PCA estimate it came from, if any.
#[derive(Debug, Clone, PartialEq)]
pub struct BuiltInit {
    pub x0: Vec<f64>,
    pub pca: Option<PcaEstimate>,
}

/// Unit vector orthogonal to every vector of `basis` (assumed orthonormal),
/// uniform on that subsphere.
fn uniform_orthogonal<R: Rng + ?Sized>(d: usize, basis: &[&[f64]], rng: &mut R) -> Vec<f64> {
    loop {
        let mut w = standard_normal_vec(d, rng);
        for b in basis {
            let c = dot(&w, b);
            w.iter_mut().zip(b.iter()).for_each(|(x, e)| *x -= c * e);
        }
        let n = norm(&w);
        if n > 1e-8 {
            w.iter_mut().for_each(|x| *x /= n);
            return w;
        }
    }
}

/// [`build_init_with`] under the default options.
pub fn build_init<R: Rng + ?Sized>(
    spec: &InitSpec,
    params: &ModelParams,
    frame: &Frame,
    rng: &mut R,
) -> Result<Vec<f64>> {
    Ok(build_init_with(spec, params, frame, &InitOptions::default(), rng)?.x0)
}

pub fn build_init_with<R: Rng + ?Sized>(
    spec: &InitSpec,
    params: &ModelParams,
    frame: &Frame,
    options: &InitOptions,
    rng: &mut R,
) -> Result<BuiltInit> {
    spec.validate()?;
    let d = params.d();
    if frame.e1.len() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: frame.e1.len(),
        });
    }
    match *spec {
        InitSpec::Random => Ok(BuiltInit {
            x0: random_sphere_init(d, rng)?,
            pca: None,
        }),
        InitSpec::Pca(n) => {
            let mut data = vec![0.0; n * d];
            for row in data.chunks_exact_mut(d) {
                params.sample_features_into(rng, row);
            }
            let est = pca_top_eigenvector(&data, d, options.pca_tol, options.pca_max_iters, rng)?;
            drop(data);
            let flip = match &options.pca_sign {
                PcaSign::AlignSpike => dot(&est.v_hat, params.spike()) < 0.0,
                PcaSign::AsComputed => false,
                PcaSign::LabeledLoss { activation, n_samples } => {
                    let (mut plus, mut minus) = (0.0, 0.0);
                    for _ in 0..*n_samples {
                        let s = params.sample(activation, rng);
                        let u = dot(&est.v_hat, &s.a);
                        plus += (activation.value(u) - s.y).powi(2);
                        minus += (activation.value(-u) - s.y).powi(2);
                    }
                    minus < plus
                }
            };
            let mut x0 = est.v_hat.clone();
            if flip {
                x0.iter_mut().for_each(|x| *x = -*x);
            }
            Ok(BuiltInit { x0, pca: Some(est) })
        }
        InitSpec::FixedCorrelation(m1, m2) => {
            let r = (1.0 - m1 * m1 - m2 * m2).max(0.0).sqrt();
            let w = uniform_orthogonal(d, &[&frame.e1, &frame.e2], rng);
            let x0 = (0..d).map(|i| m1 * frame.e1[i] + m2 * frame.e2[i] + r * w[i]).collect();
            Ok(BuiltInit { x0, pca: None })
        }
        InitSpec::Transfer(eta) => {
            let r = (1.0 - eta * eta).max(0.0).sqrt();
            let v0 = params.v0();
            let w = uniform_orthogonal(d, &[v0], rng);
            let x0 = (0..d).map(|i| eta * v0[i] + r * w[i]).collect();
            Ok(BuiltInit { x0, pca: None })
        }
    }
}
