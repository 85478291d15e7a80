//! Exact Gaussian moments via Isserlis (Wick) pair counting.

use std::collections::BTreeMap;

use serde::Serialize;

use super::polynomial::{Polynomial, MAX_DEGREE};
use crate::error::{Error, Result};

/// Largest total degree accepted by [`wick_expectation`].
pub const MAX_WICK_DEGREE: usize = 2 * MAX_DEGREE;

/// `(n - 1)!!` for even `n`, with `(-1)!! = 1`.
fn odd_double_factorial(n: usize) -> f64 {
    debug_assert!(n.is_multiple_of(2));
    (1..n).step_by(2).map(|k| k as f64).product()
}

/// `E[g^n]` for a standard Gaussian: zero for odd `n`, `(n-1)!!` otherwise.
pub fn gaussian_moment(n: usize) -> f64 {
    if n % 2 == 1 {
        0.0
    } else {
        odd_double_factorial(n)
    }
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

fn factorial(n: usize) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

/// Number of perfect matchings of `i` copies of one variable and `j` copies of
/// another that use exactly `p` cross pairs. Zero unless `i - p` and `j - p`
/// are both even.
pub fn pairing_count(i: usize, j: usize, p: usize) -> f64 {
    if p > i || p > j || (i - p) % 2 == 1 || (j - p) % 2 == 1 {
        return 0.0;
    }
    binomial(i, p) * binomial(j, p) * factorial(p) * odd_double_factorial(i - p) * odd_double_factorial(j - p)
}

/// Covariance of a centred Gaussian pair `(a1, a2)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GaussianPair {
    cov: [[f64; 2]; 2],
}

impl GaussianPair {
    /// Validates symmetry and positive semi-definiteness (eigenvalues >= -1e-12).
    pub fn new(cov: [[f64; 2]; 2]) -> Result<Self> {
        let scale = 1.0 + cov[0][1].abs().max(cov[1][0].abs());
        if (cov[0][1] - cov[1][0]).abs() > 1e-12 * scale {
            return Err(Error::AsymmetricCovariance(cov[0][1], cov[1][0]));
        }
        if cov.iter().flatten().any(|x| !x.is_finite()) {
            return Err(Error::IndefiniteCovariance {
                min_eigenvalue: f64::NAN,
            });
        }
        let pair = Self { cov };
        let (lo, _) = pair.eigenvalues();
        if lo < -1e-12 {
            return Err(Error::IndefiniteCovariance { min_eigenvalue: lo });
        }
        Ok(pair)
    }

    pub fn identity() -> Self {
        Self {
            cov: [[1.0, 0.0], [0.0, 1.0]],
        }
    }

    /// Law of `(a . e1, a . e2)` for `a ~ N(0, I + lambda v v^T)` with
    /// `v = eta1 e1 + eta2 e2`, `eta2 = sqrt(1 - eta1^2)`.
    pub fn spiked(lambda: f64, eta1: f64) -> Result<Self> {
        let eta2 = (1.0 - eta1 * eta1).max(0.0).sqrt();
        let off = lambda * eta1 * eta2;
        Self::new([[1.0 + lambda * eta1 * eta1, off], [off, 1.0 + lambda * eta2 * eta2]])
    }

    pub fn var1(&self) -> f64 {
        self.cov[0][0]
    }

    pub fn var2(&self) -> f64 {
        self.cov[1][1]
    }

    pub fn cov12(&self) -> f64 {
        self.cov[0][1]
    }

    pub fn matrix(&self) -> [[f64; 2]; 2] {
        self.cov
    }

    /// Eigenvalues in ascending order.
    pub fn eigenvalues(&self) -> (f64, f64) {
        let (a, b, c) = (self.var1(), self.cov12(), self.var2());
        let mid = 0.5 * (a + c);
        let rad = (0.25 * (a - c) * (a - c) + b * b).sqrt();
        (mid - rad, mid + rad)
    }

    /// Symmetric square root `S` with `S S^T = cov`. Negative round-off
    /// eigenvalues are clipped to zero.
    pub fn sqrt_factor(&self) -> [[f64; 2]; 2] {
        let (a, b, c) = (self.var1(), self.cov12(), self.var2());
        let (lo, hi) = self.eigenvalues();
        let (slo, shi) = (lo.max(0.0).sqrt(), hi.max(0.0).sqrt());
        // eigenvector for `hi`
        let (ux, uy) = if b.abs() > 0.0 {
            let (x, y) = (hi - c, b);
            let n = x.hypot(y);
            (x / n, y / n)
        } else if a >= c {
            (1.0, 0.0)
        } else {
            (0.0, 1.0)
        };
        // S = shi u u^T + slo w w^T with w = (-uy, ux)
        [
            [shi * ux * ux + slo * uy * uy, (shi - slo) * ux * uy],
            [(shi - slo) * ux * uy, shi * uy * uy + slo * ux * ux],
        ]
    }

    /// `E[a1^i a2^j]` by Isserlis pair counting.
    pub fn moment(&self, i: usize, j: usize) -> f64 {
        let (s11, s12, s22) = (self.var1(), self.cov12(), self.var2());
        (0..=i.min(j))
            .filter(|p| (i - p).is_multiple_of(2) && (j - p).is_multiple_of(2))
            .map(|p| {
                pairing_count(i, j, p)
                    * s11.powi(((i - p) / 2) as i32)
                    * s22.powi(((j - p) / 2) as i32)
                    * s12.powi(p as i32)
            })
            .sum()
    }
}

/// A real polynomial in the three jointly Gaussian coordinates `(a1, a2, g)`,
/// keyed by the exponent triple.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrivariatePolynomial {
    terms: BTreeMap<[u32; 3], f64>,
}

/// Coordinates of a [`TrivariatePolynomial`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Coord {
    A1,
    A2,
    G,
}

impl TrivariatePolynomial {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn constant(c: f64) -> Self {
        let mut p = Self::zero();
        p.add_term([0, 0, 0], c);
        p
    }

    pub fn variable(v: Coord) -> Self {
        let e = match v {
            Coord::A1 => [1, 0, 0],
            Coord::A2 => [0, 1, 0],
            Coord::G => [0, 0, 1],
        };
        let mut p = Self::zero();
        p.add_term(e, 1.0);
        p
    }

    /// Monomial `c * a1^i a2^j g^k`.
    pub fn monomial(c: f64, exps: [u32; 3]) -> Self {
        let mut p = Self::zero();
        p.add_term(exps, c);
        p
    }

    /// `f(w1 a1 + w2 a2 + w3 g)` for a univariate `f`.
    pub fn compose_linear(f: &Polynomial, w: [f64; 3]) -> Result<Self> {
        let lin = Self::monomial(w[0], [1, 0, 0])
            .add(&Self::monomial(w[1], [0, 1, 0]))
            .add(&Self::monomial(w[2], [0, 0, 1]));
        let mut out = Self::zero();
        let mut power = Self::constant(1.0);
        for (k, &c) in f.coefficients().iter().enumerate() {
            if k > 0 {
                power = power.mul(&lin)?;
            }
            out = out.add(&power.scale(c));
        }
        Ok(out)
    }

    fn add_term(&mut self, e: [u32; 3], c: f64) {
        if c == 0.0 {
            return;
        }
        let slot = self.terms.entry(e).or_insert(0.0);
        *slot += c;
        if *slot == 0.0 {
            self.terms.remove(&e);
        }
    }

    pub fn terms(&self) -> impl Iterator<Item = ([u32; 3], f64)> + '_ {
        self.terms.iter().map(|(&e, &c)| (e, c))
    }

    pub fn degree(&self) -> usize {
        self.terms
            .keys()
            .map(|e| (e[0] + e[1] + e[2]) as usize)
            .max()
            .unwrap_or(0)
    }

    pub fn add(&self, other: &Self) -> Self {
        let mut out = self.clone();
        for (e, c) in other.terms() {
            out.add_term(e, c);
        }
        out
    }

    pub fn scale(&self, s: f64) -> Self {
        let mut out = Self::zero();
        for (e, c) in self.terms() {
            out.add_term(e, c * s);
        }
        out
    }

    pub fn mul(&self, other: &Self) -> Result<Self> {
        let degree = self.degree() + other.degree();
        if !self.terms.is_empty() && !other.terms.is_empty() && degree > MAX_WICK_DEGREE {
            return Err(Error::DegreeOverflow {
                degree,
                max: MAX_WICK_DEGREE,
            });
        }
        let mut out = Self::zero();
        for (e1, c1) in self.terms() {
            for (e2, c2) in other.terms() {
                out.add_term([e1[0] + e2[0], e1[1] + e2[1], e1[2] + e2[2]], c1 * c2);
            }
        }
        Ok(out)
    }

    pub fn eval(&self, a1: f64, a2: f64, g: f64) -> f64 {
        self.terms()
            .map(|(e, c)| c * a1.powi(e[0] as i32) * a2.powi(e[1] as i32) * g.powi(e[2] as i32))
            .sum()
    }
}

/// Exact `E[p(a1, a2, g)]` where `(a1, a2)` has covariance `pair` and `g` is an
/// independent standard Gaussian.
pub fn wick_expectation(p: &TrivariatePolynomial, pair: &GaussianPair) -> Result<f64> {
    let degree = p.degree();
    if degree > MAX_WICK_DEGREE {
        return Err(Error::DegreeOverflow {
            degree,
            max: MAX_WICK_DEGREE,
        });
    }
    Ok(p.terms()
        .map(|(e, c)| c * pair.moment(e[0] as usize, e[1] as usize) * gaussian_moment(e[2] as usize))
        .sum())
}
