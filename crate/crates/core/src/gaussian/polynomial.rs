use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Highest degree a [`Polynomial`] may carry.
pub const MAX_DEGREE: usize = 16;

/// A real univariate polynomial stored by ascending monomial degree.
///
/// Trailing zero coefficients are trimmed on construction, so the last stored
/// coefficient is nonzero unless the polynomial is identically zero (in which
/// case the coefficient list is empty).
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct Polynomial {
    coeffs: Vec<f64>,
}

impl Polynomial {
    pub fn new(coeffs: impl Into<Vec<f64>>) -> Result<Self> {
        let mut coeffs = coeffs.into();
        while coeffs.last() == Some(&0.0) {
            coeffs.pop();
        }
        if let Some(bad) = coeffs.iter().find(|c| !c.is_finite()) {
            return Err(Error::Parse {
                input: format!("{bad}"),
                reason: "polynomial coefficients must be finite".into(),
            });
        }
        if coeffs.len() > MAX_DEGREE + 1 {
            return Err(Error::DegreeOverflow {
                degree: coeffs.len() - 1,
                max: MAX_DEGREE,
            });
        }
        Ok(Self { coeffs })
    }

    pub fn zero() -> Self {
        Self { coeffs: Vec::new() }
    }

    pub fn constant(c: f64) -> Self {
        Self::new(vec![c]).expect("constant polynomial")
    }

    /// The monomial `x`.
    pub fn identity() -> Self {
        Self { coeffs: vec![0.0, 1.0] }
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coeffs
    }

    /// Coefficient of `x^k` (zero beyond the stored degree).
    pub fn coefficient(&self, k: usize) -> f64 {
        self.coeffs.get(k).copied().unwrap_or(0.0)
    }

    /// Degree, or `None` for the zero polynomial.
    pub fn degree(&self) -> Option<usize> {
        self.coeffs.len().checked_sub(1)
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.is_empty()
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.coeffs.iter().rev().fold(0.0, |acc, &c| acc * x + c)
    }

    pub fn derivative(&self) -> Self {
        let coeffs = self
            .coeffs
            .iter()
            .enumerate()
            .skip(1)
            .map(|(k, &c)| k as f64 * c)
            .collect::<Vec<_>>();
        Self::new(coeffs).expect("derivative lowers degree")
    }

    pub fn add(&self, other: &Self) -> Self {
        let n = self.coeffs.len().max(other.coeffs.len());
        let coeffs = (0..n)
            .map(|k| self.coefficient(k) + other.coefficient(k))
            .collect::<Vec<_>>();
        Self::new(coeffs).expect("sum keeps degree")
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.add(&other.scale(-1.0))
    }

    pub fn scale(&self, s: f64) -> Self {
        Self::new(self.coeffs.iter().map(|c| c * s).collect::<Vec<_>>()).expect("scaling")
    }

    /// Product, failing if the result would exceed [`MAX_DEGREE`].
    pub fn mul(&self, other: &Self) -> Result<Self> {
        if self.is_zero() || other.is_zero() {
            return Ok(Self::zero());
        }
        let mut out = vec![0.0; self.coeffs.len() + other.coeffs.len() - 1];
        for (i, a) in self.coeffs.iter().enumerate() {
            for (j, b) in other.coeffs.iter().enumerate() {
                out[i + j] += a * b;
            }
        }
        Self::new(out)
    }

    /// `x * self`.
    pub fn shift(&self) -> Result<Self> {
        if self.is_zero() {
            return Ok(Self::zero());
        }
        let mut coeffs = Vec::with_capacity(self.coeffs.len() + 1);
        coeffs.push(0.0);
        coeffs.extend_from_slice(&self.coeffs);
        Self::new(coeffs)
    }

    /// Expectation `E[p(g)]` for `g ~ N(0, 1)`.
    pub fn gaussian_expectation(&self) -> f64 {
        self.coeffs
            .iter()
            .enumerate()
            .map(|(k, c)| c * super::gaussian_moment(k))
            .sum()
    }
}

impl TryFrom<Vec<f64>> for Polynomial {
    type Error = Error;

    fn try_from(value: Vec<f64>) -> Result<Self> {
        Self::new(value)
    }
}

impl From<Polynomial> for Vec<f64> {
    fn from(p: Polynomial) -> Self {
        p.coeffs
    }
}

impl fmt::Display for Polynomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_zero() {
            return write!(f, "0");
        }
        let mut first = true;
        for (k, &c) in self.coeffs.iter().enumerate().rev() {
            if c == 0.0 {
                continue;
            }
            if first {
                if c < 0.0 {
                    write!(f, "-")?;
                }
            } else {
                write!(f, " {} ", if c < 0.0 { '-' } else { '+' })?;
            }
            first = false;
            let a = c.abs();
            match k {
                0 => write!(f, "{a}")?,
                1 if a == 1.0 => write!(f, "x")?,
                1 => write!(f, "{a}x")?,
                _ if a == 1.0 => write!(f, "x^{k}")?,
                _ => write!(f, "{a}x^{k}")?,
            }
        }
        Ok(())
    }
}
