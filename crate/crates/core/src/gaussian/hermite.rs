//! Probabilists' Hermite polynomials and Hermite expansions of polynomials.

use std::collections::BTreeMap;

use serde::Serialize;

use super::polynomial::{Polynomial, MAX_DEGREE};
use super::{gaussian_moment, EXACT_ZERO_TOL};
use crate::error::{Error, Result};

/// The probabilists' Hermite polynomial `h_k`, built with
/// `h_{k+1}(x) = x h_k(x) - k h_{k-1}(x)`.
pub fn hermite_poly(k: usize) -> Result<Polynomial> {
    if k > MAX_DEGREE {
        return Err(Error::DegreeOverflow {
            degree: k,
            max: MAX_DEGREE,
        });
    }
    let mut prev = Polynomial::constant(1.0);
    if k == 0 {
        return Ok(prev);
    }
    let mut cur = Polynomial::identity();
    for n in 1..k {
        let next = cur.shift()?.sub(&prev.scale(n as f64));
        prev = cur;
        cur = next;
    }
    Ok(cur)
}

/// Coefficients `c_k` with `f = sum_k c_k h_k`, i.e. `c_k = E[f(g) h_k(g)] / k!`.
#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct HermiteExpansion {
    coeffs: BTreeMap<usize, f64>,
}

impl HermiteExpansion {
    pub fn coefficient(&self, k: usize) -> f64 {
        self.coeffs.get(&k).copied().unwrap_or(0.0)
    }

    /// Nonzero coefficients by ascending degree.
    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.coeffs.iter().map(|(&k, &c)| (k, c))
    }

    pub fn to_polynomial(&self) -> Polynomial {
        self.coeffs.iter().fold(Polynomial::zero(), |acc, (&k, &c)| {
            acc.add(&hermite_poly(k).expect("degree bounded").scale(c))
        })
    }
}

/// Exact change of basis from monomials to Hermite polynomials.
///
/// Peels off the leading term against `h_deg` (which is monic) until nothing
/// is left; the system is triangular so no linear solve is needed.
pub fn hermite_coefficients(f: &Polynomial) -> HermiteExpansion {
    let mut rest = f.clone();
    let mut coeffs = BTreeMap::new();
    while let Some(deg) = rest.degree() {
        let lead = rest.coefficient(deg);
        coeffs.insert(deg, lead);
        let h = hermite_poly(deg).expect("degree bounded by polynomial");
        let mut next = rest.sub(&h.scale(lead)).coefficients().to_vec();
        // the leading monomial cancels exactly in exact arithmetic
        next.truncate(deg);
        rest = Polynomial::new(next).expect("degree shrinks");
    }
    coeffs.retain(|_, c| *c != 0.0);
    HermiteExpansion { coeffs }
}

/// `E[p(g) q(g)]` without forming the product polynomial, which may exceed
/// [`MAX_DEGREE`].
pub fn product_expectation(p: &Polynomial, q: &Polynomial) -> f64 {
    let mut total = 0.0;
    for (i, a) in p.coefficients().iter().enumerate() {
        for (j, b) in q.coefficients().iter().enumerate() {
            total += a * b * gaussian_moment(i + j);
        }
    }
    total
}

/// Moment conditions on an activation required by the random-initialization
/// and trapping results: `E f'(g) = E f''(g) = 0` and `E (f^2)''(g) > 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MomentReport {
    pub mean_first_derivative: f64,
    pub mean_second_derivative: f64,
    pub mean_second_derivative_of_square: f64,
    pub passes: bool,
}

pub fn check_moment_conditions(f: &Polynomial) -> MomentReport {
    let df = f.derivative();
    let d2f = df.derivative();
    let mean_first_derivative = df.gaussian_expectation();
    let mean_second_derivative = d2f.gaussian_expectation();
    // (f^2)'' = 2 f'^2 + 2 f f''
    let mean_second_derivative_of_square = 2.0 * product_expectation(&df, &df) + 2.0 * product_expectation(f, &d2f);
    let passes = mean_first_derivative.abs() <= EXACT_ZERO_TOL
        && mean_second_derivative.abs() <= EXACT_ZERO_TOL
        && mean_second_derivative_of_square > EXACT_ZERO_TOL;
    MomentReport {
        mean_first_derivative,
        mean_second_derivative,
        mean_second_derivative_of_square,
        passes,
    }
}

/// Lowest degree `k >= 1` carrying a nonzero Hermite coefficient.
pub fn information_exponent(f: &Polynomial) -> Option<usize> {
    hermite_coefficients(f)
        .iter()
        .find(|&(k, c)| k >= 1 && c.abs() > EXACT_ZERO_TOL)
        .map(|(k, _)| k)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn poly(c: &[f64]) -> Polynomial {
        Polynomial::new(c.to_vec()).unwrap()
    }

    #[test]
    fn low_order_hermite() {
        assert_eq!(hermite_poly(0).unwrap().coefficients(), &[1.0]);
        assert_eq!(hermite_poly(1).unwrap().coefficients(), &[0.0, 1.0]);
        assert_eq!(hermite_poly(3).unwrap().coefficients(), &[0.0, -3.0, 0.0, 1.0]);
        assert_eq!(hermite_poly(4).unwrap().coefficients(), &[3.0, 0.0, -6.0, 0.0, 1.0]);
        assert!(matches!(
            hermite_poly(17),
            Err(Error::DegreeOverflow { degree: 17, .. })
        ));
    }

    #[test]
    fn derivative_identity() {
        for n in 1..=10 {
            let lhs = hermite_poly(n).unwrap().derivative();
            let rhs = hermite_poly(n - 1).unwrap().scale(n as f64);
            assert_eq!(lhs, rhs, "h_{n}' != {n} h_{}", n - 1);
        }
    }

    #[test]
    fn expansions() {
        let e = hermite_coefficients(&hermite_poly(3).unwrap());
        assert_eq!(e.iter().collect::<Vec<_>>(), vec![(3, 1.0)]);

        let e = hermite_coefficients(&poly(&[0.0, 0.0, 0.0, 1.0]));
        assert_eq!(e.iter().collect::<Vec<_>>(), vec![(1, 3.0), (3, 1.0)]);

        let e = hermite_coefficients(&poly(&[0.0, 0.0, 1.0]));
        assert_eq!(e.iter().collect::<Vec<_>>(), vec![(0, 1.0), (2, 1.0)]);

        assert!(hermite_coefficients(&Polynomial::zero()).iter().next().is_none());
    }

    #[test]
    fn moment_conditions() {
        let r = check_moment_conditions(&hermite_poly(3).unwrap());
        assert_eq!(r.mean_first_derivative, 0.0);
        assert_eq!(r.mean_second_derivative, 0.0);
        assert!((r.mean_second_derivative_of_square - 36.0).abs() < 1e-12);
        assert!(r.passes);

        let r = check_moment_conditions(&hermite_poly(2).unwrap());
        assert_eq!(r.mean_second_derivative, 2.0);
        assert!(!r.passes);

        let r = check_moment_conditions(&hermite_poly(4).unwrap());
        assert!(r.passes);
        assert!(r.mean_second_derivative_of_square > 0.0);
    }

    #[test]
    fn exponents() {
        assert_eq!(information_exponent(&hermite_poly(3).unwrap()), Some(3));
        assert_eq!(information_exponent(&Polynomial::identity()), Some(1));
        assert_eq!(information_exponent(&poly(&[0.0, 0.0, 1.0])), Some(2));
        assert_eq!(information_exponent(&Polynomial::constant(2.0)), None);
    }
}
