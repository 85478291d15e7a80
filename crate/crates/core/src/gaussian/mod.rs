//! Gaussian expectation engines: polynomial algebra, the Hermite basis,
//! exact Isserlis moments and Gauss-Hermite quadrature.
//!
//! All routines are pure functions of their inputs.

mod hermite;
mod moments;
mod polynomial;
mod quadrature;

pub use hermite::{
    check_moment_conditions, hermite_coefficients, hermite_poly, information_exponent, product_expectation,
    HermiteExpansion, MomentReport,
};
pub use moments::{
    gaussian_moment, pairing_count, wick_expectation, Coord, GaussianPair, TrivariatePolynomial, MAX_WICK_DEGREE,
};
pub use polynomial::{Polynomial, MAX_DEGREE};
pub use quadrature::{gh_quadrature_expectation, QuadratureGrid, MAX_NODES};

/// Threshold below which a moment counts as exactly zero.
pub const EXACT_ZERO_TOL: f64 = 1e-10;
