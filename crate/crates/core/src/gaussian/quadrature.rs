//! Gauss-Hermite quadrature against the standard Gaussian measure. Serves as
//! the independent numerical route next to the exact pair-counting engine,
//! and as the only route for non-polynomial integrands.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::Serialize;

use super::moments::GaussianPair;
use crate::error::{invalid, Result};

/// Largest supported rule.
pub const MAX_NODES: usize = 100;

/// Nodes and weights of an `n`-point rule for `E[h(g)]`, `g ~ N(0, 1)`.
/// Exact for polynomials of degree `<= 2n - 1`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QuadratureGrid {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

/// Orthonormal Hermite values `psi_{n-1}(x), psi_n(x)` with
/// `psi_k = He_k / sqrt(k!)`.
fn orthonormal_pair(n: usize, x: f64) -> (f64, f64) {
    let mut prev = 0.0;
    let mut cur = 1.0;
    for k in 0..n {
        let next = (x * cur - (k as f64).sqrt() * prev) / ((k + 1) as f64).sqrt();
        prev = cur;
        cur = next;
    }
    (prev, cur)
}

impl QuadratureGrid {
    /// Golub-Welsch eigenvalues of the Jacobi matrix, polished by Newton steps
    /// on the three-term recurrence.
    pub fn gauss_hermite(nodes_per_dim: usize) -> Result<Self> {
        if nodes_per_dim == 0 || nodes_per_dim > MAX_NODES {
            return Err(invalid(
                "nodes_per_dim",
                format!("must lie in 1..={MAX_NODES}, got {nodes_per_dim}"),
            ));
        }
        let n = nodes_per_dim;
        let jacobi = DMatrix::from_fn(n, n, |i, j| {
            if i + 1 == j || j + 1 == i {
                (i.max(j) as f64).sqrt()
            } else {
                0.0
            }
        });
        let mut nodes: Vec<f64> = SymmetricEigen::new(jacobi).eigenvalues.iter().copied().collect();
        nodes.sort_by(f64::total_cmp);

        for x in nodes.iter_mut() {
            for _ in 0..8 {
                let (pm1, p) = orthonormal_pair(n, *x);
                let step = p / ((n as f64).sqrt() * pm1);
                *x -= step;
                if step.abs() <= 1e-15 * (1.0 + x.abs()) {
                    break;
                }
            }
        }
        // symmetry of the rule
        for i in 0..n / 2 {
            let m = 0.5 * (nodes[n - 1 - i] - nodes[i]);
            nodes[i] = -m;
            nodes[n - 1 - i] = m;
        }
        if n % 2 == 1 {
            nodes[n / 2] = 0.0;
        }

        let mut weights: Vec<f64> = nodes
            .iter()
            .map(|&x| {
                let (pm1, _) = orthonormal_pair(n, x);
                1.0 / (n as f64 * pm1 * pm1)
            })
            .collect();
        for i in 0..n / 2 {
            let w = 0.5 * (weights[i] + weights[n - 1 - i]);
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        let total: f64 = weights.iter().sum();
        weights.iter_mut().for_each(|w| *w /= total);
        Ok(Self { nodes, weights })
    }

    pub fn nodes_per_dim(&self) -> usize {
        self.nodes.len()
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// `E[h(g)]` for a standard Gaussian `g`. Mirrored nodes are summed in
    /// pairs, so odd integrands cancel exactly.
    pub fn expect(&self, h: impl Fn(f64) -> f64) -> f64 {
        let n = self.nodes.len();
        let mut total = 0.0;
        for i in 0..n / 2 {
            let j = n - 1 - i;
            total += self.weights[i] * (h(self.nodes[i]) + h(self.nodes[j]));
        }
        if n % 2 == 1 {
            total += self.weights[n / 2] * h(self.nodes[n / 2]);
        }
        total
    }
}

/// Tensor-product estimate of `E[h(a1, a2, g)]` where `(a1, a2)` has
/// covariance `pair` and `g` is an independent standard Gaussian. The pair is
/// whitened with its symmetric square root.
pub fn gh_quadrature_expectation(
    h: impl Fn(f64, f64, f64) -> f64,
    pair: &GaussianPair,
    grid: &QuadratureGrid,
) -> Result<f64> {
    let s = pair.sqrt_factor();
    let (x, w) = (grid.nodes(), grid.weights());
    let mut total = 0.0;
    for (i, &z1) in x.iter().enumerate() {
        for (j, &z2) in x.iter().enumerate() {
            let a1 = s[0][0] * z1 + s[0][1] * z2;
            let a2 = s[1][0] * z1 + s[1][1] * z2;
            let wij = w[i] * w[j];
            let inner: f64 = x.iter().zip(w).map(|(&g, &wk)| wk * h(a1, a2, g)).sum();
            total += wij * inner;
        }
    }
    Ok(total)
}
