//! Population loss `phi(x1, x2)` and its exact two-dimensional dynamics.
//!
//! For a state `(x1, x2)` the pre-activation `u = x1 a1 + x2 a2 + s g`, with
//! `s = sqrt(1 - x1^2 - x2^2)`, and the target pre-activation `w = a1` form a
//! centred Gaussian pair with
//!
//! ```text
//! var(u) = q(x) = x^T S x + 1 - |x|^2,   cov(u, w) = c(x) = S_11 x1 + S_12 x2,
//! ```
//!
//! where `S` is the covariance of `(a1, a2)`. For polynomial activations
//! `phi = E f(u)^2 - 2 E f(u) f(w) + E f(w)^2` is therefore an exact polynomial
//! in `(q, c)` obtained by Isserlis pair counting, and the gradient follows by
//! the chain rule. Both `q` and `c` are smooth up to the unit circle.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::gaussian::{
    gaussian_moment, gh_quadrature_expectation, hermite_coefficients, pairing_count, wick_expectation, Coord,
    GaussianPair, QuadratureGrid, TrivariatePolynomial,
};
use crate::model::{Activation, CorrelationState, ModelParams, UNIT_TOL};
use crate::trajectory::Trajectory;

/// Strict margin used by [`PopulationField::check_assumption_b`].
pub const CERTIFY_TOL: f64 = 1e-9;

/// Nodes per dimension for non-polynomial activations.
const QUADRATURE_NODES: usize = 40;

/// `phi` as a polynomial in `(q, c)`: `sum coef q^i c^j + constant`.
#[derive(Debug, Clone)]
struct LossPolynomial {
    terms: Vec<(i32, i32, f64)>,
    constant: f64,
}

impl LossPolynomial {
    fn build(f: &[f64], s11: f64, noise_var: f64) -> Self {
        let mut acc: BTreeMap<(i32, i32), f64> = BTreeMap::new();
        let mut constant = noise_var;
        for (i, &fi) in f.iter().enumerate() {
            for (j, &fj) in f.iter().enumerate() {
                let w = fi * fj;
                if w == 0.0 {
                    continue;
                }
                if (i + j) % 2 == 0 {
                    // E f(u)^2 and E f(w)^2
                    let m = gaussian_moment(i + j);
                    *acc.entry((((i + j) / 2) as i32, 0)).or_insert(0.0) += w * m;
                    constant += w * m * s11.powi(((i + j) / 2) as i32);
                }
                // -2 E f(u) f(w), u^i against w^j
                for p in 0..=i.min(j) {
                    let count = pairing_count(i, j, p);
                    if count == 0.0 {
                        continue;
                    }
                    let coef = -2.0 * w * count * s11.powi(((j - p) / 2) as i32);
                    *acc.entry((((i - p) / 2) as i32, p as i32)).or_insert(0.0) += coef;
                }
            }
        }
        let terms = acc
            .into_iter()
            .filter(|(_, c)| *c != 0.0)
            .map(|((a, b), c)| (a, b, c))
            .collect();
        Self { terms, constant }
    }

    /// `(phi, d phi / dq, d phi / dc)`.
    #[inline]
    fn eval(&self, q: f64, c: f64) -> (f64, f64, f64) {
        let (mut v, mut dq, mut dc) = (self.constant, 0.0, 0.0);
        for &(a, b, coef) in &self.terms {
            let qa = q.powi(a);
            let cb = c.powi(b);
            v += coef * qa * cb;
            if a > 0 {
                dq += coef * a as f64 * q.powi(a - 1) * cb;
            }
            if b > 0 {
                dc += coef * b as f64 * qa * c.powi(b - 1);
            }
        }
        (v, dq, dc)
    }
}

/// Population objective for one activation and one spike geometry.
#[derive(Debug, Clone)]
pub struct PopulationField {
    activation: Activation,
    pair: GaussianPair,
    lambda: f64,
    eta1: f64,
    eta2: f64,
    noise_var: f64,
    closed_form: Option<LossPolynomial>,
    grid: Option<QuadratureGrid>,
    linear_constant: f64,
}

impl PopulationField {
    pub fn new(activation: Activation, lambda: f64, eta1: f64, noise_var: f64) -> Result<Self> {
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(invalid("lambda", format!("must be finite and >= 0, got {lambda}")));
        }
        if !(0.0..=1.0).contains(&eta1) {
            return Err(invalid("eta1", format!("must lie in [0, 1], got {eta1}")));
        }
        if !(noise_var >= 0.0 && noise_var.is_finite()) {
            return Err(invalid(
                "noise_var",
                format!("must be finite and >= 0, got {noise_var}"),
            ));
        }
        let pair = GaussianPair::spiked(lambda, eta1)?;
        let eta2 = (1.0 - eta1 * eta1).max(0.0).sqrt();
        let (closed_form, grid, linear_constant) = match activation.as_polynomial() {
            Some(f) => {
                let lf = LossPolynomial::build(f.coefficients(), pair.var1(), noise_var);
                let on_g = |p| TrivariatePolynomial::compose_linear(p, [0.0, 0.0, 1.0]);
                let integrand = TrivariatePolynomial::variable(Coord::G)
                    .mul(&on_g(f)?)?
                    .mul(&on_g(&f.derivative())?)?;
                let c = wick_expectation(&integrand, &GaussianPair::identity())?;
                (Some(lf), None, c)
            }
            None => {
                let grid = QuadratureGrid::gauss_hermite(QUADRATURE_NODES)?;
                let c = grid.expect(|g| g * activation.value(g) * activation.derivative(g));
                (None, Some(grid), c)
            }
        };
        Ok(Self {
            activation,
            pair,
            lambda,
            eta1,
            eta2,
            noise_var,
            closed_form,
            grid,
            linear_constant,
        })
    }

    pub fn from_params(params: &ModelParams, activation: Activation) -> Result<Self> {
        Self::new(
            activation,
            params.lambda(),
            params.eta1(),
            params.noise_std() * params.noise_std(),
        )
    }

    pub fn activation(&self) -> &Activation {
        &self.activation
    }

    pub fn pair(&self) -> &GaussianPair {
        &self.pair
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn eta1(&self) -> f64 {
        self.eta1
    }

    pub fn eta2(&self) -> f64 {
        self.eta2
    }

    pub fn noise_var(&self) -> f64 {
        self.noise_var
    }

    /// The constant `E[g f(g) f'(g)]` of the linearized dynamics.
    pub fn linear_constant(&self) -> f64 {
        self.linear_constant
    }

    fn check_disk(state: CorrelationState) -> Result<()> {
        if !(state.m1.is_finite() && state.m2.is_finite()) || state.norm_sq() > 1.0 + UNIT_TOL {
            return Err(Error::OutsideDisk {
                x1: state.m1,
                x2: state.m2,
            });
        }
        Ok(())
    }

    #[inline]
    fn q_and_c(&self, x1: f64, x2: f64) -> (f64, f64) {
        let (s11, s12, s22) = (self.pair.var1(), self.pair.cov12(), self.pair.var2());
        let q = 1.0 + (s11 - 1.0) * x1 * x1 + 2.0 * s12 * x1 * x2 + (s22 - 1.0) * x2 * x2;
        (q, s11 * x1 + s12 * x2)
    }

    fn quadrature(&self, h: impl Fn(f64, f64, f64) -> f64) -> f64 {
        let grid = self.grid.as_ref().expect("non-polynomial fields carry a grid");
        gh_quadrature_expectation(h, &self.pair, grid).expect("validated pair")
    }

    /// Loss and partials `(d phi/dx1, d phi/dx2)`, valid on the closed disk.
    fn loss_and_partials(&self, x1: f64, x2: f64) -> (f64, [f64; 2]) {
        match &self.closed_form {
            Some(lf) => {
                let (q, c) = self.q_and_c(x1, x2);
                let (v, dq, dc) = lf.eval(q, c);
                let (s11, s12, s22) = (self.pair.var1(), self.pair.cov12(), self.pair.var2());
                let dq1 = 2.0 * (s11 - 1.0) * x1 + 2.0 * s12 * x2;
                let dq2 = 2.0 * s12 * x1 + 2.0 * (s22 - 1.0) * x2;
                (v, [dq * dq1 + dc * s11, dq * dq2 + dc * s12])
            }
            None => {
                let f = &self.activation;
                let s = (1.0 - x1 * x1 - x2 * x2).max(0.0).sqrt();
                let v = self.quadrature(|a1, a2, g| {
                    let r = f.value(x1 * a1 + x2 * a2 + s * g) - f.value(a1);
                    r * r
                }) + self.noise_var;
                // Stein's lemma on g removes the 1/s singularity
                let first = |sel: usize| {
                    self.quadrature(|a1, a2, g| {
                        let u = x1 * a1 + x2 * a2 + s * g;
                        let r = f.value(u) - f.value(a1);
                        let ai = if sel == 0 { a1 } else { a2 };
                        2.0 * r * f.derivative(u) * ai
                    })
                };
                let curvature = self.quadrature(|a1, a2, g| {
                    let u = x1 * a1 + x2 * a2 + s * g;
                    let r = f.value(u) - f.value(a1);
                    2.0 * (f.derivative(u).powi(2) + r * f.second_derivative(u))
                });
                (v, [first(0) - x1 * curvature, first(1) - x2 * curvature])
            }
        }
    }

    /// `phi(x1, x2) = E[f(a1 x1 + a2 x2 + sqrt(1 - |x|^2) g) - f(a1)]^2 + noise_var`.
    pub fn loss(&self, state: CorrelationState) -> Result<f64> {
        Self::check_disk(state)?;
        Ok(self.loss_and_partials(state.m1, state.m2).0)
    }

    /// `(d phi / dx1, d phi / dx2)` on the open disk.
    pub fn gradient(&self, state: CorrelationState) -> Result<[f64; 2]> {
        Self::check_disk(state)?;
        if 1.0 - state.norm_sq() <= 0.0 {
            return Err(Error::OnBoundary {
                x1: state.m1,
                x2: state.m2,
            });
        }
        Ok(self.loss_and_partials(state.m1, state.m2).1)
    }

    /// First-order part of the gradient at the origin for activations with
    /// `E f' = E f'' = 0`:
    /// `2 lambda c (eta1^2 x1 + eta1 eta2 x2, eta2^2 x2 + eta1 eta2 x1)`.
    pub fn linearized_field(&self, state: CorrelationState) -> [f64; 2] {
        let k = 2.0 * self.lambda * self.linear_constant;
        let (e1, e2) = (self.eta1, self.eta2);
        let (x1, x2) = (state.m1, state.m2);
        [k * (e1 * e1 * x1 + e1 * e2 * x2), k * (e2 * e2 * x2 + e1 * e2 * x1)]
    }

    /// Spherical population gradient in frame coordinates, with the squared
    /// norm of the full d-dimensional spherical gradient.
    fn spherical_components(&self, x1: f64, x2: f64) -> ([f64; 2], f64) {
        let (_, g) = self.loss_and_partials(x1, x2);
        let radial = g[0] * x1 + g[1] * x2;
        let p = [g[0] - radial * x1, g[1] - radial * x2];
        let n2 = (g[0] * g[0] + g[1] * g[1] - radial * radial).max(0.0);
        (p, n2)
    }

    /// Descent direction `-(spherical gradient)` in frame coordinates, defined
    /// on the closed disk.
    pub fn descent_field(&self, state: CorrelationState) -> Result<[f64; 2]> {
        Self::check_disk(state)?;
        let (p, _) = self.spherical_components(state.m1, state.m2);
        Ok([-p[0], -p[1]])
    }

    /// One noise-free step of the spherical SGD recursion, closed in the frame:
    /// `x' = (x - step P) / sqrt(1 + step^2 |grad|^2)`.
    pub fn spherical_step(&self, state: CorrelationState, step: f64) -> Result<CorrelationState> {
        Self::check_disk(state)?;
        Ok(self.step_unchecked(state, step))
    }

    #[inline]
    fn step_unchecked(&self, state: CorrelationState, step: f64) -> CorrelationState {
        let (p, n2) = self.spherical_components(state.m1, state.m2);
        let r = (1.0 + step * step * n2).sqrt();
        CorrelationState {
            m1: (state.m1 - step * p[0]) / r,
            m2: (state.m2 - step * p[1]) / r,
        }
    }

    /// Iterates [`Self::spherical_step`], recording every `stride`-th state
    /// and the final one.
    pub fn run_flow(&self, init: CorrelationState, step: f64, n_steps: usize, stride: usize) -> Result<Trajectory> {
        Self::check_disk(init)?;
        if stride == 0 {
            return Err(invalid("stride", "must be positive"));
        }
        let mut traj = Trajectory::start(init);
        let mut state = init;
        for t in 1..=n_steps {
            state = self.step_unchecked(state, step);
            if !(state.m1.is_finite() && state.m2.is_finite()) {
                return Err(Error::NonFinite {
                    step: t,
                    what: "population flow state".into(),
                });
            }
            traj.observe(t, state, t % stride == 0 || t == n_steps);
        }
        Ok(traj)
    }

    /// Grid check that descent increases `m1` and shrinks `|m2|` on the
    /// region `{x1 >= m1*, |x2| < m2*}` inside the open unit disk.
    ///
    /// Grid points are `(m1* + i h, j h)`. The `e2` condition is not evaluated
    /// on `x2 = 0`, where the sign of `m2` is undefined.
    pub fn check_assumption_b(&self, m_star: (f64, f64), grid_step: f64) -> Result<AssumptionBReport> {
        let (m1s, m2s) = m_star;
        if !(m1s > 0.0 && m1s < 1.0) {
            return Err(invalid("m_star.0", format!("must lie in (0, 1), got {m1s}")));
        }
        if !(m2s > 0.0) {
            return Err(Error::EmptyRegion(format!("m2* = {m2s} leaves no |x2| < m2*")));
        }
        if m2s > 1.0 {
            return Err(invalid("m_star.1", format!("must lie in (0, 1], got {m2s}")));
        }
        if !(grid_step > 0.0 && grid_step.is_finite()) {
            return Err(invalid("grid_step", format!("must be positive, got {grid_step}")));
        }
        let mut report = AssumptionBReport {
            m_star,
            certified: false,
            min_margin_e1: f64::INFINITY,
            min_margin_e2: f64::INFINITY,
            worst_point_e1: None,
            worst_point_e2: None,
            grid_step,
            n_points: 0,
        };
        let jmax = (m2s / grid_step).ceil() as i64;
        let mut i = 0usize;
        loop {
            let x1 = m1s + i as f64 * grid_step;
            if x1 >= 1.0 {
                break;
            }
            for j in -jmax..=jmax {
                let x2 = j as f64 * grid_step;
                if x2.abs() >= m2s || x1 * x1 + x2 * x2 >= 1.0 {
                    continue;
                }
                report.n_points += 1;
                let (p, _) = self.spherical_components(x1, x2);
                let e1_margin = -p[0];
                if e1_margin < report.min_margin_e1 {
                    report.min_margin_e1 = e1_margin;
                    report.worst_point_e1 = Some((x1, x2));
                }
                if j != 0 {
                    // want sgn(x2) F2 < 0 with F = -P
                    let e2_margin = x2.signum() * p[1];
                    if e2_margin < report.min_margin_e2 {
                        report.min_margin_e2 = e2_margin;
                        report.worst_point_e2 = Some((x1, x2));
                    }
                }
            }
            i += 1;
        }
        if report.n_points == 0 {
            return Err(Error::EmptyRegion(format!(
                "no grid point of step {grid_step} inside the region for m* = ({m1s}, {m2s})"
            )));
        }
        report.certified = report.min_margin_e1 > CERTIFY_TOL && report.min_margin_e2 > CERTIFY_TOL;
        Ok(report)
    }

    /// Descent field and loss on a `resolution x resolution` Cartesian grid
    /// over `[-1, 1]^2`, clipped to the closed unit disk.
    pub fn phase_portrait(&self, resolution: usize) -> Result<PhasePortrait> {
        if resolution < 2 {
            return Err(invalid("resolution", format!("must be >= 2, got {resolution}")));
        }
        let h = 2.0 / (resolution - 1) as f64;
        let mut points = Vec::new();
        for i in 0..resolution {
            let x1 = (-1.0 + i as f64 * h).clamp(-1.0, 1.0);
            for j in 0..resolution {
                let x2 = (-1.0 + j as f64 * h).clamp(-1.0, 1.0);
                if x1 * x1 + x2 * x2 > 1.0 + 1e-12 {
                    continue;
                }
                let (loss, _) = self.loss_and_partials(x1, x2);
                let (p, _) = self.spherical_components(x1, x2);
                points.push(PortraitPoint {
                    x1,
                    x2,
                    fx1: -p[0],
                    fx2: -p[1],
                    loss,
                });
            }
        }
        Ok(PhasePortrait { resolution, points })
    }

    /// Sign change of the descent field along `x2 = 0` separating the basin of
    /// the spurious critical point at the origin from that of `(1, 0)`.
    ///
    /// Scans `(0, 1)` for the first change from negative to positive `F1` and
    /// refines it by bisection.
    pub fn basin_boundary(&self, tol: f64) -> Result<f64> {
        let f1 = |x: f64| -self.spherical_components(x, 0.0).0[0];
        let n = 2000;
        let mut prev_x = 1.0 / n as f64;
        let mut prev = f1(prev_x);
        for k in 2..n {
            let x = k as f64 / n as f64;
            let v = f1(x);
            if prev < 0.0 && v > 0.0 {
                let (mut lo, mut hi) = (prev_x, x);
                while hi - lo > tol {
                    let mid = 0.5 * (lo + hi);
                    if f1(mid) < 0.0 {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                return Ok(0.5 * (lo + hi));
            }
            prev_x = x;
            prev = v;
        }
        Err(Error::EmptyRegion(
            "descent field along x2 = 0 has no sign change in (0, 1)".into(),
        ))
    }

    /// Information exponent of the isotropic loss
    /// `phi(m) = 2 sum_j c_j^2 j! (1 - m^j) + noise_var`: the smallest `k` with
    /// `|d^k phi / dm^k (0)| > 1e-8`.
    pub fn information_exponent(&self) -> Result<Option<usize>> {
        if self.lambda != 0.0 {
            return Err(invalid(
                "lambda",
                "the information exponent is defined for isotropic features (lambda = 0)",
            ));
        }
        let f = self
            .activation
            .as_polynomial()
            .ok_or_else(|| invalid("activation", "closed-form information exponent needs a polynomial"))?;
        let expansion = hermite_coefficients(f);
        let factorial = |k: usize| (1..=k).map(|i| i as f64).product::<f64>();
        let k = expansion
            .iter()
            .filter(|&(k, _)| k >= 1)
            .find(|&(k, c)| (2.0 * c * c * factorial(k) * factorial(k)).abs() > 1e-8)
            .map(|(k, _)| k);
        Ok(k)
    }
}

/// Outcome of a grid certification of the rectangle condition.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AssumptionBReport {
    pub m_star: (f64, f64),
    pub certified: bool,
    /// Minimum of `F . e1` over the grid (positive: `m1` increases).
    pub min_margin_e1: f64,
    /// Minimum of `-sgn(x2) F . e2` over grid points with `x2 != 0`
    /// (positive: `|m2|` decreases).
    pub min_margin_e2: f64,
    pub worst_point_e1: Option<(f64, f64)>,
    pub worst_point_e2: Option<(f64, f64)>,
    pub grid_step: f64,
    pub n_points: usize,
}

/// Header of the phase-portrait CSV export.
pub const PORTRAIT_CSV_HEADER: &str = "x1,x2,fx1,fx2,loss";

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PortraitPoint {
    pub x1: f64,
    pub x2: f64,
    pub fx1: f64,
    pub fx2: f64,
    pub loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PhasePortrait {
    pub resolution: usize,
    pub points: Vec<PortraitPoint>,
}

impl PhasePortrait {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(PORTRAIT_CSV_HEADER);
        out.push('\n');
        for p in &self.points {
            let _ = writeln!(out, "{},{},{},{},{}", p.x1, p.x2, p.fx1, p.fx2, p.loss);
        }
        out
    }
}

/// Inputs of the discrete Bihari-LaSalle bound for sequences with
/// `m_t <= a + sum_{i<t} b m_i^(k-1)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BihariBoundInput {
    pub a: f64,
    pub b: f64,
    pub k: u32,
    pub t: u64,
}

/// `a / (1 - b a^(k-2) t)^(1/(k-2))`.
pub fn bihari_lasalle_bound(input: &BihariBoundInput) -> Result<f64> {
    let BihariBoundInput { a, b, k, t } = *input;
    if !(a > 0.0 && b > 0.0) {
        return Err(invalid("a, b", format!("must be positive, got a = {a}, b = {b}")));
    }
    if k < 3 {
        return Err(invalid("k", format!("must be >= 3, got {k}")));
    }
    let e = (k - 2) as i32;
    let denominator = 1.0 - b * a.powi(e) * t as f64;
    if denominator <= 0.0 {
        return Err(Error::BlowUp { denominator });
    }
    Ok(a / denominator.powf(1.0 / e as f64))
}

/// The extremal sequence `m_t = a + sum_{i<t} b m_i^(k-1)`, `t = 0..=steps`.
pub fn bihari_extremal_sequence(a: f64, b: f64, k: u32, steps: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(steps + 1);
    let mut sum = 0.0;
    for _ in 0..=steps {
        let m = a + sum;
        out.push(m);
        sum += b * m.powi(k as i32 - 1);
    }
    out
}
