//! Online spherical SGD: one fresh sample per step,
//! `X <- (X - (delta/d) grad_S L) / |X - (delta/d) grad_S L|`.

use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::model::{check_unit, dot, norm, Activation, Frame, ModelParams};
use crate::trajectory::Trajectory;

/// Stream used for the per-step samples of [`run_sgd`].
pub const SAMPLE_STREAM: u64 = 1;
/// Stream callers should use for building the initial iterate.
pub const INIT_STREAM: u64 = 2;

/// Deterministic generator for `(seed, stream)`. Different streams of the
/// same seed are independent.
pub fn seeded_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SgdConfig {
    pub n_steps: usize,
    /// Ambient step size is `delta / d`.
    pub delta: f64,
    pub record_stride: usize,
    pub seed: u64,
    pub recovery_threshold: f64,
    pub trap_radius: f64,
}

impl SgdConfig {
    pub fn new(n_steps: usize, delta: f64, seed: u64) -> Self {
        Self {
            n_steps,
            delta,
            record_stride: (n_steps / 1000).max(1),
            seed,
            recovery_threshold: 0.9,
            trap_radius: 0.3,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_steps == 0 {
            return Err(invalid("n_steps", "must be positive"));
        }
        if !(self.delta >= 0.0 && self.delta.is_finite()) {
            return Err(invalid("delta", format!("must be finite and >= 0, got {}", self.delta)));
        }
        if self.record_stride == 0 || self.record_stride > self.n_steps {
            return Err(invalid(
                "record_stride",
                format!("must lie in 1..={}, got {}", self.n_steps, self.record_stride),
            ));
        }
        if !(self.recovery_threshold > 0.0 && self.recovery_threshold < 1.0) {
            return Err(invalid(
                "recovery_threshold",
                format!("must lie in (0, 1), got {}", self.recovery_threshold),
            ));
        }
        if !(self.trap_radius > 0.0 && self.trap_radius < 1.0) {
            return Err(invalid(
                "trap_radius",
                format!("must lie in (0, 1), got {}", self.trap_radius),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Outcome {
    Recovered,
    Trapped,
    Undecided,
}

/// Recovered if `|final m1| >= threshold`; trapped if `sup |m1| <= trap_radius`
/// and `|final m1| <= 0.1`; undecided otherwise.
pub fn classify_outcome(traj: &Trajectory, threshold: f64, trap_radius: f64) -> Outcome {
    let last = traj.final_state.m1.abs();
    if last >= threshold {
        Outcome::Recovered
    } else if traj.sup_abs_m1 <= trap_radius && last <= 0.1 {
        Outcome::Trapped
    } else {
        Outcome::Undecided
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunResult {
    pub trajectory: Trajectory,
    pub recovered: bool,
    pub outcome: Outcome,
    pub wallclock_seconds: f64,
    pub config: SgdConfig,
}

/// Flat per-run record written to `summary.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub recovered: bool,
    pub outcome: Outcome,
    pub final_m1: f64,
    pub final_m2: f64,
    pub sup_abs_m1: f64,
    pub n_steps: usize,
    pub delta: f64,
    pub d: usize,
    pub lambda: f64,
    pub eta1: f64,
    pub init: String,
    pub seed: u64,
    pub wallclock_seconds: f64,
}

impl RunResult {
    pub fn summary(&self, params: &ModelParams, init: &str) -> RunSummary {
        RunSummary {
            recovered: self.recovered,
            outcome: self.outcome,
            final_m1: self.trajectory.final_state.m1,
            final_m2: self.trajectory.final_state.m2,
            sup_abs_m1: self.trajectory.sup_abs_m1,
            n_steps: self.config.n_steps,
            delta: self.config.delta,
            d: params.d(),
            lambda: params.lambda(),
            eta1: params.eta1(),
            init: init.to_string(),
            seed: self.config.seed,
            wallclock_seconds: self.wallclock_seconds,
        }
    }
}

/// Runs `cfg.n_steps` steps of online spherical SGD from `init`.
///
/// Samples come from `seeded_rng(cfg.seed, SAMPLE_STREAM)`. The iterate is
/// renormalized every step; `sup_abs_m1` covers every step.
pub fn run_sgd(params: &ModelParams, f: &Activation, init: &[f64], cfg: &SgdConfig) -> Result<RunResult> {
    cfg.validate()?;
    let d = params.d();
    if init.len() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: init.len(),
        });
    }
    check_unit(init)?;
    let start = Instant::now();
    let frame = Frame::from_params(params);
    let mut rng = seeded_rng(cfg.seed, SAMPLE_STREAM);
    let eta = cfg.delta / d as f64;

    let mut x = init.to_vec();
    let mut a = vec![0.0; d];
    let mut traj = Trajectory::start(frame.overlaps(&x));
    for t in 1..=cfg.n_steps {
        params.sample_features_into(&mut rng, &mut a);
        let y = params.label(&a, f, &mut rng);
        let u = dot(&x, &a);
        // spherical gradient is scale * (a - u x)
        let scale = 2.0 * (f.value(u) - y) * f.derivative(u);
        if !scale.is_finite() {
            return Err(Error::NonFinite {
                step: t,
                what: format!("gradient scale {scale} at x . a = {u}"),
            });
        }
        let c = eta * scale;
        if c != 0.0 {
            for (xi, ai) in x.iter_mut().zip(&a) {
                *xi -= c * (ai - u * *xi);
            }
            let n = norm(&x);
            if !(n.is_finite() && n > 0.0) {
                return Err(Error::NonFinite {
                    step: t,
                    what: format!("iterate norm {n}"),
                });
            }
            x.iter_mut().for_each(|xi| *xi /= n);
        }
        traj.observe(t, frame.overlaps(&x), t % cfg.record_stride == 0 || t == cfg.n_steps);
    }
    let recovered = traj.final_state.m1.abs() >= cfg.recovery_threshold;
    let outcome = classify_outcome(&traj, cfg.recovery_threshold, cfg.trap_radius);
    Ok(RunResult {
        trajectory: traj,
        recovered,
        outcome,
        wallclock_seconds: start.elapsed().as_secs_f64(),
        config: *cfg,
    })
}

/// [`run_sgd`] restricted to isotropic features (`lambda = 0`).
pub fn run_sgd_isotropic(params: &ModelParams, f: &Activation, init: &[f64], cfg: &SgdConfig) -> Result<RunResult> {
    if params.lambda() != 0.0 {
        return Err(invalid(
            "lambda",
            format!("isotropic runs need lambda = 0, got {}", params.lambda()),
        ));
    }
    run_sgd(params, f, init, cfg)
}
