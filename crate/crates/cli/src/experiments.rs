//! The experiment commands. Each one resolves and validates its
//! configuration, runs its (sweep point x seed) jobs on the rayon pool and
//! hands every result to a single [`Collector`].

use std::fmt::Write as _;
use std::path::PathBuf;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};
use spikesgd_core::population::AssumptionBReport;
use spikesgd_core::pretraining::{
    bbp_limit_correlation, build_init_with, marcenko_pastur_edges, pca_top_eigenvector, InitOptions, PCA_MAX_ITERS,
    PCA_TOL,
};
use spikesgd_core::sgd::{run_sgd, seeded_rng, RunSummary, INIT_STREAM};
use spikesgd_core::{
    Activation, CorrelationState, Frame, InitSpec, ModelParams, PopulationField, RunResult, SgdConfig,
};

use crate::config::{Defaults, ExperimentConfig, RunSetup};
use crate::output::{Collector, Summary, VERSION};

/// Files written by a command and the content of its `summary.json`.
#[derive(Debug, Clone)]
pub struct Report {
    pub output_dir: PathBuf,
    pub files: Vec<PathBuf>,
    pub summary: Value,
    /// Human-readable lines for the terminal.
    pub message: String,
}

/// One SGD run.
#[derive(Debug, Clone)]
pub struct Job {
    pub label: String,
    pub params: ModelParams,
    pub f: Activation,
    pub init: InitSpec,
    pub cfg: SgdConfig,
}

#[derive(Debug, Clone)]
pub struct JobOutput {
    pub job: Job,
    pub result: RunResult,
    /// `(v_hat . v)^2` when the run started from PCA.
    pub pca_overlap_sq: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunRecord {
    pub label: String,
    pub csv: Option<String>,
    #[serde(flatten)]
    pub summary: RunSummary,
    pub pca_overlap_sq: Option<f64>,
}

/// Builds the initial iterate from `(seed, INIT_STREAM)` and runs SGD.
pub fn execute(job: &Job) -> Result<JobOutput> {
    let frame = Frame::from_params(&job.params);
    let mut rng = seeded_rng(job.cfg.seed, INIT_STREAM);
    let built = build_init_with(&job.init, &job.params, &frame, &InitOptions::default(), &mut rng)
        .with_context(|| format!("building init for {}", job.label))?;
    let result = run_sgd(&job.params, &job.f, &built.x0, &job.cfg)
        .with_context(|| format!("run {} (seed {})", job.label, job.cfg.seed))?;
    let pca_overlap_sq = built.pca.map(|p| {
        let c: f64 = p.v_hat.iter().zip(job.params.spike()).map(|(a, b)| a * b).sum();
        c * c
    });
    Ok(JobOutput {
        job: job.clone(),
        result,
        pca_overlap_sq,
    })
}

/// Runs all jobs in parallel; output order matches input order.
pub fn run_jobs(jobs: &[Job]) -> Result<Vec<JobOutput>> {
    jobs.par_iter().map(execute).collect()
}

fn record(out: &JobOutput, csv: Option<String>) -> RunRecord {
    RunRecord {
        label: out.job.label.clone(),
        csv,
        summary: out.result.summary(&out.job.params, &out.job.init.to_string()),
        pca_overlap_sq: out.pca_overlap_sq,
    }
}

fn finish<C: Serialize, E: Serialize>(
    mut collector: Collector,
    command: &str,
    config: C,
    started: Instant,
    runs: Vec<RunRecord>,
    extra: E,
    message: String,
) -> Result<Report> {
    let summary = Summary {
        command: command.to_string(),
        version: VERSION,
        config,
        wallclock_seconds: started.elapsed().as_secs_f64(),
        runs,
        extra,
    };
    let value = serde_json::to_value(&summary)?;
    collector.write_json("summary.json", &value)?;
    let output_dir = collector
        .files()
        .first()
        .and_then(|p| p.parent())
        .map(PathBuf::from)
        .unwrap_or_default();
    Ok(Report {
        output_dir,
        files: collector.into_files(),
        summary: value,
        message,
    })
}

fn sweep_csv(header: &str, rows: &[String]) -> String {
    let mut out = String::from(header);
    out.push('\n');
    for r in rows {
        out.push_str(r);
        out.push('\n');
    }
    out
}

/// `sgd`: one run per seed from the configured init.
pub fn cmd_sgd(cfg: &ExperimentConfig) -> Result<Report> {
    let setup = RunSetup::resolve(
        cfg,
        Defaults {
            d: 400,
            lambda: 1.0,
            eta1: 0.45,
        },
        "sgd",
    )?;
    let params = setup.params()?;
    let jobs: Vec<Job> = setup
        .seeds
        .iter()
        .map(|&seed| {
            Ok(Job {
                label: "run".into(),
                params: params.clone(),
                f: setup.f.clone(),
                init: setup.init,
                cfg: setup.sgd_config(seed)?,
            })
        })
        .collect::<Result<_>>()?;
    let started = Instant::now();
    let outputs = run_jobs(&jobs)?;

    let mut collector = Collector::create(&setup.output_dir)?;
    let mut runs = Vec::new();
    let mut message = String::new();
    for out in &outputs {
        let name = format!("run_seed{}.csv", out.job.cfg.seed);
        collector.write(&name, &out.result.trajectory.to_csv())?;
        let r = record(out, Some(name));
        let _ = writeln!(
            message,
            "seed {}: final m1 = {:.4}, sup |m1| = {:.4}, {:?}",
            r.summary.seed, r.summary.final_m1, r.summary.sup_abs_m1, r.summary.outcome
        );
        runs.push(r);
    }
    finish(collector, "sgd", &setup, started, runs, json!({}), message)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Left,
    Right,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Scale {
    Desk,
    Paper,
}

fn parse_side(s: Option<&str>) -> Result<Side> {
    match s.unwrap_or("left") {
        "left" => Ok(Side::Left),
        "right" => Ok(Side::Right),
        other => bail!("invalid config field `side`: expected left or right, got {other:?}"),
    }
}

fn parse_scale(s: Option<&str>) -> Result<Scale> {
    match s.unwrap_or("desk") {
        "desk" => Ok(Scale::Desk),
        "paper" => Ok(Scale::Paper),
        other => bail!("invalid config field `scale`: expected desk or paper, got {other:?}"),
    }
}

/// The four initializations of one Figure 1 panel.
pub fn figure1_inits(side: Side, d: usize) -> Vec<(&'static str, InitSpec)> {
    let fixed = match side {
        Side::Left => [
            InitSpec::FixedCorrelation(0.25, (1.0f64 - 0.25 * 0.25).sqrt()),
            InitSpec::FixedCorrelation(0.25, -0.75),
        ],
        Side::Right => [
            InitSpec::FixedCorrelation(0.1, 0.0),
            InitSpec::FixedCorrelation(0.25, 0.0),
        ],
    };
    vec![
        ("random", InitSpec::Random),
        ("pca", InitSpec::default_pca(d)),
        ("fixed_a", fixed[0]),
        ("fixed_b", fixed[1]),
    ]
}

/// `figure1`: random, PCA and two fixed-overlap runs per seed.
///
/// Left panel: `lambda = 1, eta1 = 0.45`. Right panel: `lambda = 0.5,
/// eta1 = 1`. Desk scale uses `d = 400`, paper scale `d = 1000`; both use
/// `N = 1.5 d^2` and `delta = 1/(10 d)`.
pub fn cmd_figure1(cfg: &ExperimentConfig) -> Result<Report> {
    let side = parse_side(cfg.side.as_deref())?;
    let scale = parse_scale(cfg.scale.as_deref())?;
    let (lambda, eta1) = match side {
        Side::Left => (1.0, 0.45),
        Side::Right => (0.5, 1.0),
    };
    let d = match scale {
        Scale::Desk => 400,
        Scale::Paper => 1000,
    };
    let setup = RunSetup::resolve(cfg, Defaults { d, lambda, eta1 }, "figure1")?;
    let params = setup.params()?;
    let inits = figure1_inits(side, setup.d);
    let mut jobs = Vec::new();
    for (label, init) in &inits {
        for &seed in &setup.seeds {
            jobs.push(Job {
                label: label.to_string(),
                params: params.clone(),
                f: setup.f.clone(),
                init: *init,
                cfg: setup.sgd_config(seed)?,
            });
        }
    }
    let started = Instant::now();
    let outputs = run_jobs(&jobs)?;

    let mut collector = Collector::create(&setup.output_dir)?;
    let mut runs = Vec::new();
    let mut counts = serde_json::Map::new();
    let mut message = String::new();
    for (label, init) in &inits {
        let mine: Vec<&JobOutput> = outputs.iter().filter(|o| o.job.label == *label).collect();
        let recovered = mine.iter().filter(|o| o.result.recovered).count();
        let _ = writeln!(
            message,
            "{label} ({init}): recovered on {recovered}/{} seeds",
            mine.len()
        );
        counts.insert(
            label.to_string(),
            json!({ "init": init.to_string(), "recovered": recovered, "seeds": mine.len() }),
        );
    }
    for out in &outputs {
        let name = format!("{}_seed{}.csv", out.job.label, out.job.cfg.seed);
        collector.write(&name, &out.result.trajectory.to_csv())?;
        runs.push(record(out, Some(name)));
    }
    let extra = json!({ "side": side, "scale": scale, "by_init": counts });
    finish(collector, "figure1", &setup, started, runs, extra, message)
}

pub const SWEEP_CSV_HEADER: &str = "value,seed,recovered,final_m1,sup_abs_m1";

/// `vary-eta`: PCA-initialized runs across a grid of `eta1`.
pub fn cmd_vary_eta(cfg: &ExperimentConfig) -> Result<Report> {
    let setup = RunSetup::resolve(
        cfg,
        Defaults {
            d: 400,
            lambda: 1.0,
            eta1: 0.45,
        },
        "vary-eta",
    )?;
    let grid = cfg
        .eta_grid
        .clone()
        .unwrap_or_else(|| vec![0.05, 0.1, 0.2, 0.3, 0.45, 0.6, 0.75, 0.9]);
    if grid.is_empty() || grid.iter().any(|e| !(0.0..=1.0).contains(e)) {
        bail!("invalid config field `eta_grid`: values must lie in [0, 1], got {grid:?}");
    }
    let mut jobs = Vec::new();
    for &eta in &grid {
        let params = setup.params_with(setup.lambda, eta)?;
        for &seed in &setup.seeds {
            jobs.push(Job {
                label: format!("eta{eta}"),
                params: params.clone(),
                f: setup.f.clone(),
                init: setup.init,
                cfg: setup.sgd_config(seed)?,
            });
        }
    }
    let started = Instant::now();
    let outputs = run_jobs(&jobs)?;

    let mut collector = Collector::create(&setup.output_dir)?;
    let mut rows = Vec::new();
    let mut fractions = Vec::new();
    let mut message = String::new();
    for (i, &eta) in grid.iter().enumerate() {
        let chunk = &outputs[i * setup.seeds.len()..(i + 1) * setup.seeds.len()];
        for o in chunk {
            let t = &o.result.trajectory;
            rows.push(format!(
                "{eta},{},{},{},{}",
                o.job.cfg.seed, o.result.recovered, t.final_state.m1, t.sup_abs_m1
            ));
        }
        let frac = chunk.iter().filter(|o| o.result.recovered).count() as f64 / chunk.len() as f64;
        let _ = writeln!(message, "eta1 = {eta}: recovery fraction {frac:.2}");
        fractions.push(json!({ "eta1": eta, "recovery_fraction": frac }));
    }
    collector.write("sweep.csv", &sweep_csv(SWEEP_CSV_HEADER, &rows))?;
    let runs = outputs.iter().map(|o| record(o, None)).collect();
    let extra = json!({ "eta_grid": grid, "recovery": fractions });
    finish(collector, "vary-eta", &setup, started, runs, extra, message)
}

pub const TRANSFER_CSV_HEADER: &str = "zeta,alpha,seed,recovered,final_m1,sup_abs_m1";
pub const CONTROL_CSV_HEADER: &str = "alpha,seed,recovered,final_m1,sup_abs_m1";
pub const BUDGET_CSV_HEADER: &str = "zeta,min_alpha";

/// Step size used for a budget `N = alpha d` when none is configured: the
/// geometric centre `alpha^(-3/4)` of the window `1/alpha << delta << 1/sqrt(alpha)`.
pub fn transfer_delta(alpha: f64) -> f64 {
    alpha.powf(-0.75)
}

/// `transfer`: isotropic runs from `Transfer(c d^-zeta)` (`c = 0.3` unless
/// configured) across budgets `N = alpha d`, with a random-init control at
/// every budget.
pub fn cmd_transfer(cfg: &ExperimentConfig) -> Result<Report> {
    let setup = RunSetup::resolve(
        cfg,
        Defaults {
            d: 300,
            lambda: 0.0,
            eta1: 1.0,
        },
        "transfer",
    )?;
    if setup.lambda != 0.0 {
        bail!("invalid config field `lambda`: transfer runs use isotropic features (lambda = 0)");
    }
    let zetas = cfg.zeta_grid.clone().unwrap_or_else(|| vec![0.0, 0.25, 0.4]);
    if zetas.is_empty() || zetas.iter().any(|z| !(0.0..0.5).contains(z)) {
        bail!("invalid config field `zeta_grid`: values must lie in [0, 0.5), got {zetas:?}");
    }
    let alphas = cfg
        .alpha_grid
        .clone()
        .unwrap_or_else(|| vec![5.0, 10.0, 20.0, 40.0, 80.0]);
    if alphas.is_empty() || alphas.iter().any(|a| !(*a > 0.0 && a.is_finite())) {
        bail!("invalid config field `alpha_grid`: values must be positive, got {alphas:?}");
    }
    let scale = cfg.transfer_scale.unwrap_or(0.3);
    if !(scale > 0.0 && scale <= 1.0) {
        bail!("invalid config field `transfer_scale`: must lie in (0, 1], got {scale}");
    }
    let params = setup.params()?;
    let d = setup.d as f64;
    let budget = |alpha: f64| -> Result<(usize, f64)> {
        let n = (alpha * d).round().max(1.0) as usize;
        Ok((n, cfg.delta.unwrap_or_else(|| transfer_delta(alpha))))
    };

    let mut jobs = Vec::new();
    for &zeta in &zetas {
        let eta = scale * d.powf(-zeta);
        for &alpha in &alphas {
            let (n, delta) = budget(alpha)?;
            for &seed in &setup.seeds {
                jobs.push(Job {
                    label: format!("zeta{zeta}_alpha{alpha}"),
                    params: params.clone(),
                    f: setup.f.clone(),
                    init: InitSpec::Transfer(eta),
                    cfg: setup.sgd_config_with(n, delta, seed)?,
                });
            }
        }
    }
    let n_transfer = jobs.len();
    for &alpha in &alphas {
        let (n, delta) = budget(alpha)?;
        for &seed in &setup.seeds {
            jobs.push(Job {
                label: format!("random_alpha{alpha}"),
                params: params.clone(),
                f: setup.f.clone(),
                init: InitSpec::Random,
                cfg: setup.sgd_config_with(n, delta, seed)?,
            });
        }
    }
    let started = Instant::now();
    let outputs = run_jobs(&jobs)?;

    let mut collector = Collector::create(&setup.output_dir)?;
    let seeds = setup.seeds.len();
    let majority = |chunk: &[JobOutput]| 2 * chunk.iter().filter(|o| o.result.recovered).count() > chunk.len();
    let mut rows = Vec::new();
    let mut budgets = Vec::new();
    let mut min_alpha = Vec::new();
    let mut message = String::new();
    for (zi, &zeta) in zetas.iter().enumerate() {
        let mut best = None;
        for (ai, &alpha) in alphas.iter().enumerate() {
            let start = (zi * alphas.len() + ai) * seeds;
            let chunk = &outputs[start..start + seeds];
            for o in chunk {
                let t = &o.result.trajectory;
                rows.push(format!(
                    "{zeta},{alpha},{},{},{},{}",
                    o.job.cfg.seed, o.result.recovered, t.final_state.m1, t.sup_abs_m1
                ));
            }
            if best.is_none() && majority(chunk) {
                best = Some(alpha);
            }
        }
        budgets.push(format!("{zeta},{}", best.map(|a| a.to_string()).unwrap_or_default()));
        let _ = writeln!(message, "zeta = {zeta}: minimal recovering alpha = {best:?}");
        min_alpha.push(json!({ "zeta": zeta, "min_alpha": best }));
    }
    let mut control = Vec::new();
    for (ai, &alpha) in alphas.iter().enumerate() {
        let start = n_transfer + ai * seeds;
        for o in &outputs[start..start + seeds] {
            let t = &o.result.trajectory;
            control.push(format!(
                "{alpha},{},{},{},{}",
                o.job.cfg.seed, o.result.recovered, t.final_state.m1, t.sup_abs_m1
            ));
        }
    }
    collector.write("sweep.csv", &sweep_csv(TRANSFER_CSV_HEADER, &rows))?;
    collector.write("control.csv", &sweep_csv(CONTROL_CSV_HEADER, &control))?;
    collector.write("budgets.csv", &sweep_csv(BUDGET_CSV_HEADER, &budgets))?;
    let runs = outputs.iter().map(|o| record(o, None)).collect();
    let deltas: Vec<f64> = alphas.iter().map(|&a| budget(a).map(|b| b.1)).collect::<Result<_>>()?;
    let extra = json!({ "transfer_scale": scale, "zeta_grid": zetas, "alpha_grid": alphas, "deltas": deltas, "min_alpha": min_alpha });
    finish(collector, "transfer", &setup, started, runs, extra, message)
}

#[derive(Debug, Clone, Serialize)]
pub struct FlowRecord {
    pub init: [f64; 2],
    pub csv: String,
    pub final_m1: f64,
    pub final_m2: f64,
    pub distance_to_target: f64,
}

/// `phase`: descent-field portrait, population flows and an optional
/// rectangle certification.
pub fn cmd_phase(cfg: &ExperimentConfig) -> Result<Report> {
    let setup = RunSetup::resolve(
        cfg,
        Defaults {
            d: 400,
            lambda: 1.0,
            eta1: 0.45,
        },
        "phase",
    )?;
    if setup.f.as_polynomial().is_none() {
        bail!("invalid config field `activation`: phase portraits need a polynomial activation");
    }
    let resolution = cfg.resolution.unwrap_or(41);
    if resolution < 2 {
        bail!("invalid config field `resolution`: must be >= 2, got {resolution}");
    }
    let grid_step = cfg.grid_step.unwrap_or(0.01);
    let flow_step = cfg.flow_step.unwrap_or(1e-4);
    let flow_steps = cfg.flow_steps.unwrap_or(200_000);
    if !(flow_step > 0.0 && flow_step.is_finite()) || flow_steps == 0 {
        bail!("invalid config field `flow_step, flow_steps`: must be positive");
    }
    let field = PopulationField::new(
        setup.f.clone(),
        setup.lambda,
        setup.eta1,
        setup.noise_std * setup.noise_std,
    )
    .map_err(|e| anyhow::anyhow!("invalid config field `lambda, eta1`: {e}"))?;
    let inits = cfg
        .flow_inits
        .clone()
        .unwrap_or_else(|| vec![[field.eta1(), field.eta2()]]);
    for p in &inits {
        CorrelationState::new(p[0], p[1]).map_err(|e| anyhow::anyhow!("invalid config field `flow_inits`: {e}"))?;
    }
    if let Some([m1, m2]) = cfg.m_star {
        if !(m1 > 0.0 && m1 < 1.0 && m2 > 0.0 && m2 <= 1.0) || !(grid_step > 0.0) {
            bail!("invalid config field `m_star, grid_step`: need 0 < m1* < 1, 0 < m2* <= 1, step > 0");
        }
    }

    let started = Instant::now();
    let portrait = field.phase_portrait(resolution)?;
    let stride = (flow_steps / 1000).max(1);
    let flows: Vec<_> = inits
        .par_iter()
        .map(|p| field.run_flow(CorrelationState { m1: p[0], m2: p[1] }, flow_step, flow_steps, stride))
        .collect::<spikesgd_core::Result<_>>()?;
    let report: Option<AssumptionBReport> = cfg
        .m_star
        .map(|[a, b]| field.check_assumption_b((a, b), grid_step))
        .transpose()?;
    let basin = field.basin_boundary(1e-10).ok();

    let mut collector = Collector::create(&setup.output_dir)?;
    collector.write("portrait.csv", &portrait.to_csv())?;
    let mut records = Vec::new();
    let mut message = String::new();
    for (i, (p, tr)) in inits.iter().zip(&flows).enumerate() {
        let name = format!("flow_{i}.csv");
        collector.write(&name, &tr.to_csv())?;
        let s = tr.final_state;
        let dist = ((s.m1 - 1.0).powi(2) + s.m2.powi(2)).sqrt();
        let _ = writeln!(
            message,
            "flow from ({}, {}): final ({:.6}, {:.6}), distance to (1, 0) = {dist:.3e}",
            p[0], p[1], s.m1, s.m2
        );
        records.push(FlowRecord {
            init: *p,
            csv: name,
            final_m1: s.m1,
            final_m2: s.m2,
            distance_to_target: dist,
        });
    }
    if let Some(r) = &report {
        let _ = writeln!(
            message,
            "assumption B at m* = ({}, {}), grid step {}: certified = {}, min margin e1 = {:.6}, min margin e2 = {:.6}",
            r.m_star.0, r.m_star.1, r.grid_step, r.certified, r.min_margin_e1, r.min_margin_e2
        );
    }
    let extra = json!({
        "resolution": resolution,
        "portrait_points": portrait.points.len(),
        "flow_step": flow_step,
        "flow_steps": flow_steps,
        "flows": records,
        "assumption_b": report,
        "basin_boundary": basin,
        "linear_constant": field.linear_constant(),
    });
    finish(collector, "phase", &setup, started, Vec::new(), extra, message)
}

pub const PCA_CSV_HEADER: &str = "gamma,lambda,seed,n,corr_sq,bbp,deviation,top_eigenvalue,mp_upper_edge,converged";

#[derive(Debug, Clone, Serialize)]
pub struct PcaRow {
    pub gamma: f64,
    pub lambda: f64,
    pub seed: u64,
    pub n: usize,
    pub corr_sq: f64,
    pub bbp: f64,
    pub top_eigenvalue: f64,
    pub mp_upper_edge: f64,
    pub converged: bool,
}

/// `pca-check`: `|v_hat . v|^2` and the top eigenvalue on `n = d / gamma`
/// unlabeled samples, against the limiting formulas.
pub fn cmd_pca_check(cfg: &ExperimentConfig) -> Result<Report> {
    let setup = RunSetup::resolve(
        cfg,
        Defaults {
            d: 400,
            lambda: 1.0,
            eta1: 0.45,
        },
        "pca-check",
    )?;
    let gammas = cfg.gamma_grid.clone().unwrap_or_else(|| vec![0.05, 0.25, 1.0]);
    let lambdas = cfg.lambda_grid.clone().unwrap_or_else(|| vec![0.0, 0.5, 1.0, 2.0]);
    if gammas.is_empty() || gammas.iter().any(|g| !(*g > 0.0 && g.is_finite())) {
        bail!("invalid config field `gamma_grid`: values must be positive, got {gammas:?}");
    }
    if lambdas.is_empty() || lambdas.iter().any(|l| !(*l >= 0.0 && l.is_finite())) {
        bail!("invalid config field `lambda_grid`: values must be >= 0, got {lambdas:?}");
    }
    let d = setup.d;
    let mut points = Vec::new();
    for &gamma in &gammas {
        let n = (d as f64 / gamma).round() as usize;
        if n < 2 {
            bail!("invalid config field `gamma_grid`: d / gamma = {n} leaves fewer than 2 samples");
        }
        for &lambda in &lambdas {
            let params = setup.params_with(lambda, setup.eta1)?;
            for &seed in &setup.seeds {
                points.push((gamma, lambda, seed, n, params.clone()));
            }
        }
    }
    let started = Instant::now();
    let rows: Vec<PcaRow> = points
        .par_iter()
        .map(|(gamma, lambda, seed, n, params)| {
            let mut rng = seeded_rng(*seed, INIT_STREAM);
            let mut data = vec![0.0; n * d];
            for row in data.chunks_exact_mut(d) {
                params.sample_features_into(&mut rng, row);
            }
            let est = pca_top_eigenvector(&data, d, PCA_TOL, PCA_MAX_ITERS, &mut rng)?;
            let c: f64 = est.v_hat.iter().zip(params.spike()).map(|(a, b)| a * b).sum();
            Ok(PcaRow {
                gamma: *gamma,
                lambda: *lambda,
                seed: *seed,
                n: *n,
                corr_sq: c * c,
                bbp: bbp_limit_correlation(*gamma, *lambda),
                top_eigenvalue: est.top_eigenvalue,
                mp_upper_edge: marcenko_pastur_edges(*gamma).1,
                converged: est.converged,
            })
        })
        .collect::<Result<_>>()?;

    let mut collector = Collector::create(&setup.output_dir)?;
    let lines: Vec<String> = rows
        .iter()
        .map(|r| {
            format!(
                "{},{},{},{},{},{},{},{},{},{}",
                r.gamma,
                r.lambda,
                r.seed,
                r.n,
                r.corr_sq,
                r.bbp,
                r.corr_sq - r.bbp,
                r.top_eigenvalue,
                r.mp_upper_edge,
                r.converged
            )
        })
        .collect();
    collector.write("pca_check.csv", &sweep_csv(PCA_CSV_HEADER, &lines))?;
    let mut means = Vec::new();
    let mut message = String::new();
    let k = setup.seeds.len();
    for chunk in rows.chunks(k) {
        let m = |f: fn(&PcaRow) -> f64| chunk.iter().map(f).sum::<f64>() / k as f64;
        let (corr, top) = (m(|r| r.corr_sq), m(|r| r.top_eigenvalue));
        let r0 = &chunk[0];
        let _ = writeln!(
            message,
            "gamma = {}, lambda = {}: mean |v.v_hat|^2 = {corr:.4} (limit {:.4}), mean top eigenvalue = {top:.4} (edge {:.4})",
            r0.gamma, r0.lambda, r0.bbp, r0.mp_upper_edge
        );
        means.push(json!({
            "gamma": r0.gamma,
            "lambda": r0.lambda,
            "mean_corr_sq": corr,
            "bbp": r0.bbp,
            "deviation": corr - r0.bbp,
            "mean_top_eigenvalue": top,
            "mp_upper_edge": r0.mp_upper_edge,
        }));
    }
    let extra = json!({ "means": means, "rows": rows });
    finish(collector, "pca-check", &setup, started, Vec::new(), extra, message)
}

/// Dispatches by command name.
pub fn run_command(name: &str, cfg: &ExperimentConfig) -> Result<Report> {
    match name {
        "sgd" => cmd_sgd(cfg),
        "figure1" => cmd_figure1(cfg),
        "vary-eta" => cmd_vary_eta(cfg),
        "transfer" => cmd_transfer(cfg),
        "phase" => cmd_phase(cfg),
        "pca-check" => cmd_pca_check(cfg),
        other => bail!("unknown command {other:?}"),
    }
}
