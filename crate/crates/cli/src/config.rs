//! Declarative experiment configuration. A JSON file supplies a base layer;
//! command-line flags override it field by field.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use spikesgd_core::sgd::SgdConfig;
use spikesgd_core::{Activation, InitSpec, ModelParams};

/// Every field is optional; commands fill the gaps with their own defaults.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: Option<String>,
    pub d: Option<usize>,
    pub lambda: Option<f64>,
    pub eta1: Option<f64>,
    pub noise_std: Option<f64>,
    pub activation: Option<String>,
    pub n_steps: Option<usize>,
    pub delta: Option<f64>,
    pub seeds: Option<Vec<u64>>,
    pub init: Option<String>,
    pub output_dir: Option<PathBuf>,
    pub record_stride: Option<usize>,
    pub recovery_threshold: Option<f64>,
    pub trap_radius: Option<f64>,

    // figure1
    pub side: Option<String>,
    pub scale: Option<String>,
    // vary-eta
    pub eta_grid: Option<Vec<f64>>,
    // transfer
    pub zeta_grid: Option<Vec<f64>>,
    pub alpha_grid: Option<Vec<f64>>,
    /// Transfer overlap is `transfer_scale * d^-zeta`.
    pub transfer_scale: Option<f64>,
    // phase
    pub resolution: Option<usize>,
    pub m_star: Option<[f64; 2]>,
    pub grid_step: Option<f64>,
    pub flow_inits: Option<Vec<[f64; 2]>>,
    pub flow_step: Option<f64>,
    pub flow_steps: Option<usize>,
    // pca-check
    pub gamma_grid: Option<Vec<f64>>,
    pub lambda_grid: Option<Vec<f64>>,
}

macro_rules! overlay {
    ($base:ident, $top:ident; $($field:ident),* $(,)?) => {
        $( if $top.$field.is_some() { $base.$field = $top.$field.clone(); } )*
    };
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }

    /// `self` with every field set in `top` replaced.
    pub fn overlay(mut self, top: &Self) -> Self {
        let base = &mut self;
        overlay!(base, top;
            experiment, d, lambda, eta1, noise_std, activation, n_steps, delta, seeds, init,
            output_dir, record_stride, recovery_threshold, trap_radius, side, scale, eta_grid,
            zeta_grid, alpha_grid, transfer_scale, resolution, m_star, grid_step, flow_inits, flow_step,
            flow_steps, gamma_grid, lambda_grid,
        );
        self
    }
}

/// Defaults a command supplies for the shared model fields.
#[derive(Debug, Clone, Copy)]
pub struct Defaults {
    pub d: usize,
    pub lambda: f64,
    pub eta1: f64,
}

pub const DEFAULT_SEEDS: [u64; 5] = [1, 2, 3, 4, 5];

/// Parses an init string; a bare `pca` means PCA on `20 d` samples.
pub fn parse_init(s: &str, d: usize) -> Result<InitSpec> {
    if s.trim() == "pca" {
        return Ok(InitSpec::default_pca(d));
    }
    s.parse()
        .map_err(|e| anyhow::anyhow!("invalid config field `init`: {e}"))
}

/// Fully resolved shared settings, validated against the core invariants.
#[derive(Debug, Clone, Serialize)]
pub struct RunSetup {
    pub d: usize,
    pub lambda: f64,
    pub eta1: f64,
    pub noise_std: f64,
    pub activation: String,
    pub n_steps: usize,
    pub delta: f64,
    pub seeds: Vec<u64>,
    pub init: InitSpec,
    /// `None` records about 1000 points per run.
    pub record_stride: Option<usize>,
    pub recovery_threshold: f64,
    pub trap_radius: f64,
    pub output_dir: PathBuf,
    #[serde(skip)]
    pub f: Activation,
}

fn field<T>(r: spikesgd_core::Result<T>, name: &str) -> Result<T> {
    r.map_err(|e| anyhow::anyhow!("invalid config field `{name}`: {e}"))
}

impl RunSetup {
    /// Fills defaults (`N = 1.5 d^2`, `delta = 1/(10 d)`, PCA init, seeds
    /// 1..=5) and validates.
    pub fn resolve(cfg: &ExperimentConfig, defaults: Defaults, command: &str) -> Result<Self> {
        let d = cfg.d.unwrap_or(defaults.d);
        let lambda = cfg.lambda.unwrap_or(defaults.lambda);
        let eta1 = cfg.eta1.unwrap_or(defaults.eta1);
        let noise_std = cfg.noise_std.unwrap_or(0.0);
        let activation = cfg.activation.clone().unwrap_or_else(|| "h3".into());
        let f: Activation = field(activation.parse(), "activation")?;
        let n_steps = cfg.n_steps.unwrap_or((1.5 * (d * d) as f64).ceil() as usize);
        let delta = cfg.delta.unwrap_or(1.0 / (10.0 * d as f64));
        let seeds = cfg.seeds.clone().unwrap_or_else(|| DEFAULT_SEEDS.to_vec());
        if seeds.is_empty() {
            bail!("invalid config field `seeds`: at least one seed is required");
        }
        let init = parse_init(cfg.init.as_deref().unwrap_or("pca"), d)?;
        let setup = Self {
            d,
            lambda,
            eta1,
            noise_std,
            activation: f.to_string(),
            n_steps,
            delta,
            seeds,
            init,
            record_stride: cfg.record_stride,
            recovery_threshold: cfg.recovery_threshold.unwrap_or(0.9),
            trap_radius: cfg.trap_radius.unwrap_or(0.3),
            output_dir: cfg
                .output_dir
                .clone()
                .unwrap_or_else(|| PathBuf::from("out").join(command)),
            f,
        };
        setup.params()?;
        setup.sgd_config(setup.seeds[0])?;
        Ok(setup)
    }

    pub fn params(&self) -> Result<ModelParams> {
        self.params_with(self.lambda, self.eta1)
    }

    pub fn params_with(&self, lambda: f64, eta1: f64) -> Result<ModelParams> {
        field(
            ModelParams::new(self.d, lambda, eta1, self.noise_std),
            "d, lambda, eta1, noise_std",
        )
    }

    pub fn sgd_config(&self, seed: u64) -> Result<SgdConfig> {
        self.sgd_config_with(self.n_steps, self.delta, seed)
    }

    pub fn sgd_config_with(&self, n_steps: usize, delta: f64, seed: u64) -> Result<SgdConfig> {
        let cfg = SgdConfig {
            n_steps,
            delta,
            record_stride: self.record_stride.unwrap_or((n_steps / 1000).max(1)),
            seed,
            recovery_threshold: self.recovery_threshold,
            trap_radius: self.trap_radius,
        };
        field(cfg.validate(), "n_steps, delta, record_stride")?;
        Ok(cfg)
    }
}
