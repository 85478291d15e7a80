use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};
use spikesgd_cli::{run_command, ExperimentConfig};

#[derive(Parser)]
#[command(name = "spikesgd", version, about = "Spiked-covariance single-index SGD experiments")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// JSON config file; flags override its fields.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Comma-separated seeds.
    #[arg(long, global = true, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    #[arg(long, global = true)]
    d: Option<usize>,
    #[arg(long, global = true)]
    lambda: Option<f64>,
    #[arg(long, global = true)]
    eta1: Option<f64>,
    /// Number of SGD steps N.
    #[arg(long, global = true)]
    steps: Option<usize>,
    /// Step-size parameter delta; the ambient step is delta / d.
    #[arg(long, global = true)]
    delta: Option<f64>,
    /// random | pca | pca:<n> | fixed:<m1>,<m2> | transfer:<eta>
    #[arg(long, global = true)]
    init: Option<String>,
    #[arg(long, global = true)]
    stride: Option<usize>,
    #[arg(long, global = true)]
    noise_std: Option<f64>,
    /// h<k> | poly:c0,c1,... | tanh
    #[arg(long, global = true)]
    activation: Option<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Four runs of one Figure 1 panel.
    Figure1 {
        #[arg(long)]
        side: Option<String>,
        #[arg(long)]
        scale: Option<String>,
    },
    /// PCA-initialized runs across eta1.
    VaryEta {
        #[arg(long, value_delimiter = ',')]
        etas: Option<Vec<f64>>,
    },
    /// Transfer-initialized isotropic runs across zeta and budgets.
    Transfer {
        #[arg(long, value_delimiter = ',')]
        zetas: Option<Vec<f64>>,
        #[arg(long, value_delimiter = ',')]
        alphas: Option<Vec<f64>>,
    },
    /// Phase portrait, population flows and rectangle certification.
    Phase {
        #[arg(long)]
        resolution: Option<usize>,
        /// Candidate m* as m1,m2.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        m_star: Option<Vec<f64>>,
        #[arg(long)]
        grid_step: Option<f64>,
        /// Flow start m1,m2; repeatable.
        #[arg(long = "flow-from", value_delimiter = ',', allow_hyphen_values = true)]
        flow_from: Vec<f64>,
        #[arg(long)]
        flow_step: Option<f64>,
        #[arg(long)]
        flow_steps: Option<usize>,
    },
    /// Top-eigenvector overlap against the limiting formulas.
    PcaCheck {
        #[arg(long, value_delimiter = ',')]
        gammas: Option<Vec<f64>>,
        #[arg(long, value_delimiter = ',')]
        lambdas: Option<Vec<f64>>,
    },
    /// Single run per seed.
    Sgd,
}

fn build(cli: Cli) -> Result<(&'static str, ExperimentConfig)> {
    let g = cli.global;
    let mut flags = ExperimentConfig {
        d: g.d,
        lambda: g.lambda,
        eta1: g.eta1,
        noise_std: g.noise_std,
        activation: g.activation,
        n_steps: g.steps,
        delta: g.delta,
        seeds: g.seeds,
        init: g.init,
        output_dir: g.out,
        record_stride: g.stride,
        ..Default::default()
    };
    let name = match cli.command {
        Command::Figure1 { side, scale } => {
            flags.side = side;
            flags.scale = scale;
            "figure1"
        }
        Command::VaryEta { etas } => {
            flags.eta_grid = etas;
            "vary-eta"
        }
        Command::Transfer { zetas, alphas } => {
            flags.zeta_grid = zetas;
            flags.alpha_grid = alphas;
            "transfer"
        }
        Command::Phase {
            resolution,
            m_star,
            grid_step,
            flow_from,
            flow_step,
            flow_steps,
        } => {
            flags.resolution = resolution;
            if let Some(v) = m_star {
                anyhow::ensure!(v.len() == 2, "--m-star takes m1,m2");
                flags.m_star = Some([v[0], v[1]]);
            }
            anyhow::ensure!(flow_from.len() % 2 == 0, "--flow-from takes m1,m2");
            flags.grid_step = grid_step;
            if !flow_from.is_empty() {
                flags.flow_inits = Some(flow_from.chunks(2).map(|c| [c[0], c[1]]).collect());
            }
            flags.flow_step = flow_step;
            flags.flow_steps = flow_steps;
            "phase"
        }
        Command::PcaCheck { gammas, lambdas } => {
            flags.gamma_grid = gammas;
            flags.lambda_grid = lambdas;
            "pca-check"
        }
        Command::Sgd => "sgd",
    };
    let base = match &g.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    Ok((name, base.overlay(&flags)))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = build(cli).and_then(|(name, cfg)| run_command(name, &cfg));
    match result {
        Ok(report) => {
            print!("{}", report.message);
            println!("wrote {} files to {}", report.files.len(), report.output_dir.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
