mod commands;
mod config;
mod experiment;
mod recipes;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

use crate::config::{ExperimentConfig, InitialSpec, Learner, OracleSpec, ParamScheme, PlacementSpec, TopologySpec};

#[derive(Parser)]
#[command(
    name = "icdmp",
    version,
    about = "Learn independent cascade models with dynamic message passing"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    overrides: Overrides,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a network and ground-truth parameters.
    Generate {
        /// Use this edge list as the network instead of generating one.
        #[arg(long)]
        graph: Option<PathBuf>,
    },
    /// Simulate cascades and write the observed part.
    Simulate {
        /// Edge list of the network; its alpha column is used unless --truth is given.
        #[arg(long)]
        graph: PathBuf,
        #[arg(long)]
        truth: Option<PathBuf>,
    },
    /// Learn parameters from a cascade file.
    Learn {
        #[arg(long)]
        graph: PathBuf,
        #[arg(long)]
        cascade_file: PathBuf,
    },
    /// Compare learned parameters with the ground truth.
    Evaluate {
        #[arg(long)]
        learned: PathBuf,
        #[arg(long)]
        truth: PathBuf,
        /// Cascade file supplying the observed nodes, initial conditions and horizon.
        #[arg(long)]
        cascade_file: Option<PathBuf>,
    },
    /// Run a figure recipe at desk scale.
    Reproduce {
        id: String,
        /// Tiny sizes, for checking that a recipe runs.
        #[arg(long)]
        smoke: bool,
    },
}

/// Settings shared by all subcommands; each overrides the config file.
#[derive(Args, Default)]
struct Overrides {
    /// TOML experiment config.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads, 0 for all available cores.
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    topology: Option<TopologySpec>,
    #[arg(long, global = true)]
    params: Option<ParamScheme>,
    #[arg(long, global = true)]
    horizon: Option<usize>,
    /// Number of cascades.
    #[arg(long, global = true)]
    cascades: Option<usize>,
    #[arg(long, global = true)]
    initial: Option<InitialSpec>,
    /// Fraction of hidden nodes.
    #[arg(long, global = true)]
    xi: Option<f64>,
    #[arg(long, global = true)]
    placement: Option<PlacementSpec>,
    #[arg(long, global = true)]
    learner: Option<Learner>,
    #[arg(long, global = true)]
    oracle: Option<OracleSpec>,
    #[arg(long, global = true)]
    step_constant: Option<f64>,
    #[arg(long, global = true)]
    max_iterations: Option<usize>,
    #[arg(long, global = true)]
    tolerance: Option<f64>,
    #[arg(long, global = true)]
    init: Option<f64>,
    #[arg(long, global = true)]
    alpha_min: Option<f64>,
    #[arg(long, global = true)]
    alpha_max: Option<f64>,
    #[arg(long, global = true)]
    patience: Option<usize>,
}

impl Overrides {
    fn resolve(self) -> Result<ExperimentConfig> {
        let mut c = match &self.config {
            Some(path) => {
                let text = std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
                ExperimentConfig::from_toml(&text).with_context(|| format!("in {}", path.display()))?
            }
            None => ExperimentConfig::default(),
        };
        macro_rules! set {
            ($($field:ident).+ <- $value:expr) => {
                if let Some(v) = $value {
                    c.$($field).+ = v;
                }
            };
        }
        set!(seed <- self.seed);
        set!(workers <- self.workers);
        set!(out <- self.out);
        set!(topology <- self.topology);
        set!(params <- self.params);
        set!(horizon <- self.horizon);
        set!(cascades <- self.cascades);
        set!(initial <- self.initial);
        set!(xi <- self.xi);
        set!(placement <- self.placement);
        set!(learner <- self.learner);
        set!(oracle <- self.oracle);
        set!(learn.step_constant <- self.step_constant);
        set!(learn.max_iterations <- self.max_iterations);
        set!(learn.tolerance <- self.tolerance);
        set!(learn.init <- self.init);
        set!(learn.alpha_min <- self.alpha_min);
        set!(learn.alpha_max <- self.alpha_max);
        set!(learn.patience <- self.patience);
        Ok(c)
    }
}

fn run(cli: Cli) -> Result<()> {
    let config = cli.overrides.resolve()?;
    config.validate().context("invalid configuration")?;
    if let Command::Reproduce { id, .. } = &cli.command {
        recipes::lookup(id)?;
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(config.workers)
        .build_global()
        .context("cannot start worker pool")?;
    std::fs::create_dir_all(&config.out).with_context(|| format!("cannot create {}", config.out.display()))?;
    let name = match &cli.command {
        Command::Generate { .. } => "generate",
        Command::Simulate { .. } => "simulate",
        Command::Learn { .. } => "learn",
        Command::Evaluate { .. } => "evaluate",
        Command::Reproduce { .. } => "reproduce",
    };
    std::fs::write(config.out.join(format!("{name}.config.toml")), config.to_toml()?)?;
    match cli.command {
        Command::Generate { graph } => commands::generate(&config, graph.as_deref()),
        Command::Simulate { graph, truth } => commands::simulate(&config, &graph, truth.as_deref()),
        Command::Learn { graph, cascade_file } => commands::learn(&config, &graph, &cascade_file),
        Command::Evaluate {
            learned,
            truth,
            cascade_file,
        } => commands::evaluate(&config, &learned, &truth, cascade_file.as_deref()),
        Command::Reproduce { id, smoke } => recipes::reproduce(&config, &id, smoke),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
