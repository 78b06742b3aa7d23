//! Command-line flags; every flag overrides the matching config key.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use jkoflow::energy::{InternalEnergy, Mode, Selection};

use crate::config::{Command, DomainSpec, RunConfig, Sampler, Suite};
use crate::error::CliError;

#[derive(Debug, Parser)]
#[command(name = "jkoflow", version = crate::run::VERSION, about = "Wasserstein gradient flows on clipped Laguerre cells")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Sub,
}

#[derive(Debug, Subcommand)]
pub enum Sub {
    /// Voronoi diagram of a point set clipped to the domain.
    Diagram(Flags),
    /// Run the oracle suites and print their reports as JSON.
    Validate(Flags),
    /// One minimizing-movement step.
    JkoStep(Flags),
    /// Nonlinear diffusion of a point cloud.
    FlowDiffusion(Flags),
    /// Crowd motion with congestion on a fixed grid.
    FlowCrowd(Flags),
}

impl Sub {
    pub fn split(&self) -> (Command, &Flags) {
        match self {
            Self::Diagram(f) => (Command::Diagram, f),
            Self::Validate(f) => (Command::Validate, f),
            Self::JkoStep(f) => (Command::JkoStep, f),
            Self::FlowDiffusion(f) => (Command::FlowDiffusion, f),
            Self::FlowCrowd(f) => (Command::FlowCrowd, f),
        }
    }
}

fn parse_serde<T: serde::de::DeserializeOwned>(s: &str) -> Result<T, String> {
    serde_json::from_value(serde_json::Value::String(s.into())).map_err(|e| e.to_string())
}

#[derive(Debug, Default, Args)]
pub struct Flags {
    /// JSON config file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// `square:<side>` or `polygon:x,y;x,y;...`.
    #[arg(long)]
    pub domain: Option<DomainSpec>,
    #[arg(long)]
    pub n_points: Option<usize>,
    /// CSV file with columns x,y[,mass].
    #[arg(long)]
    pub points_csv: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub sampler: Option<Sampler>,
    #[arg(long)]
    pub tau: Option<f64>,
    #[arg(long)]
    pub steps: Option<usize>,
    /// Diffusion exponent; 1 selects the entropy.
    #[arg(long)]
    pub m: Option<f64>,
    /// Congestion weight.
    #[arg(long)]
    pub beta: Option<f64>,
    /// Congestion exponent.
    #[arg(long)]
    pub alpha: Option<f64>,
    /// `ac`, `selection` or `grid-gradient`.
    #[arg(long, value_parser = parse_serde::<Mode>)]
    pub mode: Option<Mode>,
    /// `steiner` or `centroid`.
    #[arg(long, value_parser = parse_serde::<Selection>)]
    pub selection: Option<Selection>,
    #[arg(long)]
    pub resolution: Option<usize>,
    #[arg(long)]
    pub snapshot_every: Option<usize>,
    #[arg(long, value_enum)]
    pub suite: Option<Suite>,
    #[arg(long)]
    pub instances: Option<usize>,
    #[arg(long)]
    pub max_iters: Option<usize>,
    #[arg(long)]
    pub grad_tol: Option<f64>,
}

impl Flags {
    /// Loads the config file, applies the flags and resolves defaults.
    pub fn into_config(&self, command: Command) -> Result<RunConfig, CliError> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        macro_rules! set {
            ($flag:expr, $field:expr) => {
                if let Some(v) = $flag.clone() {
                    $field = v;
                }
            };
        }
        set!(self.out, cfg.out_dir);
        set!(self.seed, cfg.seed);
        set!(self.domain, cfg.domain);
        set!(self.n_points, cfg.points.n_points);
        set!(self.sampler, cfg.points.sampler);
        set!(self.tau, cfg.flow.tau);
        set!(self.steps, cfg.flow.steps);
        set!(self.resolution, cfg.flow.resolution);
        set!(self.snapshot_every, cfg.flow.snapshot_every);
        set!(self.suite, cfg.validate.suite);
        set!(self.instances, cfg.validate.instances);
        set!(self.max_iters, cfg.solver.max_iters);
        set!(self.grad_tol, cfg.solver.grad_tol);
        if self.points_csv.is_some() {
            cfg.points.csv = self.points_csv.clone();
        }
        if self.mode.is_some() {
            cfg.flow.mode = self.mode;
        }
        if self.selection.is_some() {
            cfg.flow.selection = self.selection;
        }
        if self.m.is_some() && (self.beta.is_some() || self.alpha.is_some()) {
            return Err(CliError::Config {
                key: "--m".into(),
                message: "--m cannot be combined with --beta or --alpha".into(),
            });
        }
        if let Some(m) = self.m {
            cfg.energy.internal = Some(if m == 1.0 {
                InternalEnergy::Entropy
            } else {
                InternalEnergy::Power { m }
            });
        }
        if self.beta.is_some() || self.alpha.is_some() {
            let (a0, b0) = match cfg.energy.internal {
                Some(InternalEnergy::Congestion { alpha, beta }) => (alpha, beta),
                _ => (1.0, 0.01),
            };
            cfg.energy.internal = Some(InternalEnergy::Congestion {
                alpha: self.alpha.unwrap_or(a0),
                beta: self.beta.unwrap_or(b0),
            });
        }
        cfg.resolve(command)
    }
}
