//! Command-line experiment runner.
//!
//! Exit codes: 0 on success, 2 for configuration errors, 3 for runtime
//! failures.

mod config;
mod runner;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::{ConfigError, ExperimentConfig};

#[derive(Parser)]
#[command(
    name = "dcp",
    version,
    about = "Simulate and analyze runtime-tuned max-weight scheduling over Markov fading channels"
)]
struct Cli {
    /// Worker threads for sweeps (default: DCP_JOBS or all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArgs {
    /// Experiment config (JSON); a manifest.json from a previous run is
    /// accepted as well.
    config: PathBuf,
    /// Artifact directory (default: `<config stem>_out`).
    #[arg(long)]
    out: Option<PathBuf>,
}

impl ConfigArgs {
    fn load(&self) -> Result<ExperimentConfig, ConfigError> {
        ExperimentConfig::load(&self.config)
    }

    fn out_dir(&self) -> PathBuf {
        self.out.clone().unwrap_or_else(|| {
            let stem = self
                .config
                .file_stem()
                .map(|s| s.to_string_lossy().to_string())
                .unwrap_or_else(|| "experiment".to_string());
            PathBuf::from(format!("{stem}_out"))
        })
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run the (load factor x replication) simulation sweep.
    Simulate(ConfigArgs),
    /// Numerical analysis of policy quality and capacity scaling.
    #[command(subcommand)]
    Analyze(AnalyzeCommand),
    /// Locate the capacity-region boundary along a direction.
    Capacity {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Ray direction as `dx,dy`.
        #[arg(long, value_parser = parse_direction)]
        direction: (f64, f64),
    },
    /// Evaluate the limiting round-statistics ratio.
    Rinf {
        #[arg(long)]
        delta: f64,
        #[arg(long)]
        rho_phi: f64,
        #[arg(long)]
        l1: u32,
        #[arg(long, default_value_t = 10_000)]
        k_max: u64,
    },
    /// Recompute stability verdicts from a run directory.
    Verdict {
        /// Artifact directory previously written by `simulate`.
        run_dir: PathBuf,
    },
}

#[derive(Subcommand)]
enum AnalyzeCommand {
    /// Scaling factors over the direction grid (per-frame-length table plus
    /// the dynamic-policy limit).
    Theta {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Also evaluate the finite-quality lower bound.
        #[arg(long)]
        with_dcp_bound: bool,
        /// Measurement-noise parameter for the lower bound.
        #[arg(long, default_value_t = 0.0)]
        theta_phi: f64,
    },
    /// Frame-quality profile for one backlog direction.
    Phi {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Backlog direction angle in degrees (0 = first flow only).
        #[arg(long)]
        direction: f64,
    },
}

fn parse_direction(s: &str) -> Result<(f64, f64), String> {
    let (a, b) = s.split_once(',').ok_or("expected `dx,dy`")?;
    let dx: f64 = a.trim().parse().map_err(|_| "bad dx")?;
    let dy: f64 = b.trim().parse().map_err(|_| "bad dy")?;
    Ok((dx, dy))
}

fn init_pool(jobs: Option<usize>) {
    let jobs = jobs.or_else(|| std::env::var("DCP_JOBS").ok().and_then(|v| v.parse().ok()));
    if let Some(n) = jobs {
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build_global();
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    init_pool(cli.jobs);
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<ConfigError>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::from(3)
            }
        }
    }
}

fn run(command: Command) -> anyhow::Result<()> {
    match command {
        Command::Simulate(args) => {
            let cfg = args.load()?;
            runner::simulate(&cfg, &args.out_dir())
        }
        Command::Analyze(AnalyzeCommand::Theta {
            cfg,
            with_dcp_bound,
            theta_phi,
        }) => {
            let config = cfg.load()?;
            runner::analyze_theta(&config, &cfg.out_dir(), with_dcp_bound, theta_phi)
        }
        Command::Analyze(AnalyzeCommand::Phi { cfg, direction }) => {
            let config = cfg.load()?;
            runner::analyze_phi(&config, &cfg.out_dir(), direction)
        }
        Command::Capacity { cfg, direction } => {
            let config = cfg.load()?;
            runner::capacity(&config, &cfg.out_dir(), [direction.0, direction.1])
        }
        Command::Rinf {
            delta,
            rho_phi,
            l1,
            k_max,
        } => runner::rinf(delta, rho_phi, l1, k_max),
        Command::Verdict { run_dir } => runner::verdict(&run_dir),
    }
}
