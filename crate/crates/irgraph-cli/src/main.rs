//! `irg`: simulate, solve and verify sparse inhomogeneous random graph
//! models described by a JSON model file.

mod commands;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use irgraph::measures::TypeConfig;
use irgraph::Model;

use crate::output::Sink;

#[derive(Parser, Debug)]
#[command(name = "irg", version, about = "Inhomogeneous random graph toolkit")]
struct Cli {
    /// Model file (JSON, schema 1).
    #[arg(long, global = true)]
    model: Option<PathBuf>,
    /// Seed for stochastic commands.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Directory for output files; results go to stdout when omitted.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads (default: available parallelism).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Sample graphs and report cluster statistics per replica.
    Simulate {
        #[arg(long = "N")]
        n: usize,
        #[arg(long, default_value_t = 1)]
        replicas: usize,
        #[arg(long, default_value_t = irgraph::graphsim::DEFAULT_EPSILON)]
        epsilon: f64,
    },
    /// Exact law of the cluster profile for a small graph.
    ExactDist {
        #[arg(long = "N")]
        n: usize,
    },
    /// Spanning-tree weight τ(k) by every applicable method.
    Tau {
        /// Type configuration, e.g. `2,1`.
        #[arg(long, value_parser = parse_config)]
        k: TypeConfig,
    },
    /// Spectral radius, survival probabilities and c*.
    Solve {
        #[arg(long, default_value_t = irgraph::solvers::DEFAULT_TOL)]
        tol: f64,
    },
    /// Evaluate the rate functions on measures given in a JSON file.
    Rate {
        #[arg(long)]
        input: PathBuf,
    },
    /// The global minimiser of the rate function.
    Minimize {
        #[arg(long, default_value_t = irgraph::rates::DEFAULT_KMAX)]
        kmax: u32,
        #[arg(long, default_value_t = irgraph::solvers::DEFAULT_TOL)]
        tol: f64,
    },
    /// Multi-type Borel law with ν = μ.
    Borel {
        #[arg(long, default_value_t = 0)]
        root: usize,
        #[arg(long, default_value_t = 20)]
        kmax: u32,
        /// Also sample this many total progenies (requires --seed).
        #[arg(long)]
        samples: Option<usize>,
        #[arg(long, default_value_t = irgraph::branching::DEFAULT_CAP)]
        cap: u64,
    },
    /// Flory solution: gel mass, micro mass and equation residual over time.
    Flory {
        #[arg(long, default_value_t = 2.0)]
        t_max: f64,
        #[arg(long, default_value_t = 20)]
        steps: usize,
        #[arg(long, default_value_t = 12)]
        kmax: u32,
    },
    /// Run a statistical verification suite; exits with 1 on failure.
    Verify {
        suite: Suite,
        #[arg(long = "N")]
        n: Option<usize>,
        #[arg(long)]
        replicas: Option<usize>,
        #[arg(long)]
        samples: Option<usize>,
        #[arg(long)]
        kmax: Option<u32>,
        #[arg(long, value_delimiter = ',')]
        n_grid: Vec<usize>,
        /// Macroscopic profile y for `macro-connection`.
        #[arg(long, value_delimiter = ',')]
        y: Vec<f64>,
    },
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum Suite {
    GiantLln,
    MicroLln,
    ConnectivityRate,
    MacroConnection,
}

fn parse_config(s: &str) -> std::result::Result<TypeConfig, String> {
    s.split(',')
        .map(|p| p.trim().parse::<u32>().map_err(|e| format!("bad count {p:?}: {e}")))
        .collect::<std::result::Result<Vec<_>, _>>()
        .map(TypeConfig)
}

fn load_model(path: &Option<PathBuf>) -> Result<Model> {
    let path = path.as_ref().context("--model is required")?;
    Model::load(path).with_context(|| format!("invalid model {}", path.display()))
}

fn require_seed(seed: Option<u64>, command: &str) -> Result<u64> {
    match seed {
        Some(s) => Ok(s),
        None => bail!("`{command}` is stochastic and needs --seed"),
    }
}

fn run(cli: Cli) -> Result<bool> {
    if let Some(t) = cli.threads {
        if t == 0 {
            bail!("--threads must be positive");
        }
        irgraph::exec::set_threads(t);
    }
    let model = load_model(&cli.model)?;
    let sink = Sink::new(cli.out.clone())?;
    match cli.command {
        Command::Simulate { n, replicas, epsilon } => {
            let seed = require_seed(cli.seed, "simulate")?;
            commands::simulate(&model, n, replicas, epsilon, seed, &sink)?;
        }
        Command::ExactDist { n } => commands::exact_dist(&model, n, &sink)?,
        Command::Tau { k } => commands::tau(&model, &k, &sink)?,
        Command::Solve { tol } => commands::solve(&model, tol, &sink)?,
        Command::Rate { input } => commands::rate(&model, &input, &sink)?,
        Command::Minimize { kmax, tol } => commands::minimize(&model, kmax, tol, &sink)?,
        Command::Borel { root, kmax, samples, cap } => {
            let seed = match samples {
                Some(_) => Some(require_seed(cli.seed, "borel --samples")?),
                None => None,
            };
            commands::borel(&model, root, kmax, samples.zip(seed), cap, &sink)?;
        }
        Command::Flory { t_max, steps, kmax } => commands::flory(&model, t_max, steps, kmax, &sink)?,
        Command::Verify {
            suite,
            n,
            replicas,
            samples,
            kmax,
            n_grid,
            y,
        } => {
            let seed = require_seed(cli.seed, "verify")?;
            let opts = commands::VerifyOptions {
                n,
                replicas,
                samples,
                kmax,
                n_grid,
                y,
            };
            let suite = match suite {
                Suite::GiantLln => commands::VerifySuite::GiantLln,
                Suite::MicroLln => commands::VerifySuite::MicroLln,
                Suite::ConnectivityRate => commands::VerifySuite::ConnectivityRate,
                Suite::MacroConnection => commands::VerifySuite::MacroConnection,
            };
            return commands::verify(&model, suite, opts, seed, &sink);
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
