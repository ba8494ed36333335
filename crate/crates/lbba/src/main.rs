//! `lbba` - train few-shot surrogates, mount shallow-layer and
//! error-transform attacks, and evaluate transfer against held-out targets.

use clap::{Parser, Subcommand};
use lbba::commands;
use lbba::runconfig::RunConfig;
use std::path::PathBuf;

#[derive(Parser)]
#[command(name = "lbba", version, about = "lightweight black-box attack bench")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the finite-difference gradient suite; exit 0 iff all < 1e-3.
    Gradcheck {
        /// Surrogate width for the full-forward case.
        #[arg(long, default_value_t = 16)]
        width: usize,
    },
    /// Train and register the target models.
    TrainTargets {
        #[arg(long)]
        config: PathBuf,
    },
    /// Train a few-shot surrogate.
    TrainSurrogate {
        #[arg(long)]
        config: PathBuf,
        /// supervised | contrastive | rotation
        #[arg(long)]
        objective: Option<String>,
        #[arg(long)]
        n_per_class: Option<usize>,
    },
    /// Generate an adversarial archive from the trained surrogate.
    Attack {
        #[arg(long)]
        config: PathBuf,
        /// deep | shallow | etf | etf-all
        #[arg(long)]
        surface: String,
        /// pgd | mi | di | ti
        #[arg(long)]
        method: String,
        #[arg(long)]
        eps: f32,
        #[arg(long)]
        tau: Option<f32>,
        /// linf | l2
        #[arg(long)]
        norm: Option<String>,
        #[arg(long)]
        steps: Option<usize>,
        /// Also export lossy 8-bit PNGs (non-canonical).
        #[arg(long, default_value_t = false)]
        png: bool,
    },
    /// Run the attack x target matrix and emit reports.
    Evaluate {
        #[arg(long)]
        config: PathBuf,
    },
    /// Sample-count or layer sweeps.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        /// samples | layers
        #[arg(long)]
        kind: String,
    },
    /// Re-emit a persisted report.
    Report {
        /// Run directory holding reports/report.json.
        #[arg(long = "in")]
        input: PathBuf,
        /// csv | md | json
        #[arg(long, default_value = "md")]
        format: String,
    },
}

fn main() {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Gradcheck { width } => commands::cmd_gradcheck(width),
        Command::TrainTargets { config } => {
            RunConfig::load(&config).map_err(Into::into).and_then(|c| commands::cmd_train_targets(&c))
        }
        Command::TrainSurrogate { config, objective, n_per_class } => RunConfig::load(&config)
            .map_err(Into::into)
            .and_then(|c| commands::cmd_train_surrogate(&c, objective.as_deref(), n_per_class)),
        Command::Attack { config, surface, method, eps, tau, norm, steps, png } => RunConfig::load(&config)
            .map_err(Into::into)
            .and_then(|c| commands::cmd_attack(&c, &surface, &method, eps, tau, norm.as_deref(), steps, png)),
        Command::Evaluate { config } => {
            RunConfig::load(&config).map_err(Into::into).and_then(|c| commands::cmd_evaluate(&c))
        }
        Command::Sweep { config, kind } => {
            RunConfig::load(&config).map_err(Into::into).and_then(|c| commands::cmd_sweep(&c, &kind))
        }
        Command::Report { input, format } => commands::cmd_report(&input, &format),
    };
    if let Err(e) = result {
        eprintln!("{e}");
        std::process::exit(e.exit_code());
    }
}
