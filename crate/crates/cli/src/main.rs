use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

mod commands;
mod output;

use output::Format;

#[derive(Parser, Debug)]
#[command(
    name = "lgwalk",
    version,
    about = "Leggett-Garg tests on single-atom quantum walks"
)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

/// Flags shared by every command. Flags override the config file.
#[derive(Args, Debug, Clone)]
pub struct Common {
    /// Flat JSON configuration file
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Atoms per arm
    #[arg(long, global = true)]
    pub shots: Option<usize>,
    /// Coin angle in radians
    #[arg(long, global = true, allow_negative_numbers = true)]
    pub theta: Option<f64>,
    /// Dephasing probability per step
    #[arg(long, global = true)]
    pub dephasing: Option<f64>,
    #[arg(long, global = true, value_enum, default_value = "json")]
    pub format: Format,
    /// Write outputs into this directory instead of stdout
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Evaluate the model exactly instead of sampling atoms
    #[arg(long, global = true)]
    pub exact: bool,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Position distribution after every step of the unconditioned walk
    Walk,
    /// Full three-arm experiment: event log and correlation report
    LgTest,
    /// K as a function of the coin angle
    ThetaScan {
        /// Number of equally spaced angles on [0, π]
        #[arg(long, default_value_t = 17)]
        points: usize,
        /// Dephasing of the comparison curve
        #[arg(long, default_value_t = 0.10)]
        curve_dephasing: f64,
    },
    /// Correlation report from event logs (`-` or no path reads stdin)
    Analyze { paths: Vec<PathBuf> },
    /// Event log of a classical random walk
    Classical {
        /// Probability of stepping left
        #[arg(long, default_value_t = 0.5)]
        p: f64,
        /// Make the t₂ measurement invasive: afterwards the walker steps
        /// left with this probability
        #[arg(long)]
        invasive: Option<f64>,
    },
    /// Analytic K at one angle for both Q(t₂) schemes
    Oracle,
    /// Fit the dephasing per step to unconditioned distributions
    FitDephasing {
        paths: Vec<PathBuf>,
        /// Detection error assumed by the model (default: from the logs)
        #[arg(long)]
        detection_error: Option<f64>,
    },
    /// Macroscopicity of the configured experiment
    Macroscopicity {
        /// Classicalization length in meters
        #[arg(long)]
        ell: Option<f64>,
    },
}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<lgwalk_core::Error>() {
            return if e.is_validation() { 2 } else { 1 };
        }
        if cause.is::<serde_json::Error>() {
            return 2;
        }
    }
    1
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::run(cli.command, &cli.common) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
