//! Command-line front end: configuration, file formats and the workflow
//! commands `gen`, `calibrate`, `train`, `track`, `eval`, `scopes`, `sweep`.
//!
//! Exit codes: 0 success, 2 configuration, 3 file I/O or format, 4 pair
//! sampling, 5 feature dimension, 6 evaluation universe, 1 anything else.

pub mod commands;
pub mod config;
pub mod error;
pub mod io;
pub mod pipeline;

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Parser, Subcommand};

use crate::commands::AffinitySpec;
use crate::config::{Profile, RunConfig, Settings};
use crate::error::CliResult;

#[derive(Debug, Parser)]
#[command(name = "mtaf", version, about = "Multi-camera tracking with scope-adapted affinity")]
pub struct Cli {
    /// TOML run configuration; built-in defaults when omitted.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides the top-level seed of the configuration.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Window and sampling defaults.
    #[arg(long, global = true, value_enum)]
    pub profile: Option<Profile>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic dataset directory.
    Gen {
        #[arg(long)]
        out: PathBuf,
        /// Target population; the environment is shared across splits.
        #[arg(long)]
        split: Option<u64>,
    },
    /// Calibrate the distance threshold on a labelled dataset.
    Calibrate {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a metric under a sampling scheme.
    Train {
        #[arg(long)]
        data: PathBuf,
        /// intra, inter or global.
        #[arg(long)]
        scheme: String,
        /// Sampling window in frames; defaults to tau_s or tau_m.
        #[arg(long)]
        tau: Option<i64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the tracker and write a hypothesis file.
    Track {
        #[arg(long)]
        data: PathBuf,
        /// eq1, eq1:CALIBRATION, oracle or a checkpoint path.
        #[arg(long)]
        sct: String,
        #[arg(long)]
        mct: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Identity scores of a hypothesis against ground truth.
    Eval {
        #[arg(long)]
        gt: PathBuf,
        #[arg(long)]
        hyp: PathBuf,
        /// Match boxes by overlap instead of exactly.
        #[arg(long)]
        iou: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Error rates and affinity histograms per matching scope and scorer.
    Scopes {
        #[arg(long)]
        data: PathBuf,
        /// Repeatable; same syntax as the track affinities.
        #[arg(long = "scorer", required = true)]
        scorers: Vec<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Identity scores as the sampling window is scaled.
    Sweep {
        /// Training dataset.
        #[arg(long)]
        data: PathBuf,
        /// Dataset to track; the training dataset when omitted.
        #[arg(long)]
        eval: Option<PathBuf>,
        #[arg(long)]
        scheme: String,
        /// Comma-separated, e.g. `1/8,1,8`.
        #[arg(long, allow_hyphen_values = true)]
        multipliers: String,
        #[arg(long)]
        out: PathBuf,
    },
}

fn settings(cli: &Cli) -> CliResult<Settings> {
    let cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    Settings::resolve(&cfg, cli.seed, cli.profile)
}

/// Executes a parsed command and returns its console report.
pub fn execute(cli: &Cli) -> CliResult<String> {
    let s = settings(cli)?;
    match &cli.command {
        Command::Gen { out, split } => commands::gen(&s, out, *split),
        Command::Calibrate { data, out } => commands::calibrate(&s, data, out),
        Command::Train { data, scheme, tau, out } => {
            commands::train(&s, data, commands::parse_scheme(scheme)?, *tau, out)
        }
        Command::Track { data, sct, mct, out } => {
            commands::track(&s, data, &AffinitySpec::parse(sct)?, &AffinitySpec::parse(mct)?, out)
        }
        Command::Eval { gt, hyp, iou, out } => commands::eval(gt, hyp, *iou, out.as_deref()),
        Command::Scopes { data, scorers, out } => {
            let specs = scorers.iter().map(|x| AffinitySpec::parse(x)).collect::<CliResult<Vec<_>>>()?;
            commands::scopes(&s, data, &specs, out)
        }
        Command::Sweep {
            data,
            eval,
            scheme,
            multipliers,
            out,
        } => {
            let scheme = commands::parse_scheme(scheme)?;
            let m = commands::parse_multipliers(multipliers)?;
            commands::sweep(&s, data, eval.as_deref(), scheme, &m, out)
        }
    }
}

/// Parses `args` (including the program name), runs, and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match execute(&cli) {
        Ok(report) => {
            let _ = std::io::stdout().write_all(report.as_bytes());
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code() as i32
        }
    }
}
