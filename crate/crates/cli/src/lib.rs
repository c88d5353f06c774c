//! Command-line driver: synthetic data, training, calibration, uncertainty
//! export and the two selection procedures.

pub mod commands;
pub mod config;
pub mod error;

use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

pub use config::RunConfig;
pub use error::CliError;

#[derive(Debug, Parser)]
#[command(name = "pvlm", version, about = "Probabilistic adapters over frozen embeddings")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum DirectionArg {
    I2t,
    T2i,
}

/// Tunables shared by every subcommand. Flags win over `--set`, which wins
/// over the config file.
#[derive(Debug, Args)]
pub struct Common {
    /// key=value config file, `#` starts a comment.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Override any config key, repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub lambda_cross: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub n_levels: Option<usize>,
    #[arg(long)]
    pub m_passes: Option<usize>,
    #[arg(long, value_enum)]
    pub direction: Option<DirectionArg>,
    #[arg(long)]
    pub budget: Option<usize>,
    /// Output directory.
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic paired-embedding dataset.
    SynthGen {
        #[command(flatten)]
        common: Common,
    },
    /// Fit the vision and text adapters on a dataset directory.
    Train {
        #[arg(long)]
        data: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Recall@1 per uncertainty level and the trend statistics.
    EvalCalibration {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        adapters: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Per-sample scalar uncertainties.
    Uncertainty {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        adapters: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// IDs of the most uncertain images.
    ActiveSelect {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        adapters: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Rank candidate adapters by their uncertainty on unlabeled target images.
    ModelSelect {
        /// NAME=DIR, at least twice.
        #[arg(long = "candidate", required = true)]
        candidates: Vec<String>,
        /// Directory holding the target images.
        #[arg(long)]
        target: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Log-likelihood of every sample under one sample's predicted distribution.
    LoglikScan {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        adapters: PathBuf,
        #[arg(long)]
        source: String,
        #[command(flatten)]
        common: Common,
    },
}

impl Command {
    fn common(&self) -> &Common {
        match self {
            Command::SynthGen { common }
            | Command::Train { common, .. }
            | Command::EvalCalibration { common, .. }
            | Command::Uncertainty { common, .. }
            | Command::ActiveSelect { common, .. }
            | Command::ModelSelect { common, .. }
            | Command::LoglikScan { common, .. } => common,
        }
    }
}

pub fn resolve(common: &Common) -> Result<RunConfig, CliError> {
    let mut cfg = RunConfig::default();
    if let Some(path) = &common.config {
        cfg.apply_file(path)?;
    }
    for kv in &common.set {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| CliError::Input(format!("--set expects KEY=VALUE, got {kv:?}")))?;
        cfg.set(k.trim(), v)?;
    }
    let flags: [(&str, Option<String>); 9] = [
        ("seed", common.seed.map(|v| v.to_string())),
        ("epochs", common.epochs.map(|v| v.to_string())),
        ("learning_rate", common.lr.map(|v| v.to_string())),
        ("lambda_cross", common.lambda_cross.map(|v| v.to_string())),
        ("batch_size", common.batch_size.map(|v| v.to_string())),
        ("n_levels", common.n_levels.map(|v| v.to_string())),
        ("m_passes", common.m_passes.map(|v| v.to_string())),
        (
            "direction",
            common.direction.map(|d| match d {
                DirectionArg::I2t => "i2t".to_string(),
                DirectionArg::T2i => "t2i".to_string(),
            }),
        ),
        ("budget", common.budget.map(|v| v.to_string())),
    ];
    for (key, value) in flags {
        if let Some(v) = value {
            cfg.set(key, &v)?;
        }
    }
    Ok(cfg)
}

/// Resolves the configuration, echoes it to `log` and runs the command.
pub fn execute(cli: &Cli, log: &mut dyn Write) -> Result<String, CliError> {
    let common = cli.command.common();
    let cfg = resolve(common)?;
    let _ = write!(log, "{}", cfg.render());
    let out = &common.out;
    match &cli.command {
        Command::SynthGen { .. } => commands::synth_gen(&cfg, out),
        Command::Train { data, .. } => commands::train_cmd(&cfg, data, out),
        Command::EvalCalibration { data, adapters, .. } => {
            commands::eval_calibration(&cfg, data, adapters, out)
        }
        Command::Uncertainty { data, adapters, .. } => {
            commands::uncertainty_cmd(&cfg, data, adapters, out)
        }
        Command::ActiveSelect { data, adapters, .. } => {
            commands::active_select_cmd(&cfg, data, adapters, out)
        }
        Command::ModelSelect {
            candidates, target, ..
        } => {
            let parsed = candidates
                .iter()
                .map(|c| commands::parse_candidate(c))
                .collect::<Result<Vec<_>, _>>()?;
            commands::model_select_cmd(&cfg, &parsed, target, out)
        }
        Command::LoglikScan {
            data,
            adapters,
            source,
            ..
        } => commands::loglik_scan(&cfg, data, adapters, source, out),
    }
}
