//! `unibi` command-line interface.

pub mod checkpoint;
pub mod commands;
pub mod config;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::error::{Error, Result};
pub use checkpoint::Checkpoint;
pub use config::{FileConfig, FlagOverrides, Profile, RunConfig};

#[derive(Debug, Parser)]
#[command(
    name = "unibi",
    version,
    about = "Unit-ball bilinear knowledge-graph embeddings"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub flags: GlobalFlags,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Train a model and write a checkpoint and per-epoch trace.
    Train,
    /// Filtered MRR and Hits@k of a checkpoint per split.
    Eval,
    /// Track Δ of an injected identity relation under constraint ablations.
    IdentityExp,
    /// Per-relation imbalance against complexity for a checkpoint.
    ComplexityReport,
    /// Check the score bound and the identity-law counterexamples.
    Verify,
    /// Dataset and per-relation statistics.
    Stats,
}

#[derive(Debug, Clone, Default, Args)]
pub struct GlobalFlags {
    /// JSON configuration file; flags take precedence over it.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Directory with train.txt, valid.txt and test.txt.
    #[arg(long, global = true, value_name = "PATH")]
    pub data_dir: Option<PathBuf>,
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// unibi-o2, unibi-o3, cp, complex or rescal.
    #[arg(long, global = true)]
    pub model: Option<String>,
    /// Hyperparameter profile: wn18rr, fb15k-237 or yago3-10-dr.
    #[arg(long, global = true)]
    pub profile: Option<String>,
    #[arg(long, global = true, value_name = "N")]
    pub dim: Option<usize>,
    #[arg(long, global = true, value_name = "F")]
    pub gamma: Option<f64>,
    #[arg(long, global = true, value_name = "F")]
    pub reg: Option<f64>,
    /// Disable the unit-norm entity constraint.
    #[arg(long, global = true)]
    pub no_ec: bool,
    /// Disable the unit-spectral-radius relation constraint.
    #[arg(long, global = true)]
    pub no_rc: bool,
    #[arg(long, global = true, value_name = "F")]
    pub identity_fraction: Option<f64>,
    #[arg(long, global = true, value_name = "N")]
    pub seed: Option<u64>,
    #[arg(long, global = true, value_name = "N")]
    pub threads: Option<usize>,
    #[arg(long, global = true, value_name = "N")]
    pub epochs: Option<usize>,
    /// Checkpoint to read or write instead of <out>/model.ckpt.
    #[arg(long, global = true, value_name = "PATH")]
    pub checkpoint: Option<PathBuf>,
    /// Overwrite existing outputs.
    #[arg(long, global = true)]
    pub force: bool,
}

impl GlobalFlags {
    fn overrides(&self) -> FlagOverrides {
        FlagOverrides {
            data_dir: self.data_dir.clone(),
            out: self.out.clone(),
            profile: self.profile.clone(),
            model: self.model.clone(),
            dim: self.dim,
            gamma: self.gamma,
            reg: self.reg,
            no_ec: self.no_ec,
            no_rc: self.no_rc,
            identity_fraction: self.identity_fraction,
            seed: self.seed,
            threads: self.threads,
            epochs: self.epochs,
            checkpoint: self.checkpoint.clone(),
            force: self.force,
        }
    }
}

/// Merge the config file and flags into a validated [`RunConfig`].
pub fn resolve(flags: &GlobalFlags) -> Result<RunConfig> {
    let file = match &flags.config {
        Some(p) => FileConfig::load(p)?,
        None => FileConfig::default(),
    };
    RunConfig::resolve(file, flags.overrides())
}

/// Run one command and return its stdout text.
pub fn run(cli: &Cli) -> Result<String> {
    let cfg = resolve(&cli.flags)?;
    let task = || match cli.command {
        Command::Train => commands::train(&cfg),
        Command::Eval => commands::eval(&cfg),
        Command::IdentityExp => commands::identity_exp(&cfg),
        Command::ComplexityReport => commands::complexity(&cfg),
        Command::Verify => commands::verify(&cfg),
        Command::Stats => commands::stats(&cfg),
    };
    match cfg.threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?
            .install(task),
        None => task(),
    }
}

/// 2 for configuration problems and missing inputs, 1 for everything else.
pub fn exit_code(err: &Error) -> i32 {
    match err.root() {
        Error::Config(_) | Error::UnknownName { .. } => 2,
        Error::Io { source, .. } if source.kind() == std::io::ErrorKind::NotFound => 2,
        _ => 1,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_parse_before_and_after_the_subcommand() {
        let cli = Cli::try_parse_from(["unibi", "--dim", "8", "train", "--no-rc", "--model", "cp"])
            .unwrap();
        assert_eq!(cli.command, Command::Train);
        assert_eq!(cli.flags.dim, Some(8));
        assert!(cli.flags.no_rc);
        let cfg = resolve(&cli.flags).unwrap();
        assert_eq!(cfg.model.dim, 8);
        assert!(Cli::try_parse_from(["unibi", "train", "--bogus"]).is_err());
        assert!(Cli::try_parse_from(["unibi", "complexity-report"]).is_ok());
        assert!(Cli::try_parse_from(["unibi", "identity-exp"]).is_ok());
    }

    #[test]
    fn exit_codes() {
        let missing = Error::io("/nope", std::io::Error::from(std::io::ErrorKind::NotFound));
        assert_eq!(exit_code(&missing.context("loading")), 2);
        assert_eq!(exit_code(&Error::Config("x".into())), 2);
        assert_eq!(exit_code(&Error::BadCheckpoint("x".into())), 1);
    }
}
