//! Command-line driver: data generation, training, evaluation and
//! regularization sweeps on the mass-spring-damper benchmark.

mod config;
mod run;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::RunConfig;

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Runtime(String),
}

#[derive(Parser, Debug)]
#[command(name = "lfr-augment", version, about = "Physics-based model augmentation toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args, Debug)]
struct Common {
    /// TOML run configuration; omitted keys take their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the data master seed (gen-data) or the training seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory; defaults to the one named in the configuration.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate estimation, validation and test data with a manifest.
    GenData {
        #[command(flatten)]
        common: Common,
    },
    /// Train the configured structure and write a run directory.
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        quiet: bool,
    },
    /// Evaluate a checkpoint on one data split.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value = "test")]
        split: String,
    },
    /// Train once per regularization weight and tabulate the results.
    SweepEps {
        #[command(flatten)]
        common: Common,
        /// Comma-separated list of weights.
        #[arg(long, value_delimiter = ',')]
        eps: Vec<f64>,
        #[arg(long)]
        quiet: bool,
    },
}

fn load_config(common: &Common) -> Result<RunConfig, CliError> {
    match &common.config {
        Some(path) => RunConfig::load(path),
        None => Ok(RunConfig::default()),
    }
}

fn execute(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::GenData { common } => {
            let mut cfg = load_config(&common)?;
            if let Some(seed) = common.seed {
                cfg.data.master_seed = seed;
            }
            let out = common.out.clone().unwrap_or_else(|| cfg.data.dir.clone());
            let manifest = run::gen_data(&cfg, &out)?;
            for (name, digest) in &manifest.files {
                println!("{name} {digest}");
            }
        }
        Command::Train { common, quiet } => {
            let mut cfg = load_config(&common)?;
            if let Some(seed) = common.seed {
                cfg.training.seed = seed;
            }
            let out = common.out.clone().unwrap_or_else(|| cfg.out_dir.clone());
            let s = run::cmd_train(&cfg, &out, !quiet)?;
            println!(
                "best epoch {}: validation rmse {:.6} (baseline {:.6}), test rmse {:.6} (baseline {:.6}), max baseline drift {:.3e}",
                s.best_epoch, s.validation.model, s.validation.baseline, s.test.model, s.test.baseline, s.theta_base.max_relative
            );
        }
        Command::Eval {
            common,
            checkpoint,
            split,
        } => {
            let run_dir = checkpoint.parent().map(PathBuf::from).unwrap_or_default();
            let mut cfg = match &common.config {
                Some(path) => RunConfig::load(path)?,
                None => RunConfig::load(&run_dir.join(run::CONFIG_SNAPSHOT))?,
            };
            if let Some(seed) = common.seed {
                cfg.training.seed = seed;
            }
            let out = common.out.clone().unwrap_or(run_dir);
            let m = run::cmd_eval(&cfg, &checkpoint, &split, &out)?;
            println!("{} rmse {:.6} (baseline {:.6}) over {} samples", m.split, m.rmse, m.baseline_rmse, m.samples);
        }
        Command::SweepEps { common, eps, quiet } => {
            let mut cfg = load_config(&common)?;
            if let Some(seed) = common.seed {
                cfg.training.seed = seed;
            }
            let out = common.out.clone().unwrap_or_else(|| cfg.out_dir.clone());
            let rows = run::cmd_sweep_eps(&cfg, &eps, &out, !quiet)?;
            println!("{:>12}  {:>12}  {:>12}", "epsilon", "val_rmse", "max_drift");
            for r in rows {
                println!("{:>12e}  {:>12.6}  {:>12.4e}", r.epsilon, r.val_rmse, r.max_drift);
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
        Err(CliError::Runtime(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
    }
}
