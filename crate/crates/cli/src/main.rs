use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use driftrec_cli::commands::{self, SweepAxis};
use driftrec_cli::config::RunConfig;
use driftrec_cli::error_category;
use driftrec_core::Result;

#[derive(Parser)]
#[command(name = "driftrec", about = "hybrid graph-embedding recommender pipeline")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Common {
    /// Run configuration (TOML).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override the config's root seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the config's output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Validate inputs and write canonical dataset artifacts.
    Prepare {
        #[command(flatten)]
        common: Common,
        /// Dump the built-in defaults as TOML and exit.
        #[arg(long)]
        print_defaults: bool,
    },
    /// Build similarity graphs and train the static embeddings.
    Embed {
        #[command(flatten)]
        common: Common,
    },
    /// Train the ranking head on frozen embeddings.
    Train {
        #[command(flatten)]
        common: Common,
        /// Continue from the existing model checkpoint.
        #[arg(long)]
        resume: bool,
    },
    /// Evaluate the trained model (leave-one-out, sampled negatives).
    Evaluate {
        #[command(flatten)]
        common: Common,
    },
    /// Train and evaluate every model variant.
    Ablate {
        #[command(flatten)]
        common: Common,
    },
    /// Run a hyperparameter grid along one axis.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// `embedding_dim`, `walk_length`, or `interest_k`.
        #[arg(long)]
        axis: String,
    },
}

fn load_config(common: &Common) -> Result<RunConfig> {
    let mut cfg = match &common.config {
        Some(path) => RunConfig::load(path)?,
        None => {
            return Err(driftrec_core::CoreError::InvalidConfig(
                "--config is required".into(),
            ))
        }
    };
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &common.out {
        cfg.out_dir = out.clone();
    }
    Ok(cfg)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Prepare {
            common,
            print_defaults,
        } => {
            if print_defaults {
                print!("{}", RunConfig::default().to_toml());
                return Ok(());
            }
            let summary = commands::cmd_prepare(&load_config(&common)?)?;
            println!(
                "users\t{}\nitems\t{}\ntrain\t{}\ntest\t{}\ndropped_users\t{}",
                summary.n_users,
                summary.n_items,
                summary.n_train,
                summary.n_test,
                summary.dropped_users
            );
        }
        Command::Embed { common } => commands::cmd_embed(&load_config(&common)?)?,
        Command::Train { common, resume } => commands::cmd_train(&load_config(&common)?, resume)?,
        Command::Evaluate { common } => {
            let report = commands::cmd_evaluate(&load_config(&common)?)?;
            for line in report.lines() {
                println!("{line}");
            }
        }
        Command::Ablate { common } => {
            let report = commands::cmd_ablate(&load_config(&common)?)?;
            for line in report.lines() {
                println!("{line}");
            }
        }
        Command::Sweep { common, axis } => {
            let axis = SweepAxis::parse(&axis)?;
            let results = commands::cmd_sweep(&load_config(&common)?, axis)?;
            for (value, report) in results {
                for line in report.lines() {
                    println!("{}\t{value}\t{line}", axis.label());
                }
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            let (category, code) = error_category(&err);
            eprintln!("error\t{category}\t{err}");
            ExitCode::from(code as u8)
        }
    }
}
