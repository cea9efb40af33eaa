//! geolink: match text-platform accounts to geo-location accounts.
//!
//! Every run is driven by a `key = value` config file plus a few global
//! flag overrides; all randomness flows from the single seed. Exit codes:
//! 0 success, 1 runtime failure, 2 usage error (bad flags, bad config,
//! missing input file).

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{ArgAction, Parser, Subcommand};

use geolink_core::config::RunConfig;
use geolink_core::{pipeline, Error};

#[derive(Parser)]
#[command(name = "geolink", version, about = "Match text accounts to geo-location accounts")]
struct Cli {
    /// Configuration file (`key = value` lines).
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Override the master seed.
    #[arg(long, global = true, value_name = "N")]
    seed: Option<u64>,

    /// Override worker thread count (0 = one per core).
    #[arg(long, global = true, value_name = "N")]
    threads: Option<usize>,

    /// More logging (-v info, -vv debug).
    #[arg(short, long, global = true, action = ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset at the configured paths.
    Synth,
    /// Build the word-location correlation matrix and save it.
    Corr,
    /// Train the matcher; writes the checkpoint and history.
    Train,
    /// Evaluate the checkpoint on the test split; prints a JSON report.
    Eval,
    /// Print the linkage probability for one pair of accounts.
    Predict {
        /// Text-platform user id.
        text_user: String,
        /// Location-platform user id.
        loc_user: String,
    },
    /// Print the strongest correlation cells behind one pair.
    Explain {
        /// Text-platform user id.
        text_user: String,
        /// Location-platform user id.
        loc_user: String,
    },
    /// Retrain across training-label ratios; prints a CSV of AUCs.
    Sweep,
}

fn load_config(cli: &Cli) -> Result<RunConfig, Error> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::from_file(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(threads) = cli.threads {
        cfg.threads = threads;
    }
    Ok(cfg)
}

fn run(cli: &Cli) -> Result<(), Error> {
    let cfg = load_config(cli)?;
    match &cli.command {
        Command::Synth => {
            pipeline::run_synth(&cfg)?;
            log::info!("synthetic dataset written");
        }
        Command::Corr => {
            let matrix = pipeline::run_corr(&cfg)?;
            log::info!(
                "matrix: {} words x {} categories, hash {}",
                matrix.n_words(),
                matrix.n_categories(),
                matrix.content_hash()
            );
        }
        Command::Train => {
            let (outcome, _) = pipeline::run_train(&cfg)?;
            let best = outcome.best_epoch.unwrap_or(0);
            log::info!(
                "trained {} epochs; kept epoch {} (valid AUC {})",
                outcome.history.len(),
                best,
                outcome
                    .history
                    .get(best.wrapping_sub(1))
                    .map_or(f64::NAN, |e| e.valid_auc)
            );
        }
        Command::Eval => {
            let report = pipeline::run_eval(&cfg)?;
            print!("{}", report.to_json());
        }
        Command::Predict { text_user, loc_user } => {
            let prob = pipeline::run_predict(&cfg, text_user, loc_user)?;
            println!("{prob}");
        }
        Command::Explain { text_user, loc_user } => {
            let rows = pipeline::run_explain(&cfg, text_user, loc_user)?;
            if cfg.explain_path.is_none() {
                let stdout = std::io::stdout();
                geolink_core::tensor::write_explain_csv(stdout.lock(), &rows)?;
            }
        }
        Command::Sweep => {
            let rows = pipeline::run_sweep(&cfg)?;
            if cfg.sweep_path.is_none() {
                let stdout = std::io::stdout();
                let mut out = stdout.lock();
                let io = |e: std::io::Error| Error::io("<stdout>", e);
                writeln!(out, "ratio,external,auc").map_err(io)?;
                for row in &rows {
                    writeln!(out, "{},{},{}", row.ratio, row.external, row.auc).map_err(io)?;
                }
            }
        }
    }
    Ok(())
}

/// Usage errors exit 2; anything that went wrong at runtime exits 1.
fn exit_code_for(err: &Error) -> u8 {
    match err {
        Error::Config(_) => 2,
        Error::Io { source, .. } if source.kind() == std::io::ErrorKind::NotFound => 2,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_code_for(&err))
        }
    }
}
