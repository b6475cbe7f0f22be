//! `entropart`: generate a dataset, partition it, train on the partitions
//! and compare runs.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::{ConfigError, RunConfig, Scheme};

#[derive(Parser)]
#[command(
    name = "entropart",
    version,
    about = "Entropy-aware partitioning and two-phase GNN training"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArgs {
    /// TOML run configuration; defaults apply when omitted.
    #[arg(long, alias = "spec")]
    config: Option<PathBuf>,
    /// Override one config key, e.g. `trainer.lambda=0.01`. Repeatable.
    #[arg(long = "override", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a planted-community dataset.
    Gen {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Output dataset directory.
        #[arg(long)]
        out: PathBuf,
        /// Generator seed (`datagen.seed`).
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Partition a dataset and report cut and label entropy.
    Partition {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Dataset directory written by `gen`.
        #[arg(long)]
        dataset: PathBuf,
        /// Output directory for the assignment and report.
        #[arg(long)]
        out: PathBuf,
        /// Edge weighting: unit weights or feature/fanout weights.
        #[arg(long, value_enum)]
        scheme: Option<Scheme>,
        /// Number of parts.
        #[arg(long)]
        num_parts: Option<usize>,
        /// Feature-similarity coefficient for `ew` weights.
        #[arg(long)]
        c: Option<f64>,
        /// Neighbour fanout used in the `ew` sampling term.
        #[arg(long)]
        fanout_k: Option<usize>,
        /// Allowed imbalance over the ideal part size.
        #[arg(long)]
        epsilon: Option<f64>,
        /// Partitioner seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Train one model per part.
    Train {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Dataset directory written by `gen`.
        #[arg(long)]
        dataset: PathBuf,
        /// `assignment.bin` written by `partition`.
        #[arg(long)]
        assignment: PathBuf,
        /// Output run directory.
        #[arg(long)]
        out: PathBuf,
        /// Must equal the number of parts in the assignment.
        #[arg(long)]
        num_workers: Option<usize>,
        /// Synchronous training with early stopping only: no class-balanced
        /// sampling and no personalization.
        #[arg(long)]
        baseline: bool,
    },
    /// Compare training runs and partitions.
    Report {
        /// Training output directories.
        runs: Vec<PathBuf>,
        /// Partition output directories.
        #[arg(long = "partition", value_name = "DIR")]
        partitions: Vec<PathBuf>,
        /// Directory for CSV copies of the tables.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn load(args: &ConfigArgs, flags: Vec<String>) -> anyhow::Result<RunConfig> {
    let mut overrides = args.overrides.clone();
    overrides.extend(flags);
    RunConfig::load(args.config.as_deref(), &overrides)
}

fn flag<T: std::fmt::Display>(key: &str, value: Option<T>) -> Option<String> {
    value.map(|v| format!("{key}={v}"))
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Gen { cfg, out, seed } => {
            let cfg = load(&cfg, flag("datagen.seed", seed).into_iter().collect())?;
            commands::gen(&cfg, &out)
        }
        Command::Partition {
            cfg,
            dataset,
            out,
            scheme,
            num_parts,
            c,
            fanout_k,
            epsilon,
            seed,
        } => {
            let scheme = scheme.map(|s| match s {
                Scheme::Unit => "unit",
                Scheme::Ew => "ew",
            });
            let flags = [
                flag("partitioner.scheme", scheme),
                flag("partitioner.num_parts", num_parts),
                flag("partitioner.c", c.map(|c| format!("{c:?}"))),
                flag("partitioner.fanout_k", fanout_k),
                flag("partitioner.imbalance_epsilon", epsilon.map(|e| format!("{e:?}"))),
                flag("partitioner.seed", seed),
            ];
            let cfg = load(&cfg, flags.into_iter().flatten().collect())?;
            commands::partition_cmd(&cfg, &dataset, &out).map(drop)
        }
        Command::Train {
            cfg,
            dataset,
            assignment,
            out,
            num_workers,
            baseline,
        } => {
            let cfg = load(&cfg, flag("trainer.num_workers", num_workers).into_iter().collect())?;
            commands::train_cmd(&cfg, &dataset, &assignment, baseline, &out).map(drop)
        }
        Command::Report { runs, partitions, out } => {
            if runs.is_empty() && partitions.is_empty() {
                return Err(ConfigError("report needs at least one run or --partition directory".into()).into());
            }
            commands::report_cmd(&runs, &partitions, out.as_deref())
        }
    }
}

/// 2 for bad input, 3 for everything else.
fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.downcast_ref::<ConfigError>().is_some() {
            return 2;
        }
        if let Some(e) = cause.downcast_ref::<entropart::Error>() {
            return if e.is_validation() { 2 } else { 3 };
        }
    }
    3
}

/// The error chain joined by `: `, skipping causes already spelled out by
/// the message before them.
fn message(err: &anyhow::Error) -> String {
    let mut msg = err.to_string();
    for cause in err.chain().skip(1) {
        let text = cause.to_string();
        if !msg.contains(&text) {
            msg.push_str(": ");
            msg.push_str(&text);
        }
    }
    msg
}

fn configure_threads() -> anyhow::Result<()> {
    let Ok(raw) = std::env::var("ENTROPART_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| ConfigError(format!("ENTROPART_THREADS must be a positive integer, got {raw:?}")))?;
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match configure_threads().and_then(|()| run(cli)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", message(&e));
            ExitCode::from(exit_code(&e))
        }
    }
}
