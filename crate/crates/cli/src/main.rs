//! `crisisclass`: preprocess tweets, build vocabularies, train and evaluate
//! CNN / Bi-LSTM crisis classifiers, classify new tweets and run the
//! gradient self-check.
//!
//! Exit codes: 0 success, 1 verification or runtime failure, 2 configuration
//! or input error, 3 integrity error.

mod commands;
mod config;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::config::RunConfig;
use crate::error::CliResult;

#[derive(Debug, Parser)]
#[command(name = "crisisclass", version, about = "Crisis tweet classification toolkit", args_override_self = true)]
struct Cli {
    #[command(flatten)]
    shared: Shared,
    #[command(subcommand)]
    command: Command,
}

/// Flags accepted by every command. Each one shadows the matching key of the
/// config file.
#[derive(Debug, Args)]
struct Shared {
    /// Flat `key = value` config file.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<String>,
    #[arg(long, global = true, value_parser = ["cnn", "bilstm"])]
    arch: Option<String>,
    /// Pretrained word vectors.
    #[arg(long, global = true, value_name = "PATH")]
    embedding: Option<String>,
    #[arg(long, global = true, value_parser = ["headerless", "headered"])]
    embedding_format: Option<String>,
    #[arg(long, global = true)]
    embedding_dim: Option<String>,
    /// Update the embedding matrix during training.
    #[arg(long, global = true, value_parser = ["true", "false"])]
    fine_tune: Option<String>,
    #[arg(long, global = true)]
    epochs: Option<String>,
    #[arg(long, global = true)]
    batch_size: Option<String>,
    #[arg(long, global = true)]
    keep_prob: Option<String>,
    #[arg(long, global = true)]
    seq_len: Option<String>,
    /// Output directory.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<String>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Clean a corpus TSV and write `<name>.clean.tsv` to the output directory.
    Preprocess {
        input: PathBuf,
    },
    /// Build `vocab.txt` from the cleaned train split.
    BuildVocab {
        #[arg(long, value_name = "PATH")]
        train: Option<String>,
        #[arg(long)]
        min_count: Option<String>,
    },
    /// Train a model and write the checkpoint, history, reports and manifest.
    Train {
        #[arg(long, value_name = "PATH")]
        train: Option<String>,
        #[arg(long, value_name = "PATH")]
        dev: Option<String>,
        /// Optional held-out split, reported after training.
        #[arg(long, value_name = "PATH")]
        test: Option<String>,
        /// Use this vocabulary instead of building one.
        #[arg(long, value_name = "PATH")]
        vocab: Option<String>,
        #[arg(long, value_parser = ["sgd", "adam"])]
        optimizer: Option<String>,
        #[arg(long)]
        learning_rate: Option<String>,
        #[arg(long, value_parser = ["local", "global"])]
        pooling: Option<String>,
        #[arg(long, value_parser = ["true", "false"])]
        keep_best: Option<String>,
        #[arg(long)]
        clip_norm: Option<String>,
        #[arg(long)]
        tag: Option<String>,
    },
    /// Score a checkpoint on a labelled TSV.
    Eval {
        #[arg(long, value_name = "PATH")]
        checkpoint: PathBuf,
        #[arg(long, value_name = "PATH")]
        data: PathBuf,
        /// Defaults to `vocab.txt` next to the checkpoint.
        #[arg(long, value_name = "PATH")]
        vocab: Option<PathBuf>,
        /// Leave the irrelevant class out of the macro and weighted averages.
        #[arg(long)]
        exclude_irrelevant: bool,
    },
    /// Classify one tweet per stdin line, printing `class_key<TAB>prob`.
    Predict {
        #[arg(long, value_name = "PATH")]
        checkpoint: PathBuf,
        /// Defaults to `vocab.txt` next to the checkpoint.
        #[arg(long, value_name = "PATH")]
        vocab: Option<PathBuf>,
    },
    /// Run the gradient checks and oracles.
    Selfcheck {
        #[arg(long, default_value_t = 20)]
        seeds: u64,
    },
}

fn resolve(shared: Shared, extra: &[(&str, Option<String>)]) -> CliResult<RunConfig> {
    let mut cfg = RunConfig::defaults();
    if let Some(path) = &shared.config {
        cfg.apply_file(path)?;
    }
    cfg.apply_env();
    let flags = [
        ("seed", shared.seed),
        ("arch", shared.arch),
        ("embedding", shared.embedding),
        ("embedding_format", shared.embedding_format),
        ("embedding_dim", shared.embedding_dim),
        ("fine_tune", shared.fine_tune),
        ("epochs", shared.epochs),
        ("batch_size", shared.batch_size),
        ("keep_prob", shared.keep_prob),
        ("seq_len", shared.seq_len),
        ("out", shared.out),
    ];
    for (k, v) in flags {
        cfg.apply_flag(k, v);
    }
    for (k, v) in extra {
        cfg.apply_flag(k, v.clone());
    }
    Ok(cfg)
}

fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Preprocess { input } => commands::preprocess(&resolve(cli.shared, &[])?, &input),
        Command::BuildVocab { train, min_count } => {
            commands::build_vocab(&resolve(cli.shared, &[("train", train), ("min_count", min_count)])?)
        }
        Command::Train {
            train,
            dev,
            test,
            vocab,
            optimizer,
            learning_rate,
            pooling,
            keep_best,
            clip_norm,
            tag,
        } => {
            let cfg = resolve(
                cli.shared,
                &[
                    ("train", train),
                    ("dev", dev),
                    ("test", test),
                    ("vocab", vocab),
                    ("optimizer", optimizer),
                    ("learning_rate", learning_rate),
                    ("pooling", pooling),
                    ("keep_best", keep_best),
                    ("clip_norm", clip_norm),
                    ("tag", tag),
                ],
            )?;
            commands::train(cfg)
        }
        Command::Eval {
            checkpoint,
            data,
            vocab,
            exclude_irrelevant,
        } => commands::eval(
            &resolve(cli.shared, &[])?,
            &checkpoint,
            &data,
            vocab.as_deref(),
            exclude_irrelevant,
        ),
        Command::Predict { checkpoint, vocab } => {
            commands::predict(&resolve(cli.shared, &[])?, &checkpoint, vocab.as_deref())
        }
        Command::Selfcheck { seeds } => commands::selfcheck(seeds),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            e.exit_code()
        }
    }
}
