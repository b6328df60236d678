//! `murate`: rate, mix, train, score and select from the command line.
//!
//! Every stage reads and writes plain files, so any stage can be re-run or
//! inspected on its own. Exit status is 0 on success, 1 on failure and 2 on
//! a usage error.

mod commands;
mod config;
mod output;

use std::io::IsTerminal;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use murate::Backend;
use tracing_subscriber::EnvFilter;

use commands::{Provider, Ratio};
use config::{RunConfig, TrainOverrides};

#[derive(Parser, Debug)]
#[command(name = "murate", version, about = "Pairwise multilingual quality rating and token-budget data selection")]
struct Cli {
    /// Flat `key = value` configuration file; flags take precedence over it.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    /// Only log warnings and errors.
    #[arg(short, long, global = true)]
    quiet: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Aggregate per-rater scores into pairwise preference judgments.
    Aggregate {
        /// Rater score file, JSON Lines {rater_id, doc_id, score}. Repeatable.
        #[arg(long = "scores", value_name = "FILE")]
        scores: Vec<PathBuf>,
        /// Directional vote file, JSON Lines {rater_id, doc_a, doc_b, votes_a, votes_b, order}. Repeatable.
        #[arg(long = "directional", value_name = "FILE")]
        directional: Vec<PathBuf>,
        /// Pairs to judge: one `doc_a doc_b` per line (comma, tab or space separated).
        #[arg(long, value_name = "FILE")]
        pairs: PathBuf,
        /// Output judgment file (JSON Lines).
        #[arg(long, value_name = "FILE")]
        out: PathBuf,
    },
    /// Project English judgments into a multilingual training mix.
    BuildPairs {
        /// English judgment file.
        #[arg(long, value_name = "FILE")]
        judgments: PathBuf,
        /// Corpus holding every document the judgments reference.
        #[arg(long, value_name = "FILE")]
        corpus: PathBuf,
        /// Comma-separated target languages, e.g. `ar,de,ja`.
        #[arg(long, value_name = "LIST")]
        languages: Option<String>,
        /// `default` (75000:150000:150000:75000) or `english:monolingual:crosslingual:parallel`.
        #[arg(long, default_value = "default", value_parser = commands::parse_ratio)]
        ratio: Ratio,
        /// Multiplier applied to every ratio entry; counts are rounded.
        #[arg(long, default_value_t = 1.0)]
        scale: f64,
        /// Translation provider: `pseudo:<seed>` or `file:<path>`.
        #[arg(long, default_value = "pseudo:0", value_parser = commands::parse_provider)]
        provider: Provider,
        /// Sampling seed (falls back to the config file, then MURATE_SEED, then 0).
        #[arg(long)]
        seed: Option<u64>,
        /// Output judgment file for the mix.
        #[arg(long, value_name = "FILE")]
        out_pairs: PathBuf,
        /// Output corpus with every document the mix references.
        #[arg(long, value_name = "FILE")]
        out_corpus: PathBuf,
    },
    /// Train a scorer on margin-filtered judgments.
    Train {
        /// Training judgments.
        #[arg(long, value_name = "FILE")]
        pairs: PathBuf,
        /// Corpus holding every judged document.
        #[arg(long, value_name = "FILE")]
        corpus: PathBuf,
        /// Output checkpoint.
        #[arg(long, value_name = "FILE")]
        out: PathBuf,
        /// Run log: a configuration line followed by one JSON line per epoch.
        #[arg(long, value_name = "FILE")]
        log: Option<PathBuf>,
        #[command(flatten)]
        hyper: TrainFlags,
    },
    /// Score every document of a corpus.
    Score {
        #[arg(long, value_name = "FILE")]
        checkpoint: PathBuf,
        #[arg(long, value_name = "FILE")]
        corpus: PathBuf,
        /// Output scored file, JSON Lines {doc_id, lang, score, token_count}.
        #[arg(long, value_name = "FILE")]
        out: PathBuf,
        /// Scoring threads; output does not depend on this.
        #[arg(long, value_parser = clap::value_parser!(u32).range(1..))]
        workers: Option<u32>,
        /// Refuse a hashed checkpoint trained with a different feature width.
        #[arg(long)]
        hash_bits: Option<u32>,
    },
    /// Select the top-scored documents up to a token budget.
    Select {
        /// Scored file from `murate score`.
        #[arg(long, value_name = "FILE")]
        scored: PathBuf,
        /// Fraction of tokens to keep, in (0, 1]. Default 0.10.
        #[arg(long, value_parser = parse_fraction)]
        fraction: Option<f64>,
        /// One budget over all languages instead of one per language.
        #[arg(long)]
        global: bool,
        /// Checkpoint whose digest is recorded in the manifest.
        #[arg(long, value_name = "FILE")]
        checkpoint: Option<PathBuf>,
        /// Output manifest (JSON).
        #[arg(long, value_name = "FILE")]
        out: PathBuf,
    },
    /// Consistency reports.
    Diagnose {
        #[command(subcommand)]
        report: DiagnoseCommand,
    },
}

#[derive(Args, Debug)]
struct TrainFlags {
    /// `latent_table` or `hashed_linear` (default).
    #[arg(long, value_parser = parse_backend)]
    backend: Option<Backend>,
    /// Weight of the parallel-pair term.
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    epochs: Option<u32>,
    #[arg(long)]
    batch_size: Option<u32>,
    /// Confidence margin |2p - 1| a non-parallel pair needs to be trained on.
    #[arg(long)]
    margin: Option<f64>,
    /// Shuffling seed (falls back to the config file, then MURATE_SEED, then 0).
    #[arg(long)]
    seed: Option<u64>,
    /// Feature table size is 2^hash_bits (hashed_linear only).
    #[arg(long)]
    hash_bits: Option<u32>,
    #[arg(long)]
    max_tokens_per_doc: Option<u32>,
}

#[derive(Args, Debug)]
struct ReportOutput {
    /// Write the JSON report here instead of stdout.
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
    /// Also write a flat CSV table.
    #[arg(long, value_name = "FILE")]
    csv: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum DiagnoseCommand {
    /// Regress scores of parallel documents in two languages.
    Parallel {
        /// Scored file holding both languages; documents pair up by source id.
        #[arg(long, value_name = "FILE")]
        scored: PathBuf,
        #[arg(long)]
        lang_x: String,
        #[arg(long)]
        lang_y: String,
        #[command(flatten)]
        output: ReportOutput,
    },
    /// Kendall tau matrix between scored files of the same documents.
    Tau {
        /// `label=path` or a bare path labelled by its file stem. Repeat at least twice.
        #[arg(long = "scored", value_name = "[LABEL=]FILE")]
        scored: Vec<String>,
        /// Restrict to documents in one language.
        #[arg(long)]
        lang: Option<String>,
        #[command(flatten)]
        output: ReportOutput,
    },
    /// Held-in and held-out pairwise accuracy at margins 0.5 and 0.8.
    Accuracy {
        #[arg(long, value_name = "FILE")]
        checkpoint: PathBuf,
        #[arg(long, value_name = "FILE")]
        corpus: PathBuf,
        #[arg(long, value_name = "FILE")]
        held_in: PathBuf,
        #[arg(long, value_name = "FILE")]
        held_out: PathBuf,
        #[command(flatten)]
        output: ReportOutput,
    },
}

fn parse_fraction(s: &str) -> Result<f64, String> {
    let f: f64 = s.parse().map_err(|_| format!("`{s}` is not a number"))?;
    if f > 0.0 && f <= 1.0 {
        Ok(f)
    } else {
        Err(format!("fraction must lie in (0, 1], got {s}"))
    }
}

fn parse_backend(s: &str) -> Result<Backend, String> {
    s.parse().map_err(|e: murate::Error| e.to_string())
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let config = RunConfig::load(cli.config.as_deref())?;
    match cli.command {
        Command::Aggregate { scores, directional, pairs, out } => commands::aggregate(commands::AggregateArgs {
            scores: &scores,
            directional: &directional,
            pairs: &pairs,
            out: &out,
        }),
        Command::BuildPairs { judgments, corpus, languages, ratio, scale, provider, seed, out_pairs, out_corpus } => {
            commands::build_pairs(
                commands::BuildPairsArgs {
                    judgments: &judgments,
                    corpus: &corpus,
                    languages: languages.as_deref(),
                    ratio,
                    scale,
                    provider: &provider,
                    seed,
                    out_pairs: &out_pairs,
                    out_corpus: &out_corpus,
                },
                &config,
            )
        }
        Command::Train { pairs, corpus, out, log, hyper } => commands::train_cmd(
            commands::TrainArgs {
                pairs: &pairs,
                corpus: &corpus,
                out: &out,
                log: log.as_deref(),
                overrides: TrainOverrides {
                    backend: hyper.backend,
                    lambda: hyper.lambda,
                    learning_rate: hyper.learning_rate,
                    epochs: hyper.epochs,
                    batch_size: hyper.batch_size,
                    margin: hyper.margin,
                    seed: hyper.seed,
                    hash_bits: hyper.hash_bits,
                    max_tokens_per_doc: hyper.max_tokens_per_doc,
                },
            },
            &config,
        ),
        Command::Score { checkpoint, corpus, out, workers, hash_bits } => {
            let workers = workers.map(|w| w as usize).or(config.workers).unwrap_or(1).max(1);
            commands::score_cmd(&checkpoint, &corpus, &out, workers, hash_bits.or(config.hash_bits))
        }
        Command::Select { scored, fraction, global, checkpoint, out } => {
            let fraction = match fraction.or(config.fraction).unwrap_or(0.10) {
                f if f > 0.0 && f <= 1.0 => f,
                f => anyhow::bail!("fraction must lie in (0, 1], got {f}"),
            };
            commands::select_cmd(&scored, fraction, global, checkpoint.as_deref(), &out)
        }
        Command::Diagnose { report } => {
            let (report, output) = match report {
                DiagnoseCommand::Parallel { scored, lang_x, lang_y, output } => {
                    (commands::parallel_report(&scored, &lang_x, &lang_y)?, output)
                }
                DiagnoseCommand::Tau { scored, lang, output } => (commands::tau_report(&scored, lang.as_deref())?, output),
                DiagnoseCommand::Accuracy { checkpoint, corpus, held_in, held_out, output } => {
                    (commands::accuracy_report(&checkpoint, &corpus, &held_in, &held_out)?, output)
                }
            };
            commands::emit_report(&report, output.out.as_deref(), output.csv.as_deref())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let default_level = if cli.quiet { "warn" } else { "info" };
    tracing_subscriber::fmt()
        .with_env_filter(EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new(default_level)))
        .with_writer(std::io::stderr)
        .with_ansi(std::io::stderr().is_terminal())
        .with_target(false)
        .init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
