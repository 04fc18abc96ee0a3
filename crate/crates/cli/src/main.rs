//! `srl`: batch front end for the semantic role labeling pipeline.

mod artifact;
mod commands;
mod config;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{ArgGroup, Parser, Subcommand};
use srl_core::sample_gen::PredicateMode;

use crate::commands::LabelSource;
use crate::config::{Layout, Overrides, RunConfig};
use crate::error::CliError;

#[derive(Parser)]
#[command(name = "srl", version, about = "Semantic role labeling from words and role labels")]
struct Cli {
    #[command(flatten)]
    overrides: Overrides,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Repair or drop defective sentences.
    Clean {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Counters and per-sentence action log.
        #[arg(long)]
        report: PathBuf,
        /// Same report as JSON.
        #[arg(long)]
        report_json: Option<PathBuf>,
        #[arg(long, value_enum)]
        layout: Option<Layout>,
    },
    /// Emit one sample per predicate as JSON lines.
    Prepare {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// verbs | all
        #[arg(long)]
        predicates: Option<PredicateMode>,
    },
    /// Tokenize and encode samples into fixed-length records.
    #[command(group(ArgGroup::new("labels").required(true).args(["labelmap", "new_labelmap"])))]
    Encode {
        #[arg(long)]
        samples: PathBuf,
        #[arg(long)]
        vocab: PathBuf,
        /// Existing label map.
        #[arg(long)]
        labelmap: Option<PathBuf>,
        /// Build a label map from these samples and write it here.
        #[arg(long)]
        new_labelmap: Option<PathBuf>,
        /// Sequence length; defaults to the longest sample.
        #[arg(long)]
        max_len: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a model on encoded data.
    Train {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        val: Option<PathBuf>,
        #[arg(long)]
        labelmap: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Per-epoch losses and validation F1 as JSON lines.
        #[arg(long)]
        log: Option<PathBuf>,
    },
    /// Label one whitespace-tokenized sentence.
    Predict {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        vocab: PathBuf,
        #[arg(long)]
        labelmap: PathBuf,
        #[arg(long)]
        sentence: String,
        /// 0-based index of the predicate word.
        #[arg(long)]
        predicate: usize,
    },
    /// Score a model on encoded data.
    Evaluate {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        labelmap: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// k-fold cross-validation over a sample file.
    Crossval {
        #[arg(long)]
        samples: PathBuf,
        #[arg(long)]
        vocab: PathBuf,
        /// Full report as JSON.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Permutation table.
        #[arg(long)]
        table: Option<PathBuf>,
    },
    /// Write a synthetic corpus and its vocabulary.
    Synth {
        #[arg(long, default_value_t = 200)]
        samples: usize,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        vocab_out: PathBuf,
    },
}

fn run(cli: Cli) -> Result<(), CliError> {
    let mut cfg = RunConfig::resolve(&cli.overrides)?;
    match cli.command {
        Command::Clean {
            input,
            out,
            report,
            report_json,
            layout,
        } => {
            if let Some(l) = layout {
                cfg.layout = l;
            }
            commands::clean(&cfg, &input, &out, &report, report_json.as_deref())
        }
        Command::Prepare {
            input,
            out,
            predicates,
        } => commands::prepare(&cfg, &input, &out, predicates),
        Command::Encode {
            samples,
            vocab,
            labelmap,
            new_labelmap,
            max_len,
            out,
        } => {
            let source = match (&labelmap, &new_labelmap) {
                (Some(p), _) => LabelSource::Existing(p),
                (None, Some(p)) => LabelSource::New(p),
                (None, None) => unreachable!("clap requires one label map flag"),
            };
            commands::encode(&cfg, &samples, &vocab, source, max_len, &out)
        }
        Command::Train {
            data,
            val,
            labelmap,
            out,
            log,
        } => commands::train_cmd(&cfg, &data, val.as_deref(), &labelmap, &out, log.as_deref()),
        Command::Predict {
            model,
            vocab,
            labelmap,
            sentence,
            predicate,
        } => {
            for (word, label) in commands::predict_cmd(&model, &vocab, &labelmap, &sentence, predicate)? {
                println!("{word}\t{label}");
            }
            Ok(())
        }
        Command::Evaluate {
            model,
            data,
            labelmap,
            out,
        } => {
            print!("{}", commands::evaluate(&cfg, &model, &data, &labelmap, out.as_deref())?);
            Ok(())
        }
        Command::Crossval {
            samples,
            vocab,
            out,
            table,
        } => {
            print!("{}", commands::crossval_cmd(&cfg, &samples, &vocab, out.as_deref(), table.as_deref())?);
            Ok(())
        }
        Command::Synth {
            samples,
            out,
            vocab_out,
        } => commands::synth(&cfg, samples, &out, &vocab_out),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("SRL_LOG", "warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
