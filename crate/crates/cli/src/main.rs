use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use reasoncheck::classifiers::Algorithm;
use reasoncheck::corpus::CorpusFormat;
use reasoncheck::eval::{SliceDimension, DEFAULT_N_BOOT};
use reasoncheck::pipeline::{
    self, EvalOptions, LinguisticsOptions, SplitOptions, TrainOptions, TriageOptions, DEFAULT_SEED,
    DEFAULT_TAU, DEFAULT_TEST_FRACTION,
};
use reasoncheck::router::MIN_SPECIALIST_SIZE;
use reasoncheck::textfeat::DEFAULT_MAX_FEATURES;
use reasoncheck::{Error, Result};

const OUTPUT_DIR_ENV: &str = "REASONCHECK_OUTPUT_DIR";

/// Verify LLM annotation rationales with lexical classifiers.
#[derive(Parser)]
#[command(name = "reasoncheck", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Stratified train/test split of an annotation corpus.
    Split {
        #[command(flatten)]
        io: InputArgs,
        #[command(flatten)]
        out: OutputArgs,
        #[arg(long, default_value_t = DEFAULT_SEED)]
        seed: u64,
        #[arg(long, default_value_t = DEFAULT_TEST_FRACTION)]
        test_fraction: f64,
    },
    /// Train one classifier, all five, or a specialist ensemble.
    Train {
        #[command(flatten)]
        io: InputArgs,
        #[command(flatten)]
        out: OutputArgs,
        #[arg(long, default_value_t = DEFAULT_SEED)]
        seed: u64,
        #[arg(long, default_value = "random-forest", value_parser = parse_algorithm)]
        algorithm: Algorithm,
        /// Train all five algorithms.
        #[arg(long, conflicts_with = "specialists")]
        all: bool,
        /// Train specialists for the K largest constructs plus a generalist.
        #[arg(long, value_name = "K")]
        specialists: Option<usize>,
        /// Random forest size.
        #[arg(long)]
        trees: Option<usize>,
        #[arg(long, default_value_t = DEFAULT_MAX_FEATURES)]
        max_features: usize,
        #[arg(long, default_value_t = MIN_SPECIALIST_SIZE)]
        min_specialist_size: usize,
    },
    /// Evaluate trained artifacts on a held-out corpus.
    Eval {
        #[command(flatten)]
        io: InputArgs,
        #[command(flatten)]
        out: OutputArgs,
        #[arg(long)]
        model_dir: PathBuf,
        #[arg(long, default_value_t = DEFAULT_N_BOOT)]
        n_boot: usize,
        #[arg(long, default_value_t = DEFAULT_SEED)]
        seed: u64,
        /// Extra report slices: algorithm, source_model, construct, served_by.
        #[arg(long = "slice", value_name = "DIMENSION")]
        slices: Vec<String>,
    },
    /// Marker densities, group comparisons and length statistics.
    Linguistics {
        #[command(flatten)]
        io: InputArgs,
        #[command(flatten)]
        out: OutputArgs,
        /// Lexicon file; the built-in marker lexicon when omitted.
        #[arg(long)]
        lexicon: Option<PathBuf>,
        #[arg(long, default_value_t = DEFAULT_N_BOOT)]
        n_boot: usize,
        #[arg(long, default_value_t = DEFAULT_SEED)]
        seed: u64,
    },
    /// Stream accept/flag decisions for unlabeled annotations.
    Triage {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        model_dir: PathBuf,
        #[arg(long, default_value_t = DEFAULT_TAU)]
        tau: f64,
        /// Model to use from a multi-model directory.
        #[arg(long, value_parser = parse_algorithm)]
        algorithm: Option<Algorithm>,
        /// Decisions file; standard output when omitted.
        #[arg(long)]
        output: Option<PathBuf>,
        #[arg(long, default_value_t = 1024)]
        chunk_size: usize,
        /// Write the run summary here instead of standard error.
        #[arg(long)]
        summary: Option<PathBuf>,
    },
}

#[derive(Args)]
struct InputArgs {
    #[arg(long)]
    input: PathBuf,
    /// jsonl or csv; guessed from the extension when omitted.
    #[arg(long, value_parser = parse_format)]
    format: Option<CorpusFormat>,
}

#[derive(Args)]
struct OutputArgs {
    #[arg(long, env = OUTPUT_DIR_ENV, default_value = "reasoncheck-out")]
    output_dir: PathBuf,
    /// Write the run summary here instead of standard output.
    #[arg(long)]
    summary: Option<PathBuf>,
}

fn parse_algorithm(s: &str) -> std::result::Result<Algorithm, String> {
    s.parse::<Algorithm>().map_err(|e| e.to_string())
}

fn parse_format(s: &str) -> std::result::Result<CorpusFormat, String> {
    s.parse::<CorpusFormat>().map_err(|e| e.to_string())
}

fn emit_summary<T: serde::Serialize>(summary: &T, path: Option<&Path>) -> Result<()> {
    match path {
        Some(p) => reasoncheck::artifact::write_json(p, summary),
        None => {
            println!("{}", serde_json::to_string_pretty(summary)?);
            Ok(())
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Split { io, out, seed, test_fraction } => {
            let opts = SplitOptions {
                input: io.input,
                format: io.format,
                output_dir: out.output_dir,
                seed,
                test_fraction,
            };
            emit_summary(&pipeline::run_split(&opts)?, out.summary.as_deref())
        }
        Command::Train { io, out, seed, algorithm, all, specialists, trees, max_features, min_specialist_size } => {
            let opts = TrainOptions {
                format: io.format,
                seed,
                algorithm,
                all,
                specialists,
                trees,
                max_features,
                min_specialist_size,
                ..TrainOptions::new(io.input, out.output_dir)
            };
            let summary = pipeline::run_train(&opts)?;
            for w in &summary.warnings {
                eprintln!("warning: {w}");
            }
            emit_summary(&summary, out.summary.as_deref())
        }
        Command::Eval { io, out, model_dir, n_boot, seed, slices } => {
            let slices = slices.iter().map(|s| s.parse::<SliceDimension>()).collect::<Result<Vec<_>>>()?;
            let opts = EvalOptions {
                input: io.input,
                format: io.format,
                model_dir,
                output_dir: out.output_dir,
                n_boot,
                seed,
                slices,
            };
            let output = pipeline::run_eval(&opts)?;
            emit_summary(&output.benchmark, out.summary.as_deref())
        }
        Command::Linguistics { io, out, lexicon, n_boot, seed } => {
            let opts = LinguisticsOptions {
                input: io.input,
                format: io.format,
                lexicon,
                output_dir: out.output_dir,
                n_boot,
                seed,
            };
            let output = pipeline::run_linguistics(&opts)?;
            emit_summary(&output.comparisons, out.summary.as_deref())
        }
        Command::Triage { input, model_dir, tau, algorithm, output, chunk_size, summary } => {
            let opts = TriageOptions { input, model_dir, tau, algorithm, chunk_size };
            let result = match &output {
                Some(path) => {
                    let file = File::create(path).map_err(|e| Error::Io { path: path.clone(), source: e })?;
                    let mut writer = BufWriter::new(file);
                    let s = pipeline::run_triage(&opts, &mut writer)?;
                    writer.flush().map_err(|e| Error::Io { path: path.clone(), source: e })?;
                    s
                }
                None => {
                    let stdout = io::stdout();
                    let mut lock = BufWriter::new(stdout.lock());
                    let s = pipeline::run_triage(&opts, &mut lock)?;
                    lock.flush().map_err(|e| Error::Io { path: "<stdout>".into(), source: e })?;
                    s
                }
            };
            match summary {
                Some(p) => reasoncheck::artifact::write_json(&p, &result),
                None => {
                    eprintln!("{}", serde_json::to_string(&result)?);
                    Ok(())
                }
            }
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
