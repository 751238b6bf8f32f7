//! `clfmetrics`: evaluate and compare multi-class classifiers.
//!
//! Exit codes: 0 success, 2 input error, 3 usage error.

use std::io::{IsTerminal, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand, ValueEnum};

use clfmetrics::ingest::{self, ProbReader};
use clfmetrics::metrics::UndefinedReason;
use clfmetrics::proba::{XentAccumulator, DEFAULT_EPSILON};
use clfmetrics::{
    Averaging, ComparisonReport, ConfusionMatrix, Delimiter, EvalOptions, EvaluationReport,
    IngestError, MetricValue, ReadOptions, Reduction, ReportOptions, Tally, WeightsSource,
    XentOptions,
};

const EXIT_INPUT: u8 = 2;
const EXIT_USAGE: u8 = 3;

#[derive(Parser)]
#[command(
    name = "clfmetrics",
    version,
    about = "Multi-class classification metrics"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compute every metric for one model.
    Evaluate {
        /// Input file.
        input: PathBuf,
        #[arg(long, value_enum, default_value_t = Kind::Labels)]
        kind: Kind,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Compare two models, possibly on different datasets.
    Compare {
        a: PathBuf,
        b: PathBuf,
        /// Input kind for both sides.
        #[arg(long, value_enum, default_value_t = Kind::Labels)]
        kind: Kind,
        /// Overrides `--kind` for A.
        #[arg(long, value_enum)]
        kind_a: Option<Kind>,
        /// Overrides `--kind` for B.
        #[arg(long, value_enum)]
        kind_b: Option<Kind>,
        #[command(flatten)]
        common: CommonArgs,
    },
}

#[derive(Args)]
struct CommonArgs {
    #[arg(long, value_enum, default_value_t = Format::Text)]
    format: Format,
    /// `class,weight` CSV for the weighted balanced accuracy
    /// (default: actual-class frequencies).
    #[arg(long)]
    weights: Option<PathBuf>,
    /// Macro averages skip undefined classes instead of becoming undefined.
    #[arg(long)]
    lenient: bool,
    /// Cross-entropy reduction (probability input only).
    #[arg(long, value_enum)]
    reduce: Option<ReduceArg>,
    /// Clipping floor for log, in (0, 1e-6] (probability input only).
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long, value_enum, default_value_t = DelimiterArg::Comma)]
    delimiter: DelimiterArg,
    /// Label files start with a header row (default: detect `actual,predicted`).
    #[arg(long)]
    header: bool,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Kind {
    Labels,
    Probs,
    Matrix,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Text,
    Json,
}

#[derive(Clone, Copy, ValueEnum)]
enum ReduceArg {
    Mean,
    Sum,
}

#[derive(Clone, Copy, ValueEnum)]
enum DelimiterArg {
    Comma,
    Tab,
}

enum CliError {
    Usage(String),
    Input(String),
}

impl CliError {
    fn input(side: Option<&str>, path: &Path, e: impl std::fmt::Display) -> Self {
        let tag = side.map(|s| format!("[{s}] ")).unwrap_or_default();
        Self::Input(format!("{tag}{}: {e}", path.display()))
    }
}

/// Settings shared by both sides of a comparison.
struct Settings {
    read: ReadOptions,
    averaging: Averaging,
    xent: Option<XentOptions>,
    weights: Option<PathBuf>,
}

impl Settings {
    fn from_args(args: &CommonArgs, kinds: &[Kind]) -> Result<Self, CliError> {
        let uses_probs = kinds.contains(&Kind::Probs);
        if !uses_probs && (args.reduce.is_some() || args.epsilon.is_some()) {
            return Err(CliError::Usage(
                "--reduce and --epsilon apply to --kind probs only".into(),
            ));
        }
        let xent = if uses_probs {
            let reduce = match args.reduce {
                Some(ReduceArg::Sum) => Reduction::Sum,
                _ => Reduction::Mean,
            };
            let opts = XentOptions::new(args.epsilon.unwrap_or(DEFAULT_EPSILON), reduce)
                .map_err(|e| CliError::Usage(e.to_string()))?;
            Some(opts)
        } else {
            None
        };
        Ok(Self {
            read: ReadOptions {
                delimiter: match args.delimiter {
                    DelimiterArg::Comma => Delimiter::Comma,
                    DelimiterArg::Tab => Delimiter::Tab,
                },
                has_header: args.header.then_some(true),
            },
            averaging: if args.lenient {
                Averaging::Lenient
            } else {
                Averaging::Strict
            },
            xent,
            weights: args.weights.clone(),
        })
    }
}

fn load(
    path: &Path,
    kind: Kind,
    settings: &Settings,
    side: Option<&str>,
) -> Result<EvaluationReport, CliError> {
    let err = |e: IngestError| CliError::input(side, path, e);
    let (matrix, xent) = match kind {
        Kind::Matrix => (ingest::read_matrix(path, settings.read).map_err(err)?, None),
        Kind::Labels => (
            ingest::tally_labels(path, settings.read, None).map_err(err)?,
            None,
        ),
        Kind::Probs => {
            let opts = settings.xent.expect("probability settings");
            let (m, x) = stream_probs(path, settings.read, opts).map_err(err)?;
            (m, Some(x))
        }
    };

    let (weights, source) = match &settings.weights {
        Some(p) => {
            let w = ingest::read_weights(p, settings.read, matrix.registry())
                .map_err(|e| CliError::input(side, p, e))?;
            (Some(w), WeightsSource::File(p.display().to_string()))
        }
        None => (None, WeightsSource::Frequency),
    };
    let mut options = ReportOptions {
        averaging: settings.averaging,
        weights: source,
        ..Default::default()
    };
    if let Some(x) = &settings.xent {
        if kind == Kind::Probs {
            options = options.with_xent(x);
        }
    }
    let eval = EvalOptions {
        averaging: settings.averaging,
        weights,
    };
    let mut report =
        EvaluationReport::from_matrix(path.display().to_string(), &matrix, &eval, options)
            .map_err(|e| CliError::input(side, path, e))?;
    report.cross_entropy = xent;
    Ok(report)
}

/// Single pass over a probability file: cross-entropy and hardened tally.
fn stream_probs(
    path: &Path,
    read: ReadOptions,
    opts: XentOptions,
) -> Result<(ConfusionMatrix, MetricValue), IngestError> {
    let reader = ProbReader::open(path, read)?;
    let mut tally = Tally::new(reader.registry().clone());
    let mut xent = XentAccumulator::new(opts);
    for record in reader {
        let r = record?;
        tally.record(r.true_class(), r.predicted_class())?;
        xent.push(&r).expect("records share the header's classes");
    }
    let value = match xent.finish() {
        Ok(x) => MetricValue::from_f64(x),
        Err(_) => MetricValue::Undefined(UndefinedReason::EmptyDenominator),
    };
    Ok((tally.finish(), value))
}

fn use_color() -> bool {
    std::env::var_os("CLFMETRICS_NO_COLOR").is_none() && std::io::stdout().is_terminal()
}

fn run(cli: Cli) -> Result<String, CliError> {
    match cli.command {
        Command::Evaluate {
            input,
            kind,
            common,
        } => {
            let settings = Settings::from_args(&common, &[kind])?;
            let report = load(&input, kind, &settings, None)?;
            Ok(match common.format {
                Format::Text => report.to_text(),
                Format::Json => report.to_json(),
            })
        }
        Command::Compare {
            a,
            b,
            kind,
            kind_a,
            kind_b,
            common,
        } => {
            let (ka, kb) = (kind_a.unwrap_or(kind), kind_b.unwrap_or(kind));
            let settings = Settings::from_args(&common, &[ka, kb])?;
            let ra = load(&a, ka, &settings, Some("A"))?;
            let rb = load(&b, kb, &settings, Some("B"))?;
            let cmp = ComparisonReport::new(ra, rb);
            Ok(match common.format {
                Format::Text => cmp.to_text(use_color()),
                Format::Json => cmp.to_json(),
            })
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(EXIT_USAGE),
            };
        }
    };
    match run(cli) {
        Ok(out) => {
            let mut stdout = std::io::stdout().lock();
            if stdout
                .write_all(out.as_bytes())
                .and_then(|_| stdout.flush())
                .is_err()
            {
                return ExitCode::FAILURE;
            }
            ExitCode::SUCCESS
        }
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_USAGE)
        }
        Err(CliError::Input(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_INPUT)
        }
    }
}
