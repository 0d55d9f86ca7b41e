use std::fs;
use std::io::{self, BufReader, Read, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use datareq::bounds::{bound_report, curves, FallbackError};
use datareq::learner::Corpus;
use datareq::report::{builtin_systems, parse_systems, summarize_systems, write_csv};
use datareq::{
    brute_force_expected_error, extract_bigram_instances, extract_window_instances, instance_stats,
    monte_carlo, report_bundle, tokenize, train_mode, validate_model, FallbackPolicy,
    ProcessorModel,
};

#[derive(Parser)]
#[command(
    name = "datareq",
    version,
    about = "Data-requirement bounds and simulation for bin/value learners"
)]
struct Cli {
    /// Seed for every randomized step.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Output path (stdout when absent).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,
    /// Worker threads for the parallel loops (rayon default when absent).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Subcommand)]
enum Command {
    /// Check a model file's probability invariants.
    Validate(ModelArgs),
    /// Every bound at one corpus size, as JSON.
    Bounds {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long)]
        m: u64,
        #[command(flatten)]
        fallback: FallbackArgs,
    },
    /// Bounds over a grid of corpus sizes.
    Curves {
        #[command(flatten)]
        model: ModelArgs,
        /// Comma-separated corpus sizes, or START:STOP:STEP.
        #[arg(long)]
        grid: String,
        #[command(flatten)]
        fallback: FallbackArgs,
    },
    /// Monte Carlo estimate of the mode learner's expected error.
    Simulate {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long)]
        m: usize,
        #[arg(long, default_value_t = 10_000)]
        trials: usize,
        #[command(flatten)]
        policy: PolicyArgs,
    },
    /// Exact expected error by enumerating every corpus.
    Oracle {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long)]
        m: usize,
        #[command(flatten)]
        policy: PolicyArgs,
    },
    /// Extract (bin, value) instances from raw text.
    Ingest {
        #[arg(long, value_enum, default_value = "bigram")]
        scheme: Scheme,
        #[arg(long, default_value_t = 10)]
        width: usize,
        /// Input text (stdin when absent).
        #[arg(long = "in")]
        input: Option<PathBuf>,
        /// Print instance statistics as JSON to stdout.
        #[arg(long)]
        stats: bool,
        /// Declared number of values for the slot count (default: values observed).
        #[arg(long)]
        values: Option<u64>,
    },
    /// Instances-per-slot accounting for surveyed systems.
    Summarize {
        /// Systems fixture (the bundled table when absent).
        #[arg(long)]
        fixture: Option<PathBuf>,
    },
    /// Bounds against Monte Carlo over a grid; `--out P` writes P.json and P.csv.
    Report {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long)]
        grid: String,
        #[arg(long, default_value_t = 10_000)]
        trials: usize,
        #[command(flatten)]
        policy: PolicyArgs,
    },
    /// Train the mode learner on a corpus TSV and export the learned map.
    Train {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long)]
        corpus: PathBuf,
        #[command(flatten)]
        policy: PolicyArgs,
    },
}

#[derive(Args)]
struct ModelArgs {
    #[arg(long)]
    model: PathBuf,
    /// Rescale probabilities to sum to one before validating.
    #[arg(long)]
    renormalize: bool,
}

#[derive(Args)]
struct PolicyArgs {
    /// uniform-random, fixed-default-value or global-mode.
    #[arg(long, default_value = "uniform-random")]
    policy: String,
    /// Value used by fixed-default-value.
    #[arg(long)]
    default_value: Option<String>,
}

#[derive(Args)]
struct FallbackArgs {
    /// Empty-bin error: the analytic error of --policy, or 1 when conservative.
    #[arg(long, value_enum, default_value = "policy")]
    fallback: FallbackKind,
    #[command(flatten)]
    policy: PolicyArgs,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum FallbackKind {
    Policy,
    Conservative,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Scheme {
    Bigram,
    Window,
}

enum Failure {
    Usage(anyhow::Error),
    Validation(anyhow::Error),
    BoundViolation(usize),
}

impl From<datareq::Error> for Failure {
    fn from(e: datareq::Error) -> Self {
        match e {
            datareq::Error::Io(_) | datareq::Error::InvalidArgument(_) => Failure::Usage(e.into()),
            _ => Failure::Validation(e.into()),
        }
    }
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Usage(e)
    }
}

type CmdResult = Result<(), Failure>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
        {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    }
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
        Err(Failure::Validation(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
        Err(Failure::BoundViolation(n)) => {
            eprintln!(
                "BOUND VIOLATION: {n} grid point(s) have mc_mean above corpus_bound + 3 stderr"
            );
            ExitCode::from(3)
        }
    }
}

fn run(cli: &Cli) -> CmdResult {
    let out = cli.out.as_deref();
    match &cli.command {
        Command::Validate(args) => {
            let model = read_model_unchecked(args)?;
            let violations = validate_model(&model);
            emit_json(out, &violations)?;
            if !violations.is_empty() {
                return Err(Failure::Validation(anyhow::anyhow!(
                    "{} violation(s)",
                    violations.len()
                )));
            }
        }
        Command::Bounds { model, m, fallback } => {
            let model = read_model(model)?;
            let fallback = fallback_error(fallback, &model)?;
            emit_json(out, &bound_report(&model, *m, &fallback))?;
        }
        Command::Curves {
            model,
            grid,
            fallback,
        } => {
            let model = read_model(model)?;
            let fallback = fallback_error(fallback, &model)?;
            let rows = curves(&model, &parse_grid(grid)?, &fallback);
            match cli.format.unwrap_or(Format::Csv) {
                Format::Csv => emit_csv(out, &rows)?,
                Format::Json => emit_json(out, &rows)?,
            }
        }
        Command::Simulate {
            model,
            m,
            trials,
            policy,
        } => {
            let model = read_model(model)?;
            let policy = parse_policy(policy, &model)?;
            emit_json(out, &monte_carlo(&model, *m, *trials, cli.seed, policy)?)?;
        }
        Command::Oracle { model, m, policy } => {
            let model = read_model(model)?;
            let policy = parse_policy(policy, &model)?;
            let expected_error = brute_force_expected_error(&model, *m, policy)?;
            #[derive(Serialize)]
            struct OracleOut<'a> {
                m: usize,
                policy: &'a str,
                expected_error: f64,
            }
            emit_json(
                out,
                &OracleOut {
                    m: *m,
                    policy: policy.name(),
                    expected_error,
                },
            )?;
        }
        Command::Ingest {
            scheme,
            width,
            input,
            stats,
            values,
        } => {
            let mut text = String::new();
            match input {
                Some(p) => {
                    text =
                        fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?
                }
                None => {
                    io::stdin()
                        .read_to_string(&mut text)
                        .context("reading stdin")?;
                }
            }
            let tokens = tokenize(&text);
            let labeled = match scheme {
                Scheme::Bigram => extract_bigram_instances(&tokens),
                Scheme::Window => extract_window_instances(&tokens, *width)?,
            };
            if *stats {
                let declared = values.unwrap_or(labeled.domain.num_values() as u64);
                let s = instance_stats(&labeled.corpus, &labeled.domain, declared)?;
                emit_json(None, &s)?;
                if let Some(path) = out {
                    write_with(Some(path), |w| labeled.corpus.write_tsv(&labeled.domain, w))?;
                }
            } else {
                write_with(out, |w| labeled.corpus.write_tsv(&labeled.domain, w))?;
            }
        }
        Command::Summarize { fixture } => {
            let entries = match fixture {
                Some(p) => parse_systems(
                    &fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?,
                )?,
                None => builtin_systems(),
            };
            let rows = summarize_systems(&entries)?;
            match cli.format.unwrap_or(Format::Json) {
                Format::Json => emit_json(out, &rows)?,
                Format::Csv => {
                    #[derive(Serialize)]
                    struct Flat<'a> {
                        name: &'a str,
                        training_source: &'a str,
                        m: f64,
                        #[serde(rename = "L")]
                        l: f64,
                        ratio: f64,
                        ratio_qualifier: &'static str,
                        accuracy: Option<f64>,
                    }
                    let flat: Vec<Flat> = rows
                        .iter()
                        .map(|r| Flat {
                            name: &r.name,
                            training_source: &r.training_source,
                            m: r.m,
                            l: r.l,
                            ratio: r.ratio,
                            ratio_qualifier: r.ratio_qualifier.symbol(),
                            accuracy: r.accuracy,
                        })
                        .collect();
                    emit_csv(out, &flat)?;
                }
            }
        }
        Command::Report {
            model,
            grid,
            trials,
            policy,
        } => {
            let model = read_model(model)?;
            let policy = parse_policy(policy, &model)?;
            let bundle = report_bundle(&model, &parse_grid(grid)?, *trials, cli.seed, policy)?;
            match out {
                Some(base) => {
                    emit_json(Some(&base.with_extension("json")), &bundle)?;
                    emit_csv(Some(&base.with_extension("csv")), &bundle.rows)?;
                }
                None => match cli.format.unwrap_or(Format::Json) {
                    Format::Json => emit_json(None, &bundle)?,
                    Format::Csv => emit_csv(None, &bundle.rows)?,
                },
            }
            if bundle.violations > 0 {
                return Err(Failure::BoundViolation(bundle.violations));
            }
        }
        Command::Train {
            model,
            corpus,
            policy,
        } => {
            let model = read_model(model)?;
            let policy = parse_policy(policy, &model)?;
            let file =
                fs::File::open(corpus).with_context(|| format!("opening {}", corpus.display()))?;
            let corpus = Corpus::read_tsv(BufReader::new(file), model.domain())?;
            let learned = train_mode(&corpus, model.domain(), policy, cli.seed)?;
            emit_json(out, &learned.to_export(model.domain()))?;
        }
    }
    Ok(())
}

fn read_model_unchecked(args: &ModelArgs) -> Result<ProcessorModel, Failure> {
    let text = fs::read_to_string(&args.model)
        .with_context(|| format!("reading {}", args.model.display()))?;
    let model = ProcessorModel::from_json_str(&text).map_err(|e| {
        Failure::Validation(
            anyhow::Error::new(e).context(format!("loading {}", args.model.display())),
        )
    })?;
    Ok(if args.renormalize {
        model.renormalized()
    } else {
        model
    })
}

/// Loads a model and refuses it unless every invariant holds.
fn read_model(args: &ModelArgs) -> Result<ProcessorModel, Failure> {
    let model = read_model_unchecked(args)?;
    let violations = validate_model(&model);
    if let Some(first) = violations.first() {
        return Err(Failure::Validation(anyhow::anyhow!(
            "{}: {} violation(s), first: {} ({})",
            args.model.display(),
            violations.len(),
            first.message,
            first.location
        )));
    }
    Ok(model)
}

fn parse_policy(args: &PolicyArgs, model: &ProcessorModel) -> Result<FallbackPolicy, Failure> {
    Ok(FallbackPolicy::parse(
        &args.policy,
        args.default_value.as_deref(),
        model.domain(),
    )?)
}

fn fallback_error(args: &FallbackArgs, model: &ProcessorModel) -> Result<FallbackError, Failure> {
    Ok(match args.fallback {
        FallbackKind::Conservative => FallbackError::Conservative,
        FallbackKind::Policy => FallbackError::Policy(parse_policy(&args.policy, model)?),
    })
}

fn parse_grid(text: &str) -> anyhow::Result<Vec<u64>> {
    let text = text.trim();
    let grid: Vec<u64> = if let Some((start, rest)) = text.split_once(':') {
        let (stop, step) = rest.split_once(':').unwrap_or((rest, "1"));
        let (start, stop, step): (u64, u64, u64) = (start.parse()?, stop.parse()?, step.parse()?);
        anyhow::ensure!(step > 0, "grid step must be positive");
        (start..=stop).step_by(step as usize).collect()
    } else {
        text.split(',')
            .map(|s| {
                s.trim()
                    .parse::<u64>()
                    .with_context(|| format!("bad grid entry {s:?}"))
            })
            .collect::<anyhow::Result<_>>()?
    };
    anyhow::ensure!(!grid.is_empty(), "empty grid");
    Ok(grid)
}

fn write_with<F>(path: Option<&Path>, f: F) -> Result<(), Failure>
where
    F: FnOnce(&mut dyn Write) -> datareq::Result<()>,
{
    match path {
        Some(p) => {
            let mut file = io::BufWriter::new(
                fs::File::create(p).with_context(|| format!("creating {}", p.display()))?,
            );
            f(&mut file)?;
            file.flush().context("flushing output")?;
        }
        None => {
            let stdout = io::stdout();
            let mut lock = stdout.lock();
            f(&mut lock)?;
        }
    }
    Ok(())
}

fn emit_json<T: Serialize + ?Sized>(path: Option<&Path>, value: &T) -> Result<(), Failure> {
    write_with(path, |w| {
        serde_json::to_writer_pretty(&mut *w, value)?;
        writeln!(w)?;
        Ok(())
    })
}

fn emit_csv<T: Serialize>(path: Option<&Path>, rows: &[T]) -> Result<(), Failure> {
    write_with(path, |w| write_csv(rows, w))
}
