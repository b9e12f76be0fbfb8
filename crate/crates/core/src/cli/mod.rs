//! Command-line runner: `convert`, `eval`, `sweep-k`, `analyze`, `report`.
//!
//! Exit codes: 0 success, 1 usage, 2 data error, 3 backend failure.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::analysis::Denominator;
use crate::corpus::{AttributeVocabulary, DatasetFormat, ParseMode, Split};
use crate::pipeline::Strategy;
use crate::Error;

mod commands;
pub mod config;
pub mod rundir;

pub use commands::{analyze, convert, eval, recompute_metrics, report, sweep_k, KSummary, TaxonomyReport};
pub use config::{BackendKind, RunConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_BACKEND: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "stateshift", version, about = "Entity state-change prediction experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args, Clone, Default)]
pub struct RunFlags {
    /// TOML run configuration.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// oracle, ngram or remote.
    #[arg(long)]
    pub backend: Option<String>,
    /// zero, single, multi or k-attribute.
    #[arg(long)]
    pub strategy: Option<String>,
    /// Group size for `eval`; comma-separated grid for `sweep-k`.
    #[arg(long)]
    pub k: Option<String>,
    /// Answer remote calls from a recorded transcript.
    #[arg(long)]
    pub replay: Option<PathBuf>,
    /// Run directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Convert a raw export into canonical JSONL and vocabulary tables.
    Convert {
        input: PathBuf,
        #[arg(long, default_value = "canonical_jsonl")]
        format: String,
        /// openpi, piglet, or an attribute<TAB>domain table.
        #[arg(long, default_value = "openpi")]
        vocabulary: String,
        /// Add unknown attributes as out-of-domain instead of failing.
        #[arg(long)]
        lenient: bool,
        /// Split for records that carry none.
        #[arg(long, default_value = "test")]
        split: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate one strategy with one backend.
    Eval(RunFlags),
    /// Evaluate multi-attribute prompts over a grid of group sizes.
    #[command(name = "sweep-k")]
    SweepK(RunFlags),
    /// Error taxonomy for an eval run.
    Analyze {
        run: PathBuf,
        /// instance_id<TAB>category<TAB>subcategory<TAB>note judgments.
        #[arg(long)]
        annotations: Option<PathBuf>,
        /// erroneous or all.
        #[arg(long)]
        denominator: Option<String>,
        /// Defaults to the run directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compare runs and write plot-ready tables.
    Report {
        #[arg(required = true)]
        runs: Vec<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Data(Error),
    Backend(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Data(_) => EXIT_DATA,
            CliError::Backend(_) => EXIT_BACKEND,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Data(e) => write!(f, "{e}"),
            CliError::Backend(m) => write!(f, "backend failure: {m}"),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::Backend(b) => CliError::Backend(b.to_string()),
            other => CliError::Data(other),
        }
    }
}

fn usage<T: std::str::FromStr<Err = Error>>(value: &str) -> Result<T, CliError> {
    value.parse().map_err(|e: Error| CliError::Usage(e.to_string()))
}

fn vocabulary(choice: &str) -> Result<AttributeVocabulary, CliError> {
    Ok(match choice {
        "openpi" => AttributeVocabulary::openpi(),
        "piglet" => AttributeVocabulary::piglet(),
        path => AttributeVocabulary::from_files(Path::new(path), None)?,
    })
}

/// Config file plus flag overrides; the seed must come from one of them.
fn resolve(flags: &RunFlags, sweep: bool) -> Result<(RunConfig, PathBuf), CliError> {
    let path = flags
        .config
        .as_ref()
        .ok_or_else(|| CliError::Usage("--config is required".into()))?;
    let mut config = RunConfig::load(path)?;
    if let Some(seed) = flags.seed {
        config.seed = Some(seed);
    }
    if config.seed.is_none() {
        return Err(CliError::Usage("a seed is required (config `seed` or --seed)".into()));
    }
    if let Some(b) = &flags.backend {
        config.backend.kind = usage(b)?;
    }
    if let Some(s) = &flags.strategy {
        config.strategy = usage::<Strategy>(s)?;
    }
    if flags.replay.is_some() {
        config.backend.kind = BackendKind::Remote;
    }
    if let Some(k) = &flags.k {
        let values = k
            .split(',')
            .map(|v| v.trim().parse::<usize>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| CliError::Usage(format!("bad --k `{k}`: {e}")))?;
        if sweep {
            config.k_grid = values;
        } else if let [single] = values.as_slice() {
            config.k = Some(*single);
        } else {
            return Err(CliError::Usage("eval takes a single --k".into()));
        }
    }
    if let Some(out) = &flags.out {
        config.out = Some(out.clone());
    }
    let out = config
        .out
        .clone()
        .ok_or_else(|| CliError::Usage("an output directory is required (--out or `out`)".into()))?;
    config.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    Ok((config, out))
}

pub fn execute(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Convert {
            input,
            format,
            vocabulary: vocab,
            lenient,
            split,
            out,
        } => {
            let format: DatasetFormat = usage(&format)?;
            let split: Split = usage(&split)?;
            let mode = if lenient { ParseMode::Lenient } else { ParseMode::Strict };
            let data = convert(&input, format, vocabulary(&vocab)?, mode, split, &out)?;
            println!("{} instances written to {}", data.instances.len(), out.display());
        }
        Command::Eval(flags) => {
            let (config, out) = resolve(&flags, false)?;
            let report = eval(config, &out, flags.replay.as_deref())?;
            println!(
                "P={:.4} R={:.4} F1={:.4} ({} records, {} failed) -> {}",
                report.micro.precision,
                report.micro.recall,
                report.micro.f1,
                report.counts.records,
                report.counts.failed_records,
                out.display()
            );
        }
        Command::SweepK(flags) => {
            let (config, out) = resolve(&flags, true)?;
            let summary = sweep_k(config, &out, flags.replay.as_deref())?;
            println!("k\tP\tR\tF1");
            for s in summary {
                println!("{}\t{:.4}\t{:.4}\t{:.4}", s.k, s.precision, s.recall, s.f1);
            }
        }
        Command::Analyze {
            run,
            annotations,
            denominator,
            out,
        } => {
            let denominator = denominator
                .map(|d| match d.as_str() {
                    "erroneous" => Ok(Denominator::Erroneous),
                    "all" | "all_instances" => Ok(Denominator::AllInstances),
                    other => Err(CliError::Usage(format!("unknown denominator `{other}`"))),
                })
                .transpose()?;
            let out = out.unwrap_or_else(|| run.clone());
            let report = analyze(&run, annotations.as_deref(), denominator, &out)?;
            print!("{}", crate::analysis::render_table(&[(run.display().to_string(), report.tally)]));
        }
        Command::Report { runs, out } => {
            print!("{}", report(&runs, out.as_deref())?);
        }
    }
    Ok(())
}

/// Parses `args` (program name first), runs, and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
