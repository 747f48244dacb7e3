//! The `score` command line.

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::time::Duration;

use clap::{Args, Parser, Subcommand};

use crate::config::FileConfig;
use crate::dataset::{dataset_stats, load_dataset, DatasetFamily, LoadOptions};
use crate::extraction::replay_fixtures;
use crate::inference::{RetryPolicy, DEFAULT_CONCURRENCY};
use crate::math::{sym_equiv_with, EquivConfig};
use crate::metrics::{AggregateMode, Exclusion, MetricConfig};
use crate::orchestrator::{execute_run, execute_score, BackendSpec, RunRequest, ScoreRequest};
use crate::perturbation::{RunConfig, Task};
use crate::report::{render_table, write_outputs, ScoreReport};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_BACKEND: i32 = 3;

#[derive(Debug, Parser)]
#[command(
    name = "score",
    version,
    about = "Accuracy ranges and consistency rates for language models under perturbation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate every planned completion into an append-only store (resumable).
    Run(RunArgs),
    /// Score a store against its dataset and write a JSON report.
    Score(ScoreArgs),
    /// Render tables, box-plot data, category breakdowns and a leaderboard.
    Report(ReportArgs),
    /// Validate a dataset file and print per-category counts.
    Validate(ValidateArgs),
    /// Decide whether two math answers are equivalent.
    Equiv(EquivArgs),
    /// Replay an extraction fixture corpus.
    ValidateExtract(ValidateExtractArgs),
}

#[derive(Debug, Args)]
struct RunArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long)]
    family: DatasetFamily,
    /// all, or a comma list of prompt, choice, nongreedy
    #[arg(long, default_value = "all")]
    task: String,
    /// mock, mock:<script.json>, or a chat-completions base URL
    #[arg(long)]
    backend: Option<String>,
    #[arg(long)]
    model: Option<String>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    concurrency: Option<usize>,
    #[arg(long)]
    max_tokens: Option<u32>,
    /// Comma-separated sampling seeds
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    #[arg(long)]
    positions: Option<usize>,
    #[arg(long)]
    retry_attempts: Option<u32>,
    #[arg(long)]
    retry_base_ms: Option<u64>,
    #[arg(long)]
    lenient: bool,
}

#[derive(Debug, Args)]
struct ScoreArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    store: PathBuf,
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long)]
    family: DatasetFamily,
    #[arg(long)]
    mode: Option<AggregateMode>,
    /// Comma list of family:prompt_id, or `none`
    #[arg(long)]
    exclude: Option<String>,
    /// Count two failed extractions as agreeing
    #[arg(long)]
    failed_pairs_similar: bool,
    /// Report path; standard output when absent
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    lenient: bool,
}

#[derive(Debug, Args)]
struct ReportArgs {
    /// Score reports written by `score score`
    #[arg(required = true)]
    inputs: Vec<PathBuf>,
    #[arg(long)]
    out_dir: PathBuf,
    /// Merge reports even when their manifests disagree
    #[arg(long)]
    force: bool,
}

#[derive(Debug, Args)]
struct ValidateArgs {
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long)]
    family: DatasetFamily,
    #[arg(long)]
    lenient: bool,
}

#[derive(Debug, Args)]
struct EquivArgs {
    #[arg(allow_hyphen_values = true)]
    a: String,
    #[arg(allow_hyphen_values = true)]
    b: String,
}

#[derive(Debug, Args)]
struct ValidateExtractArgs {
    fixtures: PathBuf,
}

enum Failure {
    Usage(String),
    Data(String),
    Backend(String),
}

impl Failure {
    fn code(&self) -> i32 {
        match self {
            Failure::Usage(_) => EXIT_USAGE,
            Failure::Data(_) => EXIT_DATA,
            Failure::Backend(_) => EXIT_BACKEND,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Usage(m) | Failure::Data(m) | Failure::Backend(m) => m,
        }
    }
}

fn data(e: impl ToString) -> Failure {
    Failure::Data(e.to_string())
}

/// Parses `args` (including the program name) and runs the command,
/// returning the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    let result = match cli.command {
        Command::Run(a) => cmd_run(a),
        Command::Score(a) => cmd_score(a),
        Command::Report(a) => cmd_report(a),
        Command::Validate(a) => cmd_validate(a),
        Command::Equiv(a) => cmd_equiv(a),
        Command::ValidateExtract(a) => cmd_validate_extract(a),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(f) => {
            eprintln!("error: {}", f.message());
            f.code()
        }
    }
}

fn parse_tasks(text: &str) -> Result<Vec<Task>, Failure> {
    if text == "all" {
        return Ok(Task::ALL.to_vec());
    }
    text.split(',').map(|t| t.trim().parse::<Task>().map_err(Failure::Usage)).collect()
}

fn parse_exclusions(flag: Option<&str>, file: Option<&[String]>) -> Result<Vec<Exclusion>, Failure> {
    match (flag, file) {
        (Some("none"), _) => Ok(Vec::new()),
        (Some(list), _) => Exclusion::parse_list(list).map_err(Failure::Usage),
        (None, Some(list)) => list.iter().map(|e| e.parse().map_err(Failure::Usage)).collect(),
        (None, None) => Ok(Exclusion::defaults()),
    }
}

fn load_config(path: Option<&Path>) -> Result<FileConfig, Failure> {
    FileConfig::load_optional(path).map_err(|e| Failure::Usage(e.to_string()))
}

fn cmd_run(args: RunArgs) -> Result<(), Failure> {
    let file = load_config(args.config.as_deref())?;
    let tasks = if args.task == "all" {
        file.tasks.clone().unwrap_or_else(|| Task::ALL.to_vec())
    } else {
        parse_tasks(&args.task)?
    };
    let defaults = RunConfig::default();
    let config = RunConfig {
        tasks,
        seeds: args.seeds.or(file.seeds.clone()).unwrap_or(defaults.seeds),
        positions: args.positions.or(file.positions),
        max_tokens: args.max_tokens.or(file.max_tokens).unwrap_or(defaults.max_tokens),
        short_items: file.short_items.unwrap_or_default(),
        system_prompt: file.system_prompt.clone(),
    };
    let model = args.model.or(file.model.clone()).ok_or_else(|| Failure::Usage("--model is required".into()))?;
    let backend_text =
        args.backend.or(file.backend.clone()).ok_or_else(|| Failure::Usage("--backend is required".into()))?;
    let target = BackendSpec::parse(&backend_text).map_err(|e| Failure::Usage(e.to_string()))?;
    let timeout = Duration::from_secs(file.timeout_secs.unwrap_or(300));
    let backend = target.build(timeout).map_err(|e| Failure::Backend(e.to_string()))?;

    let mut request = RunRequest::new(args.dataset, args.family, model, args.out);
    request.lenient = args.lenient;
    request.config = config;
    request.concurrency = args.concurrency.or(file.concurrency).unwrap_or(DEFAULT_CONCURRENCY).max(1);
    request.retry = RetryPolicy {
        max_attempts: args.retry_attempts.or(file.retry_attempts).unwrap_or(3).max(1),
        base_delay: Duration::from_millis(args.retry_base_ms.or(file.retry_base_ms).unwrap_or(500)),
    };
    request.timeout = timeout;
    request.exclusions = parse_exclusions(None, file.exclusions.as_deref())?;

    let outcome = execute_run(&request, backend.as_ref()).map_err(|e| {
        if e.is_backend() {
            Failure::Backend(e.to_string())
        } else {
            data(e)
        }
    })?;
    println!("{}", serde_json::to_string(&outcome.summary).expect("summary serializes"));
    if outcome.summary.failed > 0 {
        return Err(Failure::Backend(format!(
            "{} generation(s) failed; rerun the same command to retry them",
            outcome.summary.failed
        )));
    }
    Ok(())
}

fn cmd_score(args: ScoreArgs) -> Result<(), Failure> {
    let file = load_config(args.config.as_deref())?;
    let mut request = ScoreRequest::new(args.store, args.dataset, args.family);
    request.lenient = args.lenient;
    request.mode = args.mode.or(file.aggregate_mode).unwrap_or_default();
    request.exclusions = parse_exclusions(args.exclude.as_deref(), file.exclusions.as_deref())?;
    request.metric = MetricConfig {
        failed_pairs_similar: args.failed_pairs_similar || file.failed_pairs_similar.unwrap_or(false),
        equiv: file.equiv.unwrap_or_default(),
    };
    let report = execute_score(&request).map_err(data)?;
    let json = report.to_json();
    match args.out {
        Some(path) => std::fs::write(&path, json).map_err(|e| data(format!("{}: {e}", path.display())))?,
        None => print!("{json}"),
    }
    Ok(())
}

fn cmd_report(args: ReportArgs) -> Result<(), Failure> {
    let reports = args.inputs.iter().map(|p| ScoreReport::load(p)).collect::<Result<Vec<_>, _>>().map_err(data)?;
    write_outputs(&reports, &args.out_dir, args.force).map_err(data)?;
    print!("{}", render_table(&reports).map_err(data)?);
    Ok(())
}

fn cmd_validate(args: ValidateArgs) -> Result<(), Failure> {
    let loaded = load_dataset(&args.dataset, args.family, LoadOptions { lenient: args.lenient }).map_err(data)?;
    for w in &loaded.warnings {
        eprintln!("warning: {w}");
    }
    let stats = dataset_stats(&loaded.set).to_string();
    print!("{stats}");
    if !stats.ends_with('\n') {
        println!();
    }
    if !loaded.skipped.is_empty() {
        println!("skipped {} invalid record(s)", loaded.skipped.len());
        for e in &loaded.skipped {
            println!("  {e}");
        }
    }
    Ok(())
}

fn cmd_equiv(args: EquivArgs) -> Result<(), Failure> {
    let d = sym_equiv_with(&args.a, &args.b, &EquivConfig::default());
    let verdict = if d.equivalent { "equivalent" } else { "not equivalent" };
    println!("{verdict} (stage: {})", d.stage);
    Ok(())
}

fn cmd_validate_extract(args: ValidateExtractArgs) -> Result<(), Failure> {
    let text =
        std::fs::read_to_string(&args.fixtures).map_err(|e| data(format!("{}: {e}", args.fixtures.display())))?;
    let report = replay_fixtures(&text).map_err(data)?;
    for m in &report.mismatches {
        println!(
            "line {} {}: expected {}, got {}",
            m.line,
            m.name,
            serde_json::to_string(&m.expected).expect("serializes"),
            serde_json::to_string(&m.actual).expect("serializes")
        );
    }
    println!("{} fixture(s), {} mismatch(es)", report.total, report.mismatches.len());
    if report.mismatches.is_empty() {
        Ok(())
    } else {
        Err(Failure::Data("extraction fixtures do not match".into()))
    }
}
