//! Command-line driver: corpus checks, segment extraction, prediction,
//! evaluation, ablations, recommendation simulation, bias reports and cache
//! maintenance.
//!
//! Exit codes: 0 success, 1 usage error, 2 validation error, 3 remote-service
//! failure, 4 run aborted by the failure budget.

mod commands;
mod config;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::config::RunArgs;
use crate::error::CliError;

#[derive(Debug, Parser)]
#[command(name = "newsstance", version, about = "Segment-guided news stance detection")]
struct Cli {
    /// TOML config file; flags and environment variables override it.
    #[arg(long, global = true, env = "NEWSSTANCE_CONFIG")]
    config: Option<PathBuf>,
    /// Write results here instead of stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// CSV instead of JSON where the command supports it.
    #[arg(long, global = true)]
    csv: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Load and validate a corpus file.
    Validate { corpus: PathBuf },
    /// Descriptive statistics, optionally per split.
    Stats(StatsArgs),
    /// Print the extracted segments of each article.
    Segment {
        corpus: PathBuf,
        /// Only these article ids.
        #[arg(long = "id")]
        ids: Vec<String>,
    },
    /// Predict article stances.
    Predict(PredictArgs),
    /// Multi-seed evaluation on the test articles.
    Evaluate(EvaluateArgs),
    /// Full run plus one run per dropped segment kind.
    Ablate(RunOnly),
    /// Retriever vs MMR recommendation simulation.
    Recommend(RecommendArgs),
    /// Per-outlet stance fractions from saved predictions.
    Bias(BiasArgs),
    /// Inspect or clear the response cache.
    Cache {
        #[command(subcommand)]
        action: CacheAction,
        #[arg(long, global = true, env = "NEWSSTANCE_CACHE_DIR")]
        cache_dir: Option<PathBuf>,
    },
}

#[derive(Debug, Args)]
struct StatsArgs {
    corpus: PathBuf,
    #[arg(long, conflicts_with = "test_fraction")]
    split: Option<PathBuf>,
    #[arg(long)]
    test_fraction: Option<f64>,
    #[arg(long, default_value_t = 42)]
    split_seed: u64,
}

#[derive(Debug, Args)]
struct RunOnly {
    #[command(flatten)]
    run: RunArgs,
}

#[derive(Debug, Args)]
struct PredictArgs {
    #[command(flatten)]
    run: RunArgs,
    /// Only these article ids.
    #[arg(long = "id")]
    ids: Vec<String>,
    /// Seed for the LLM request; defaults to the first configured seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Render prompts without contacting any service.
    #[arg(long)]
    dry_run: bool,
}

#[derive(Debug, Args)]
struct EvaluateArgs {
    #[command(flatten)]
    run: RunArgs,
    #[arg(long)]
    dry_run: bool,
}

#[derive(Debug, Args)]
struct RecommendArgs {
    #[command(flatten)]
    run: RunArgs,
    /// JSON object: issue id → {stance label → leaning}.
    #[arg(long)]
    leanings: PathBuf,
    /// Saved predictions to take stances from instead of gold labels.
    #[arg(long)]
    predictions: Option<PathBuf>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    alpha_text: Option<f64>,
    #[arg(long)]
    pool_size: Option<usize>,
    /// Comma-separated K values.
    #[arg(long, value_delimiter = ',')]
    ks: Option<Vec<usize>>,
}

#[derive(Debug, Args)]
struct BiasArgs {
    #[arg(long)]
    corpus: PathBuf,
    /// Predictions written by `predict`.
    #[arg(long)]
    predictions: PathBuf,
    /// JSON object: outlet → progressive | moderate | conservative.
    #[arg(long)]
    outlets: PathBuf,
    /// Restrict to these issues.
    #[arg(long, value_delimiter = ',')]
    issues: Vec<String>,
    /// Also write the scatter plot as SVG.
    #[arg(long)]
    svg: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum CacheAction {
    Inspect,
    Stats,
    Clear {
        /// Required confirmation.
        #[arg(long)]
        yes: bool,
    },
}

fn run(cli: Cli) -> Result<(), CliError> {
    let file = match &cli.config {
        Some(p) => config::FileConfig::load(p)?,
        None => config::FileConfig::default(),
    };
    let out = commands::Output {
        path: cli.out,
        csv: cli.csv,
    };
    match cli.command {
        Command::Validate { corpus } => commands::validate(&corpus, &out),
        Command::Stats(a) => commands::stats(&a.corpus, a.split.as_deref(), a.test_fraction, a.split_seed, &out),
        Command::Segment { corpus, ids } => commands::segment(&corpus, &ids, &out),
        Command::Predict(a) => {
            let r = config::Resolved::new(file, &a.run)?;
            commands::predict(&r, &a.ids, a.seed, a.dry_run, &out)
        }
        Command::Evaluate(a) => {
            let r = config::Resolved::new(file, &a.run)?;
            commands::evaluate(&r, a.dry_run, &out)
        }
        Command::Ablate(a) => commands::ablate(&config::Resolved::new(file, &a.run)?, &out),
        Command::Recommend(a) => {
            let mut r = config::Resolved::new(file, &a.run)?;
            if let Some(l) = a.lambda {
                r.recommend.lambda_div = l;
            }
            if let Some(w) = a.alpha_text {
                r.recommend.alpha_text = w;
            }
            if let Some(p) = a.pool_size {
                r.recommend.pool_size = p;
            }
            if let Some(ks) = a.ks {
                r.recommend.ks = ks;
            }
            commands::recommend(&r, &a.leanings, a.predictions.as_deref(), &out)
        }
        Command::Bias(a) => commands::bias(&a.corpus, &a.predictions, &a.outlets, &a.issues, a.svg.as_deref(), &out),
        Command::Cache { action, cache_dir } => {
            let dir = cache_dir
                .or(file.cache_dir)
                .or(file.run.agent.cache_dir)
                .ok_or_else(|| CliError::Usage("no cache directory (use --cache-dir)".into()))?;
            match action {
                CacheAction::Inspect => commands::cache_inspect(&dir, &out),
                CacheAction::Stats => commands::cache_stats(&dir, &out),
                CacheAction::Clear { yes } => commands::cache_clear(&dir, yes, &out),
            }
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
