//! `q2v`: generate, preprocess, train, embed, summarize, classify, project
//! and evaluate SQL query workloads.

mod commands;
mod config;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::config::PipelineConfig;
use crate::error::CliError;

#[derive(Debug, Parser)]
#[command(name = "q2v", version, about = "Learned vector representations of SQL queries")]
#[command(arg_required_else_help = true)]
pub struct Cli {
    /// Pipeline config file (TOML); flags override its values.
    #[arg(long, global = true, env = "Q2V_CONFIG")]
    pub config: Option<PathBuf>,
    /// Seed for every random choice made by the command.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads; 1 is the deterministic mode.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a labeled synthetic workload.
    Gen(GenArgs),
    /// Normalize a workload into token sequences.
    Prep(PrepArgs),
    /// Train an embedding model on token sequences.
    Train(TrainArgs),
    /// Compute query vectors with a trained model.
    Embed(EmbedArgs),
    /// Select representative queries by clustering their vectors.
    Summarize(SummarizeArgs),
    /// Predict error labels from query vectors or with an indicator baseline.
    Classify(ClassifyArgs),
    /// Project vectors to 2D for plotting.
    Project(ProjectArgs),
    /// Score predictions or a summary against workload labels.
    Eval(EvalArgs),
}

#[derive(Debug, Args)]
pub struct GenArgs {
    /// Template file; the built-in templates are used when absent.
    #[arg(long)]
    pub templates: Option<PathBuf>,
    #[arg(long)]
    pub per_template: Option<usize>,
    /// Generate the error corpus (built-in error templates).
    #[arg(long)]
    pub errors: bool,
    /// Instances per unmarked error template.
    #[arg(long)]
    pub plain: Option<usize>,
    /// Instances per marked error template.
    #[arg(long)]
    pub marked: Option<usize>,
    /// `oom` or `multi`.
    #[arg(long)]
    pub task: Option<String>,
    #[arg(long)]
    pub noise: Option<f64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PrepArgs {
    #[arg(long = "in")]
    pub input: Option<PathBuf>,
    /// Workload file format: `jsonl` or `sql`.
    #[arg(long)]
    pub format: Option<String>,
    /// `raw_sql`, `plan` or `plan_template`.
    #[arg(long)]
    pub source: Option<String>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// `doc2vec` or `lstm`.
    #[arg(long)]
    pub kind: Option<String>,
    #[arg(long = "in")]
    pub input: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Doc2vec vector size or LSTM hidden size.
    #[arg(long)]
    pub dim: Option<usize>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub min_count: Option<u64>,
}

#[derive(Debug, Args)]
pub struct EmbedArgs {
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Expected model kind; a file of another kind is rejected.
    #[arg(long)]
    pub kind: Option<String>,
    #[arg(long = "in")]
    pub input: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Doc2vec inference steps for unseen queries.
    #[arg(long)]
    pub steps: Option<usize>,
    /// Infer doc2vec vectors even for ids seen in training.
    #[arg(long)]
    pub infer_all: bool,
}

#[derive(Debug, Args)]
pub struct SummarizeArgs {
    #[arg(long)]
    pub workload: Option<PathBuf>,
    #[arg(long)]
    pub vectors: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Fixed cluster count instead of the elbow rule.
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub k_max: Option<usize>,
    #[arg(long)]
    pub tau: Option<f64>,
}

#[derive(Debug, Args)]
pub struct ClassifyArgs {
    /// Labeled workload; split into train and test.
    #[arg(long)]
    pub workload: Option<PathBuf>,
    #[arg(long)]
    pub vectors: Option<PathBuf>,
    /// Predictions for the test split (JSON lines).
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub test_fraction: Option<f64>,
    #[arg(long)]
    pub n_trees: Option<usize>,
    /// Indicator baseline instead of the forest: HEAVY_JOINS, WINDOW_FUNCS, EITHER or BOTH.
    #[arg(long)]
    pub heuristic: Option<String>,
    /// Big-table list for join baselines; built-in list when absent.
    #[arg(long)]
    pub big_tables: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ProjectArgs {
    #[arg(long)]
    pub vectors: Option<PathBuf>,
    /// Workload supplying point labels.
    #[arg(long)]
    pub workload: Option<PathBuf>,
    /// `csv` or `svg`.
    #[arg(long)]
    pub format: Option<String>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub workload: Option<PathBuf>,
    #[arg(long)]
    pub predictions: Option<PathBuf>,
    #[arg(long)]
    pub summary: Option<PathBuf>,
    /// Write the metrics as JSON here as well as printing them.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn run(cli: Cli) -> Result<(), CliError> {
    let mut config = match &cli.config {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    if cli.seed.is_some() {
        config.seed = cli.seed;
    }
    if cli.threads.is_some() {
        config.threads = cli.threads;
    }
    let threads = config.threads.unwrap_or(1);
    if threads == 0 {
        return Err(CliError::Config("threads must be at least 1".into()));
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| CliError::Config(format!("thread pool: {e}")))?;
    commands::dispatch(cli.command, &config, threads)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
