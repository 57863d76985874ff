//! Pipeline configuration file. Every section is optional; command-line
//! flags override the values found here.

use std::path::{Path, PathBuf};

use serde::Deserialize;

use query2vec::classify::ForestConfig;
use query2vec::doc2vec::Doc2VecConfig;
use query2vec::lstm::LstmConfig;
use query2vec::persist::InferOptions;
use query2vec::summarize::ElbowParams;

use crate::error::CliError;

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub seed: Option<u64>,
    pub threads: Option<usize>,
    /// `doc2vec` or `lstm`.
    pub kind: Option<String>,
    pub paths: Paths,
    pub gen: GenSection,
    pub prep: PrepSection,
    pub doc2vec: Doc2VecConfig,
    pub lstm: LstmConfig,
    pub embed: EmbedSection,
    pub summarize: SummarizeSection,
    pub classify: ClassifySection,
    pub project: ProjectSection,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub templates: Option<PathBuf>,
    pub workload: Option<PathBuf>,
    pub tokens: Option<PathBuf>,
    pub model: Option<PathBuf>,
    pub vectors: Option<PathBuf>,
    pub summary: Option<PathBuf>,
    pub predictions: Option<PathBuf>,
    pub projection: Option<PathBuf>,
    pub big_tables: Option<PathBuf>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenSection {
    pub per_template: usize,
    /// Generate the labeled error corpus instead of a templated workload.
    pub errors: bool,
    pub plain: usize,
    pub marked: usize,
    /// `oom` or `multi`.
    pub task: String,
    pub noise: f64,
}

impl Default for GenSection {
    fn default() -> Self {
        Self {
            per_template: 50,
            errors: false,
            plain: 150,
            marked: 100,
            task: "oom".into(),
            noise: 0.1,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PrepSection {
    pub source: String,
    pub format: String,
}

impl Default for PrepSection {
    fn default() -> Self {
        Self {
            source: "raw_sql".into(),
            format: "jsonl".into(),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmbedSection {
    pub steps: usize,
    pub learning_rate: f64,
    /// Infer doc2vec vectors even for ids seen in training.
    pub infer_all: bool,
}

impl Default for EmbedSection {
    fn default() -> Self {
        let d = InferOptions::default();
        Self {
            steps: d.steps,
            learning_rate: d.learning_rate,
            infer_all: false,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SummarizeSection {
    pub k: Option<usize>,
    pub k_max: usize,
    pub tau: f64,
    pub restarts: usize,
    pub max_iters: usize,
}

impl Default for SummarizeSection {
    fn default() -> Self {
        let e = ElbowParams::default();
        Self {
            k: None,
            k_max: e.k_max,
            tau: e.tau,
            restarts: e.restarts,
            max_iters: e.max_iters,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClassifySection {
    pub test_fraction: f64,
    /// Use an indicator baseline instead of the forest.
    pub heuristic: Option<String>,
    pub join_threshold: usize,
    pub n_trees: usize,
    pub max_depth: Option<usize>,
    pub min_leaf: usize,
}

impl Default for ClassifySection {
    fn default() -> Self {
        let f = ForestConfig::default();
        Self {
            test_fraction: 0.15,
            heuristic: None,
            join_threshold: 3,
            n_trees: f.n_trees,
            max_depth: f.max_depth,
            min_leaf: f.min_leaf,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProjectSection {
    pub format: String,
}

impl Default for ProjectSection {
    fn default() -> Self {
        Self { format: "csv".into() }
    }
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }
}

/// Flag value if given, else config value, else a config error naming `what`.
pub fn pick_path(flag: Option<PathBuf>, config: &Option<PathBuf>, what: &str) -> Result<PathBuf, CliError> {
    flag.or_else(|| config.clone())
        .ok_or_else(|| CliError::Config(format!("missing {what} path (flag or [paths] entry)")))
}

/// Like [`pick_path`], and the file must already exist.
pub fn pick_input(flag: Option<PathBuf>, config: &Option<PathBuf>, what: &str) -> Result<PathBuf, CliError> {
    let p = pick_path(flag, config, what)?;
    if !p.is_file() {
        return Err(CliError::Config(format!("{what} file {} does not exist", p.display())));
    }
    Ok(p)
}
