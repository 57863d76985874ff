use std::collections::{BTreeSet, HashMap};
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use serde::Deserialize;

use query2vec::classify::{
    evaluate, fit_forest, heuristic_labels, parse_big_tables, write_predictions, ForestConfig, HeuristicKind,
    HeuristicRule,
};
use query2vec::corpus::{
    builtin_error_templates, builtin_templates, generate_error_workload, generate_templated_workload, load_templates,
    load_workload, split_train_test, ErrorTask, Workload, WorkloadFormat,
};
use query2vec::persist::{load_model, read_embeddings, save_model, write_embeddings, InferOptions, Model, ModelKind};
use query2vec::preprocess::{load_token_corpus, normalize_workload, write_token_corpus, SourceKind};
use query2vec::project::{attach_labels, export_scatter, pca_2d, ScatterFormat};
use query2vec::rng::derive_seed;
use query2vec::summarize::{summarize, Advisor, ElbowParams, SummarizeParams, TemplateCoverage};
use query2vec::{doc2vec, lstm, write_atomic, QueryVector};

use crate::config::{pick_input, pick_path, PipelineConfig};
use crate::error::CliError;
use crate::{
    ClassifyArgs, Command, EmbedArgs, EvalArgs, GenArgs, PrepArgs, ProjectArgs, SummarizeArgs, TrainArgs,
};

const DEFAULT_SEED: u64 = 1;

pub fn dispatch(command: Command, config: &PipelineConfig, threads: usize) -> Result<(), CliError> {
    match command {
        Command::Gen(a) => gen(a, config),
        Command::Prep(a) => prep(a, config),
        Command::Train(a) => train(a, config, threads),
        Command::Embed(a) => embed(a, config),
        Command::Summarize(a) => summarize_cmd(a, config),
        Command::Classify(a) => classify(a, config),
        Command::Project(a) => project(a, config),
        Command::Eval(a) => eval(a, config),
    }
}

fn parse<T: FromStr<Err = query2vec::Error>>(value: &str, what: &str) -> Result<T, CliError> {
    value
        .parse()
        .map_err(|e: query2vec::Error| CliError::Config(format!("{what}: {e}")))
}

fn seed(config: &PipelineConfig) -> u64 {
    config.seed.unwrap_or(DEFAULT_SEED)
}

fn io_err(path: &Path, e: std::io::Error) -> CliError {
    CliError::Core(query2vec::Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn read_vectors(path: &Path) -> Result<Vec<QueryVector>, CliError> {
    let file = File::open(path).map_err(|e| io_err(path, e))?;
    Ok(read_embeddings(BufReader::new(file))?)
}

fn read_workload(path: &Path) -> Result<Workload, CliError> {
    Ok(load_workload(path, WorkloadFormat::JsonLines)?)
}

fn render(write: impl FnOnce(&mut Vec<u8>) -> std::io::Result<()>) -> Result<Vec<u8>, CliError> {
    let mut buf = Vec::new();
    write(&mut buf).map_err(|e| io_err(Path::new("<buffer>"), e))?;
    Ok(buf)
}

fn gen(a: GenArgs, config: &PipelineConfig) -> Result<(), CliError> {
    let out = pick_path(a.out, &config.paths.workload, "output workload")?;
    let g = &config.gen;
    let seed = seed(config);
    let workload = if a.errors || g.errors {
        let task = match a.task.as_deref().unwrap_or(&g.task) {
            "oom" => ErrorTask::Oom,
            "multi" => ErrorTask::MultiError,
            other => return Err(CliError::Config(format!("unknown error task `{other}` (oom or multi)"))),
        };
        let noise = a.noise.unwrap_or(g.noise);
        if !(0.0..1.0).contains(&noise) {
            return Err(CliError::Config(format!("noise must lie in [0, 1), got {noise}")));
        }
        let plain = a.plain.unwrap_or(g.plain);
        let marked = a.marked.unwrap_or(g.marked);
        generate_error_workload(&builtin_error_templates(), plain, marked, task, noise, seed)?
    } else {
        let templates = match a.templates.or_else(|| config.paths.templates.clone()) {
            Some(p) => {
                if !p.is_file() {
                    return Err(CliError::Config(format!("template file {} does not exist", p.display())));
                }
                load_templates(&p)?
            }
            None => builtin_templates(),
        };
        let n = a.per_template.unwrap_or(g.per_template);
        if n == 0 || templates.is_empty() {
            return Err(CliError::Config("need at least one template and one instance per template".into()));
        }
        generate_templated_workload(&templates, n, seed)?
    };
    write_atomic(&out, workload.to_jsonl().as_bytes())?;
    log::info!("wrote {} queries to {}", workload.len(), out.display());
    Ok(())
}

fn prep(a: PrepArgs, config: &PipelineConfig) -> Result<(), CliError> {
    let input = pick_input(a.input, &config.paths.workload, "workload")?;
    let out = pick_path(a.out, &config.paths.tokens, "output token")?;
    let format: WorkloadFormat = parse(a.format.as_deref().unwrap_or(&config.prep.format), "workload format")?;
    let source: SourceKind = parse(a.source.as_deref().unwrap_or(&config.prep.source), "source kind")?;
    let workload = load_workload(&input, format)?;
    let corpus = normalize_workload(&workload, source)?;
    write_atomic(&out, &render(|b| write_token_corpus(&corpus, b))?)?;
    Ok(())
}

fn model_kind(flag: Option<&str>, config: &PipelineConfig) -> Result<Option<ModelKind>, CliError> {
    flag.or(config.kind.as_deref()).map(|k| parse(k, "model kind")).transpose()
}

fn train(a: TrainArgs, config: &PipelineConfig, threads: usize) -> Result<(), CliError> {
    let kind = model_kind(a.kind.as_deref(), config)?
        .ok_or_else(|| CliError::Config("missing model kind (--kind doc2vec|lstm)".into()))?;
    let input = pick_input(a.input, &config.paths.tokens, "token corpus")?;
    let out = pick_path(a.out, &config.paths.model, "output model")?;
    let corpus = load_token_corpus(&input)?;
    let model = match kind {
        ModelKind::Doc2Vec => {
            let mut c = config.doc2vec.clone();
            c.seed = config.seed.unwrap_or(c.seed);
            c.workers = threads;
            c.dim = a.dim.unwrap_or(c.dim);
            c.epochs = a.epochs.unwrap_or(c.epochs);
            c.learning_rate = a.learning_rate.unwrap_or(c.learning_rate);
            c.min_count = a.min_count.unwrap_or(c.min_count);
            c.validate().map_err(|e| CliError::Config(e.to_string()))?;
            Model::Doc2Vec(doc2vec::train(&corpus, &c)?)
        }
        ModelKind::Lstm => {
            let mut c = config.lstm.clone();
            c.seed = config.seed.unwrap_or(c.seed);
            c.hidden_dim = a.dim.unwrap_or(c.hidden_dim);
            c.epochs = a.epochs.unwrap_or(c.epochs);
            c.learning_rate = a.learning_rate.unwrap_or(c.learning_rate);
            c.min_count = a.min_count.unwrap_or(c.min_count);
            c.validate().map_err(|e| CliError::Config(e.to_string()))?;
            Model::Lstm(lstm::train(&corpus, &c)?)
        }
    };
    save_model(&model, &out)?;
    Ok(())
}

fn embed(a: EmbedArgs, config: &PipelineConfig) -> Result<(), CliError> {
    let expected = model_kind(a.kind.as_deref(), config)?;
    let model_path = pick_input(a.model, &config.paths.model, "model")?;
    let input = pick_input(a.input, &config.paths.tokens, "token corpus")?;
    let out = pick_path(a.out, &config.paths.vectors, "output vector")?;
    let opts = InferOptions {
        steps: a.steps.unwrap_or(config.embed.steps),
        learning_rate: config.embed.learning_rate,
    };
    if opts.steps == 0 || !(opts.learning_rate > 0.0) {
        return Err(CliError::Config("inference needs steps >= 1 and learning_rate > 0".into()));
    }
    let infer_all = a.infer_all || config.embed.infer_all;
    let model = load_model(&model_path, expected)?;
    let corpus = load_token_corpus(&input)?;
    let vectors: Vec<QueryVector> = corpus
        .par_iter()
        .map(|seq| match &model {
            Model::Doc2Vec(m) if !infer_all => match m.query_vector(&seq.query_id) {
                Some(v) => Ok(v),
                None => model.embed(seq, &opts),
            },
            _ => model.embed(seq, &opts),
        })
        .collect::<query2vec::Result<_>>()?;
    write_atomic(&out, &render(|b| write_embeddings(&vectors, b))?)?;
    Ok(())
}

fn summarize_cmd(a: SummarizeArgs, config: &PipelineConfig) -> Result<(), CliError> {
    let workload = read_workload(&pick_input(a.workload, &config.paths.workload, "workload")?)?;
    let vectors = read_vectors(&pick_input(a.vectors, &config.paths.vectors, "vector")?)?;
    let out = pick_path(a.out, &config.paths.summary, "output summary")?;
    let s = &config.summarize;
    let params = SummarizeParams {
        k: a.k.or(s.k),
        elbow: ElbowParams {
            k_max: a.k_max.unwrap_or(s.k_max),
            tau: a.tau.unwrap_or(s.tau),
            restarts: s.restarts,
            max_iters: s.max_iters,
        },
        seed: seed(config),
    };
    if params.k == Some(0) || params.elbow.k_max == 0 || !(params.elbow.tau > 0.0) || params.elbow.restarts == 0 {
        return Err(CliError::Config("summarize needs k >= 1, k_max >= 1, tau > 0 and restarts >= 1".into()));
    }
    let summary = summarize(&workload, &vectors, &params)?;
    write_atomic(&out, &render(|b| summary.write_jsonl(b))?)?;
    println!(
        "{}",
        serde_json::json!({
            "k": summary.k,
            "queries": summary.workload_size,
            "compression": summary.compression,
            "template_coverage": TemplateCoverage.score(&workload, &summary),
        })
    );
    Ok(())
}

fn truth_labels(w: &Workload) -> Result<Vec<String>, CliError> {
    w.queries
        .iter()
        .map(|q| {
            q.label
                .clone()
                .ok_or_else(|| CliError::Config(format!("query `{}` has no label", q.id)))
        })
        .collect()
}

fn classify(a: ClassifyArgs, config: &PipelineConfig) -> Result<(), CliError> {
    let c = &config.classify;
    let workload = read_workload(&pick_input(a.workload, &config.paths.workload, "workload")?)?;
    let out = pick_path(a.out, &config.paths.predictions, "output predictions")?;
    let fraction = a.test_fraction.unwrap_or(c.test_fraction);
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(CliError::Config(format!("test_fraction must lie in (0, 1), got {fraction}")));
    }
    let seed = seed(config);
    let (train, test) = split_train_test(&workload, fraction, derive_seed(seed, &[1]))?;
    let test_truth = truth_labels(&test)?;
    let ids: Vec<&str> = test.queries.iter().map(|q| q.id.as_str()).collect();

    let (predicted, bytes) = match a.heuristic.as_deref().or(c.heuristic.as_deref()) {
        Some(h) => {
            let kind: HeuristicKind = parse(h, "heuristic")?;
            let tables = match a.big_tables.or_else(|| config.paths.big_tables.clone()) {
                Some(p) => {
                    let text = std::fs::read_to_string(&p).map_err(|e| io_err(&p, e))?;
                    parse_big_tables(&text)
                }
                None => query2vec::corpus::builtin_big_tables(),
            };
            let rule = HeuristicRule::new(kind, tables)
                .map_err(|e| CliError::Config(e.to_string()))?
                .with_join_threshold(c.join_threshold);
            let labels = heuristic_labels(&test.queries, &rule);
            let bytes = render(|b| {
                use std::io::Write;
                for (id, l) in ids.iter().zip(&labels) {
                    writeln!(b, "{}", serde_json::json!({ "id": id, "label": l, "score": 1.0 }))?;
                }
                Ok(())
            })?;
            (labels, bytes)
        }
        None => {
            let vectors = read_vectors(&pick_input(a.vectors, &config.paths.vectors, "vector")?)?;
            let by_id: HashMap<&str, &QueryVector> = vectors.iter().map(|v| (v.query_id.as_str(), v)).collect();
            let lookup = |w: &Workload| -> Result<Vec<QueryVector>, CliError> {
                w.queries
                    .iter()
                    .map(|q| {
                        by_id
                            .get(q.id.as_str())
                            .map(|v| (*v).clone())
                            .ok_or_else(|| CliError::Core(query2vec::Error::MissingVector(q.id.clone())))
                    })
                    .collect()
            };
            let forest = ForestConfig {
                n_trees: a.n_trees.unwrap_or(c.n_trees),
                max_depth: c.max_depth,
                min_leaf: c.min_leaf,
                seed: derive_seed(seed, &[2]),
            };
            if forest.n_trees == 0 || forest.min_leaf == 0 {
                return Err(CliError::Config("forest needs n_trees >= 1 and min_leaf >= 1".into()));
            }
            let model = fit_forest(&lookup(&train)?, &truth_labels(&train)?, &forest)?;
            let preds = model.predict_all(&lookup(&test)?)?;
            let bytes = render(|b| write_predictions(&ids, &preds, b))?;
            (preds.into_iter().map(|p| p.label).collect(), bytes)
        }
    };
    write_atomic(&out, &bytes)?;
    print!("{}", evaluate(&predicted, &test_truth)?.report());
    Ok(())
}

fn project(a: ProjectArgs, config: &PipelineConfig) -> Result<(), CliError> {
    let vectors = read_vectors(&pick_input(a.vectors, &config.paths.vectors, "vector")?)?;
    let out = pick_path(a.out, &config.paths.projection, "output projection")?;
    let format: ScatterFormat = parse(a.format.as_deref().unwrap_or(&config.project.format), "scatter format")?;
    let mut points = pca_2d(&vectors)?;
    if let Some(p) = a.workload.or_else(|| config.paths.workload.clone()) {
        let w = read_workload(&p)?;
        let labels: HashMap<String, String> = w
            .queries
            .into_iter()
            .filter_map(|q| q.label.map(|l| (q.id, l)))
            .collect();
        attach_labels(&mut points, &labels);
    }
    export_scatter(&points, &out, format)?;
    Ok(())
}

#[derive(Deserialize)]
struct PredictionRecord {
    id: String,
    label: String,
}

fn eval(a: EvalArgs, config: &PipelineConfig) -> Result<(), CliError> {
    let workload = read_workload(&pick_input(a.workload, &config.paths.workload, "workload")?)?;
    let report = match (a.predictions, a.summary) {
        (Some(p), None) => {
            let file = File::open(&p).map_err(|e| io_err(&p, e))?;
            let (mut preds, mut truth) = (Vec::new(), Vec::new());
            for (i, line) in BufReader::new(file).lines().enumerate() {
                let line = line.map_err(|e| io_err(&p, e))?;
                if line.trim().is_empty() {
                    continue;
                }
                let r: PredictionRecord =
                    serde_json::from_str(&line).map_err(|e| query2vec::Error::MalformedRecord {
                        line: i + 1,
                        message: e.to_string(),
                    })?;
                let q = workload
                    .get(&r.id)
                    .ok_or_else(|| CliError::Config(format!("prediction for unknown query `{}`", r.id)))?;
                let label = q
                    .label
                    .clone()
                    .ok_or_else(|| CliError::Config(format!("query `{}` has no label", r.id)))?;
                preds.push(r.label);
                truth.push(label);
            }
            let metrics = evaluate(&preds, &truth)?;
            print!("{}", metrics.report());
            serde_json::to_value(&metrics).map_err(query2vec::Error::from)?
        }
        (None, Some(p)) => {
            let file = File::open(&p).map_err(|e| io_err(&p, e))?;
            let mut reps = Vec::new();
            for line in BufReader::new(file).lines() {
                let line = line.map_err(|e| io_err(&p, e))?;
                let v: serde_json::Value = serde_json::from_str(&line).map_err(query2vec::Error::from)?;
                if let Some(id) = v.get("id").and_then(|x| x.as_str()) {
                    reps.push(id.to_string());
                }
            }
            let all: BTreeSet<&str> = workload.queries.iter().filter_map(|q| q.label.as_deref()).collect();
            let covered: BTreeSet<&str> = reps
                .iter()
                .filter_map(|id| workload.get(id).and_then(|q| q.label.as_deref()))
                .collect();
            let coverage = if all.is_empty() { 0.0 } else { covered.len() as f64 / all.len() as f64 };
            let v = serde_json::json!({
                "representatives": reps.len(),
                "queries": workload.len(),
                "compression": 1.0 - reps.len() as f64 / workload.len().max(1) as f64,
                "template_coverage": coverage,
            });
            println!("{v}");
            v
        }
        _ => {
            return Err(CliError::Config(
                "eval needs exactly one of --predictions or --summary".into(),
            ))
        }
    };
    if let Some(out) = a.out {
        write_atomic(&out, format!("{report}\n").as_bytes())?;
    }
    Ok(())
}
