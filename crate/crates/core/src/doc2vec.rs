//! Paragraph-vector query embeddings (distributed-memory variant).
//!
//! Every query owns a vector that joins each context window as an extra
//! "token". The averaged hidden vector predicts the token that follows the
//! window, and the prediction error is backpropagated into the query vector,
//! the context token vectors and the output weights.

use std::collections::HashMap;

use rand::Rng;
use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{axpy, dot, Matrix};
use crate::preprocess::{build_vocabulary, TokenSeq, Vocabulary, SEQUENCE_END_INDEX};
use crate::rng;
use crate::QueryVector;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Doc2VecConfig {
    pub dim: usize,
    pub window_k: usize,
    pub epochs: usize,
    /// Initial step size; decays linearly to 1/100 of this over training.
    pub learning_rate: f64,
    /// Negative samples per target; 0 selects the full softmax.
    pub negatives: usize,
    /// Vocabularies smaller than this always use the full softmax.
    pub full_softmax_max_vocab: usize,
    pub seed: u64,
    pub min_count: u64,
    /// 1 is the deterministic single-threaded mode.
    pub workers: usize,
    /// Divide the summed window by `k` instead of `k + 1`.
    pub paper_exact_divisor: bool,
}

impl Default for Doc2VecConfig {
    fn default() -> Self {
        Self {
            dim: 300,
            window_k: 5,
            epochs: 20,
            learning_rate: 0.05,
            negatives: 5,
            full_softmax_max_vocab: 5000,
            seed: 1,
            min_count: 1,
            workers: 1,
            paper_exact_divisor: false,
        }
    }
}

impl Doc2VecConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(format!("doc2vec config: {m}")));
        if self.dim == 0 {
            return bad("dim must be at least 1");
        }
        if self.window_k == 0 {
            return bad("window_k must be at least 1");
        }
        if self.epochs == 0 {
            return bad("epochs must be at least 1");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive");
        }
        if self.workers == 0 {
            return bad("workers must be at least 1");
        }
        Ok(())
    }

    fn divisor(&self) -> f64 {
        if self.paper_exact_divisor {
            self.window_k as f64
        } else {
            (self.window_k + 1) as f64
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Objective {
    Softmax,
    NegativeSampling(usize),
}

/// Sliding prediction windows: position `t` pairs `tokens[t-k..t]` with
/// `tokens[t]`, left-padded with `pad` near the start. A length-n sequence
/// yields exactly n windows.
pub fn enumerate_contexts<T: Clone>(tokens: &[T], k: usize, pad: &T) -> Vec<(Vec<T>, T)> {
    (0..tokens.len())
        .map(|t| {
            let context = (0..k)
                .map(|j| {
                    let pos = t as isize - k as isize + j as isize;
                    if pos < 0 {
                        pad.clone()
                    } else {
                        tokens[pos as usize].clone()
                    }
                })
                .collect();
            (context, tokens[t].clone())
        })
        .collect()
}

/// Cumulative unigram^0.75 distribution for drawing negatives.
#[derive(Debug, Clone)]
struct NoiseTable {
    cumulative: Vec<f64>,
}

impl NoiseTable {
    fn new(vocab: &Vocabulary) -> Self {
        let mut acc = 0.0;
        let cumulative = vocab
            .counts()
            .iter()
            .map(|&c| {
                acc += (c as f64).powf(0.75);
                acc
            })
            .collect();
        Self { cumulative }
    }

    fn sample(&self, rng: &mut impl Rng) -> usize {
        let total = *self.cumulative.last().unwrap_or(&0.0);
        if total <= 0.0 {
            return rng.gen_range(0..self.cumulative.len());
        }
        let u = rng.gen::<f64>() * total;
        self.cumulative.partition_point(|&c| c <= u).min(self.cumulative.len() - 1)
    }

    fn draw(&self, n: usize, target: usize, rng: &mut impl Rng, out: &mut Vec<usize>) {
        out.clear();
        for _ in 0..n {
            let s = self.sample(rng);
            if s != target {
                out.push(s);
            }
        }
    }
}

fn log_sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        -(-x).exp().ln_1p()
    } else {
        x - x.exp().ln_1p()
    }
}

/// Loss of predicting `target` from hidden vector `h`, plus the gradient of
/// the loss with respect to each touched output row's logit, pushed into
/// `coeffs`. Output row `j` then has gradient `coeff_j * h`.
fn output_loss(
    output: &Matrix,
    h: &[f64],
    target: usize,
    negatives: Option<&[usize]>,
    logits: &mut Vec<f64>,
    coeffs: &mut Vec<(usize, f64)>,
) -> f64 {
    coeffs.clear();
    match negatives {
        None => {
            logits.resize(output.rows(), 0.0);
            output.matvec(h, logits);
            let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut sum = 0.0;
            for z in logits.iter_mut() {
                *z = (*z - max).exp();
                sum += *z;
            }
            let loss = sum.ln() - logits[target].ln();
            for (j, e) in logits.iter().enumerate() {
                let p = e / sum;
                coeffs.push((j, if j == target { p - 1.0 } else { p }));
            }
            loss
        }
        Some(negs) => {
            let zt = dot(output.row(target), h);
            let mut loss = -log_sigmoid(zt);
            coeffs.push((target, crate::linalg::sigmoid(zt) - 1.0));
            for &n in negs {
                let zn = dot(output.row(n), h);
                loss -= log_sigmoid(-zn);
                coeffs.push((n, crate::linalg::sigmoid(zn)));
            }
            loss
        }
    }
}

/// Reusable buffers for one training or inference thread.
#[derive(Default)]
struct Scratch {
    h: Vec<f64>,
    grad_h: Vec<f64>,
    logits: Vec<f64>,
    coeffs: Vec<(usize, f64)>,
    negatives: Vec<usize>,
}

fn hidden(token_vectors: &Matrix, query: &[f64], context: &[usize], divisor: f64, h: &mut Vec<f64>) {
    h.clear();
    h.extend_from_slice(query);
    for &c in context {
        axpy(1.0, token_vectors.row(c), h);
    }
    for v in h.iter_mut() {
        *v /= divisor;
    }
}

/// One SGD step on a single window. Returns the pre-update loss.
#[allow(clippy::too_many_arguments)]
fn sgd_step(
    token_vectors: &mut Matrix,
    output: &mut Matrix,
    query: &mut [f64],
    context: &[usize],
    target: usize,
    negatives: Option<&[usize]>,
    divisor: f64,
    lr: f64,
    update_shared: bool,
    s: &mut Scratch,
) -> f64 {
    hidden(token_vectors, query, context, divisor, &mut s.h);
    let loss = output_loss(output, &s.h, target, negatives, &mut s.logits, &mut s.coeffs);
    s.grad_h.clear();
    s.grad_h.resize(s.h.len(), 0.0);
    for &(j, g) in &s.coeffs {
        axpy(g, output.row(j), &mut s.grad_h);
    }
    if update_shared {
        for &(j, g) in &s.coeffs {
            axpy(-lr * g, &s.h, output.row_mut(j));
        }
        for &c in context {
            axpy(-lr / divisor, &s.grad_h, token_vectors.row_mut(c));
        }
    }
    axpy(-lr / divisor, &s.grad_h, query);
    loss
}

#[derive(Debug, Clone, PartialEq)]
pub struct Doc2VecModel {
    pub config: Doc2VecConfig,
    pub objective: Objective,
    pub vocab: Vocabulary,
    /// Context token vectors, `|V| x dim`.
    pub token_vectors: Matrix,
    /// Output (prediction) weights, `|V| x dim`.
    pub output_weights: Matrix,
    pub query_ids: Vec<String>,
    /// One row per entry of `query_ids`.
    pub query_vectors: Matrix,
    query_index: HashMap<String, usize>,
}

/// Exact gradients of one window's loss, used for gradient checks.
#[derive(Debug, Clone)]
pub struct StepGradients {
    pub loss: f64,
    pub query: Vec<f64>,
    pub token_vectors: Matrix,
    pub output_weights: Matrix,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainReport {
    /// Mean per-window loss of each epoch.
    pub epoch_losses: Vec<f64>,
}

impl Doc2VecModel {
    pub(crate) fn from_parts(
        config: Doc2VecConfig,
        objective: Objective,
        vocab: Vocabulary,
        token_vectors: Matrix,
        output_weights: Matrix,
        query_ids: Vec<String>,
        query_vectors: Matrix,
    ) -> Self {
        let query_index = query_ids.iter().enumerate().map(|(i, id)| (id.clone(), i)).collect();
        Self {
            config,
            objective,
            vocab,
            token_vectors,
            output_weights,
            query_ids,
            query_vectors,
            query_index,
        }
    }

    /// An untrained model with every parameter zero.
    pub fn zeros(vocab: Vocabulary, query_ids: Vec<String>, config: Doc2VecConfig, objective: Objective) -> Self {
        let (v, d) = (vocab.len(), config.dim);
        let n = query_ids.len();
        Self::from_parts(
            config,
            objective,
            vocab,
            Matrix::zeros(v, d),
            Matrix::zeros(v, d),
            query_ids,
            Matrix::zeros(n, d),
        )
    }

    pub fn dim(&self) -> usize {
        self.config.dim
    }

    pub fn query_index(&self, id: &str) -> Option<usize> {
        self.query_index.get(id).copied()
    }

    pub fn query_vector(&self, id: &str) -> Option<QueryVector> {
        self.query_index(id)
            .map(|i| QueryVector::new(id, self.query_vectors.row(i).to_vec()))
    }

    /// Training-time vectors for every query, in corpus order.
    pub fn query_vectors(&self) -> Vec<QueryVector> {
        self.query_ids
            .iter()
            .enumerate()
            .map(|(i, id)| QueryVector::new(id.clone(), self.query_vectors.row(i).to_vec()))
            .collect()
    }

    pub fn is_finite(&self) -> bool {
        self.token_vectors.is_finite() && self.output_weights.is_finite() && self.query_vectors.is_finite()
    }

    fn negatives_for(&self, negatives: &[usize]) -> Option<Vec<usize>> {
        match self.objective {
            Objective::Softmax => None,
            Objective::NegativeSampling(_) => Some(negatives.to_vec()),
        }
    }

    /// Loss of one window without touching the parameters. `negatives` is
    /// ignored under the full softmax.
    pub fn window_loss(&self, query: usize, context: &[usize], target: usize, negatives: &[usize]) -> f64 {
        let mut s = Scratch::default();
        hidden(&self.token_vectors, self.query_vectors.row(query), context, self.config.divisor(), &mut s.h);
        let negs = self.negatives_for(negatives);
        output_loss(&self.output_weights, &s.h, target, negs.as_deref(), &mut s.logits, &mut s.coeffs)
    }

    /// Analytic gradients of [`Self::window_loss`].
    pub fn window_gradients(&self, query: usize, context: &[usize], target: usize, negatives: &[usize]) -> StepGradients {
        let divisor = self.config.divisor();
        let mut s = Scratch::default();
        hidden(&self.token_vectors, self.query_vectors.row(query), context, divisor, &mut s.h);
        let negs = self.negatives_for(negatives);
        let loss = output_loss(&self.output_weights, &s.h, target, negs.as_deref(), &mut s.logits, &mut s.coeffs);
        let d = self.dim();
        let mut grad_h = vec![0.0; d];
        let mut output = Matrix::zeros(self.vocab.len(), d);
        for &(j, g) in &s.coeffs {
            axpy(g, self.output_weights.row(j), &mut grad_h);
            axpy(g, &s.h, output.row_mut(j));
        }
        let scaled: Vec<f64> = grad_h.iter().map(|g| g / divisor).collect();
        let mut tokens = Matrix::zeros(self.vocab.len(), d);
        for &c in context {
            axpy(1.0, &scaled, tokens.row_mut(c));
        }
        StepGradients {
            loss,
            query: scaled,
            token_vectors: tokens,
            output_weights: output,
        }
    }

    /// One SGD update on a window with explicit negatives. Returns the loss
    /// before the update.
    pub fn predict_step_with_negatives(
        &mut self,
        query: usize,
        context: &[usize],
        target: usize,
        negatives: &[usize],
        lr: f64,
    ) -> Result<f64> {
        let divisor = self.config.divisor();
        let negs = self.negatives_for(negatives);
        let mut s = Scratch::default();
        let Self {
            token_vectors,
            output_weights,
            query_vectors,
            ..
        } = self;
        let loss = sgd_step(
            token_vectors,
            output_weights,
            query_vectors.row_mut(query),
            context,
            target,
            negs.as_deref(),
            divisor,
            lr,
            true,
            &mut s,
        );
        if !loss.is_finite() {
            return Err(Error::Diverged {
                step: 0,
                detail: format!("window loss {loss}; lower the learning rate"),
            });
        }
        Ok(loss)
    }

    /// One SGD update for `query_id`, drawing negatives from the model's
    /// noise distribution when negative sampling is active.
    pub fn predict_step(
        &mut self,
        query_id: &str,
        context: &[usize],
        target: usize,
        lr: f64,
        rng: &mut impl Rng,
    ) -> Result<f64> {
        let q = self
            .query_index(query_id)
            .ok_or_else(|| Error::MissingVector(query_id.to_string()))?;
        let mut negs = Vec::new();
        if let Objective::NegativeSampling(n) = self.objective {
            NoiseTable::new(&self.vocab).draw(n, target, rng, &mut negs);
        }
        self.predict_step_with_negatives(q, context, target, &negs, lr)
    }

    fn encode_windows(&self, seq: &TokenSeq) -> Vec<(Vec<usize>, usize)> {
        let ids = self.vocab.encode(&seq.tokens);
        enumerate_contexts(&ids, self.config.window_k, &SEQUENCE_END_INDEX)
    }

    /// Learns a vector for `seq` with every token and output weight frozen.
    /// The starting vector is drawn from a stream keyed by the model seed
    /// and the query id; `steps` passes are made over the sequence's windows.
    pub fn infer_vector(&self, seq: &TokenSeq, steps: usize, lr: f64) -> QueryVector {
        let d = self.dim();
        let key = rng::fnv1a(seq.query_id.as_bytes());
        let mut init = rng::keyed_rng(self.config.seed, &[0x1AFE, key]);
        let bound = 0.5 / d as f64;
        let mut query: Vec<f64> = (0..d).map(|_| init.gen_range(-bound..bound)).collect();
        let windows = self.encode_windows(seq);
        let total = (steps * windows.len()).max(1) as f64;
        let noise = NoiseTable::new(&self.vocab);
        let mut neg_rng = rng::keyed_rng(self.config.seed, &[0x1AFF, key]);
        let divisor = self.config.divisor();
        let mut s = Scratch::default();
        let mut tokens = self.token_vectors.clone();
        let mut output = self.output_weights.clone();
        let mut done = 0usize;
        for _ in 0..steps {
            for (ctx, target) in &windows {
                let alpha = lr * (1.0 - 0.99 * done as f64 / total);
                let negs = match self.objective {
                    Objective::Softmax => None,
                    Objective::NegativeSampling(n) => {
                        noise.draw(n, *target, &mut neg_rng, &mut s.negatives);
                        Some(std::mem::take(&mut s.negatives))
                    }
                };
                sgd_step(
                    &mut tokens,
                    &mut output,
                    &mut query,
                    ctx,
                    *target,
                    negs.as_deref(),
                    divisor,
                    alpha,
                    false,
                    &mut s,
                );
                if let Some(n) = negs {
                    s.negatives = n;
                }
                done += 1;
            }
        }
        QueryVector::new(seq.query_id.clone(), query)
    }

    fn round_to_f32(&mut self) {
        self.token_vectors.round_to_f32();
        self.output_weights.round_to_f32();
        self.query_vectors.round_to_f32();
    }
}

/// Trains query vectors over `corpus`. See [`train_with_report`].
pub fn train(corpus: &[TokenSeq], config: &Doc2VecConfig) -> Result<Doc2VecModel> {
    train_with_report(corpus, config).map(|(m, _)| m)
}

struct EpochPlan<'a> {
    windows: &'a [Vec<(Vec<usize>, usize)>],
    total_steps: f64,
    lr0: f64,
    divisor: f64,
    objective: Objective,
    noise: &'a NoiseTable,
}

struct Shard<'a> {
    tokens: &'a mut Matrix,
    output: &'a mut Matrix,
    queries: &'a mut Matrix,
}

/// Trains `order` (query indices) on one parameter copy. `step0` is the
/// global step index of the first window and `stride` the number of
/// workers, so every worker follows the same learning-rate schedule.
fn run_shard(
    plan: &EpochPlan,
    shard: Shard,
    order: &[usize],
    step0: usize,
    stride: usize,
    rng: &mut ChaCha8Rng,
) -> std::result::Result<(f64, usize), usize> {
    let mut s = Scratch::default();
    let (mut loss_sum, mut n) = (0.0, 0usize);
    let mut step = step0;
    for &q in order {
        for (ctx, target) in &plan.windows[q] {
            let lr = plan.lr0 * (1.0 - 0.99 * (step as f64 / plan.total_steps).min(1.0));
            let negs = match plan.objective {
                Objective::Softmax => None,
                Objective::NegativeSampling(k) => {
                    plan.noise.draw(k, *target, rng, &mut s.negatives);
                    Some(std::mem::take(&mut s.negatives))
                }
            };
            let loss = sgd_step(
                shard.tokens,
                shard.output,
                shard.queries.row_mut(q),
                ctx,
                *target,
                negs.as_deref(),
                plan.divisor,
                lr,
                true,
                &mut s,
            );
            if let Some(v) = negs {
                s.negatives = v;
            }
            if !loss.is_finite() {
                return Err(step);
            }
            loss_sum += loss;
            n += 1;
            step += stride;
        }
    }
    Ok((loss_sum, n))
}

/// Trains a model and reports the mean loss of every epoch.
///
/// Token and query vectors start uniform in `[-0.5/dim, 0.5/dim]`, output
/// weights at zero. Queries are visited in a freshly shuffled order each
/// epoch. With `workers > 1`, each epoch splits the shuffled order into
/// interleaved shards trained on private copies of the shared weights,
/// which are then averaged; results are reproducible for a fixed
/// `(seed, workers)`. Final parameters are rounded to `f32`, the persisted
/// precision.
pub fn train_with_report(corpus: &[TokenSeq], config: &Doc2VecConfig) -> Result<(Doc2VecModel, TrainReport)> {
    config.validate()?;
    if corpus.is_empty() {
        return Err(Error::Empty("doc2vec training corpus".into()));
    }
    let vocab = build_vocabulary(corpus, config.min_count)?;
    if vocab.regular_len() == 0 {
        return Err(Error::Empty(format!(
            "vocabulary is empty after min_count={} filtering",
            config.min_count
        )));
    }
    let objective = if config.negatives == 0 || vocab.len() < config.full_softmax_max_vocab {
        Objective::Softmax
    } else {
        Objective::NegativeSampling(config.negatives)
    };
    let d = config.dim;
    let bound = 0.5 / d as f64;
    let mut init = rng::keyed_rng(config.seed, &[0xD0C]);
    let token_vectors = Matrix::from_fn(vocab.len(), d, |_, _| init.gen_range(-bound..bound));
    let query_vectors = Matrix::from_fn(corpus.len(), d, |_, _| init.gen_range(-bound..bound));
    let ids: Vec<String> = corpus.iter().map(|s| s.query_id.clone()).collect();
    {
        let mut seen = std::collections::HashSet::new();
        if let Some(dup) = ids.iter().find(|id| !seen.insert(id.as_str())) {
            return Err(Error::DuplicateId {
                line: 0,
                id: dup.clone(),
            });
        }
    }
    let mut model = Doc2VecModel::from_parts(
        config.clone(),
        objective,
        vocab,
        token_vectors,
        Matrix::zeros(0, 0),
        ids,
        query_vectors,
    );
    model.output_weights = Matrix::zeros(model.vocab.len(), d);

    let windows: Vec<_> = corpus.iter().map(|s| model.encode_windows(s)).collect();
    let per_epoch: usize = windows.iter().map(Vec::len).sum();
    let noise = NoiseTable::new(&model.vocab);
    let plan = EpochPlan {
        windows: &windows,
        total_steps: (per_epoch * config.epochs).max(1) as f64,
        lr0: config.learning_rate,
        divisor: config.divisor(),
        objective,
        noise: &noise,
    };
    let mut report = TrainReport::default();
    let workers = config.workers.min(corpus.len()).max(1);
    for epoch in 0..config.epochs {
        let mut order: Vec<usize> = (0..corpus.len()).collect();
        order.shuffle(&mut rng::keyed_rng(config.seed, &[0xE90C, epoch as u64]));
        let step0 = epoch * per_epoch;
        let (loss_sum, n) = if workers == 1 {
            let mut neg_rng = rng::keyed_rng(config.seed, &[0x5A3, epoch as u64]);
            let Doc2VecModel {
                token_vectors,
                output_weights,
                query_vectors,
                ..
            } = &mut model;
            run_shard(
                &plan,
                Shard {
                    tokens: token_vectors,
                    output: output_weights,
                    queries: query_vectors,
                },
                &order,
                step0,
                1,
                &mut neg_rng,
            )
            .map_err(|step| Error::Diverged {
                step,
                detail: "doc2vec window loss; lower the learning rate".into(),
            })?
        } else {
            train_parallel_epoch(&mut model, &plan, &order, step0, workers, epoch)?
        };
        report.epoch_losses.push(loss_sum / n.max(1) as f64);
    }
    model.round_to_f32();
    Ok((model, report))
}

fn train_parallel_epoch(
    model: &mut Doc2VecModel,
    plan: &EpochPlan,
    order: &[usize],
    step0: usize,
    workers: usize,
    epoch: usize,
) -> Result<(f64, usize)> {
    let shards: Vec<Vec<usize>> = (0..workers)
        .map(|w| order.iter().skip(w).step_by(workers).copied().collect())
        .collect();
    let seed = model.config.seed;
    let shared: &Doc2VecModel = model;
    let results: Vec<_> = std::thread::scope(|scope| {
        let handles: Vec<_> = shards
            .iter()
            .enumerate()
            .map(|(w, shard)| {
                let mut tokens = shared.token_vectors.clone();
                let mut output = shared.output_weights.clone();
                let mut queries = shared.query_vectors.clone();
                scope.spawn(move || {
                    let mut neg_rng = rng::keyed_rng(seed, &[0x5A3, epoch as u64, w as u64]);
                    let r = run_shard(
                        plan,
                        Shard {
                            tokens: &mut tokens,
                            output: &mut output,
                            queries: &mut queries,
                        },
                        shard,
                        step0 + w,
                        workers,
                        &mut neg_rng,
                    );
                    (r, tokens, output, queries)
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("worker panicked")).collect()
    });
    let scale = 1.0 / workers as f64;
    let mut tokens = Matrix::zeros(model.token_vectors.rows(), model.dim());
    let mut output = Matrix::zeros(model.output_weights.rows(), model.dim());
    let (mut loss_sum, mut n) = (0.0, 0);
    for ((r, t, o, q), shard) in results.into_iter().zip(&shards) {
        let (l, c) = r.map_err(|step| Error::Diverged {
            step,
            detail: "doc2vec window loss; lower the learning rate".into(),
        })?;
        loss_sum += l;
        n += c;
        axpy(scale, t.as_slice(), tokens.as_mut_slice());
        axpy(scale, o.as_slice(), output.as_mut_slice());
        for &i in shard {
            model.query_vectors.row_mut(i).copy_from_slice(q.row(i));
        }
    }
    model.token_vectors = tokens;
    model.output_weights = output;
    Ok((loss_sum, n))
}
