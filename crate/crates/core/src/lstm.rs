//! LSTM encoder-decoder autoencoder.
//!
//! The encoder folds the cell over a query's token embeddings; its final
//! hidden state is the query vector. The decoder starts from the encoder's
//! final state and is trained to reproduce the tokens followed by
//! `SEQUENCE_END`.

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{axpy, cross_entropy, sigmoid, softmax, Matrix};
use crate::preprocess::{build_vocabulary, TokenSeq, Vocabulary, SEQUENCE_END_INDEX};
use crate::rng;
use crate::QueryVector;

/// Gate order used by every per-gate array: input, forget, output, update.
pub const GATES: usize = 4;
const I: usize = 0;
const F: usize = 1;
const O: usize = 2;
const U: usize = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LstmConfig {
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub gradient_clip_norm: f64,
    pub seed: u64,
    /// Longer sequences are truncated to this many tokens.
    pub max_sequence_length: usize,
    /// Sequences per SGD step. Gradients inside a batch are computed in
    /// parallel and summed in corpus order.
    pub batch_size: usize,
    pub min_count: u64,
    /// Feed the decoder its own previous prediction instead of the true token.
    pub autoregressive_training: bool,
}

impl Default for LstmConfig {
    fn default() -> Self {
        Self {
            input_dim: 64,
            hidden_dim: 128,
            epochs: 10,
            learning_rate: 0.1,
            gradient_clip_norm: 5.0,
            seed: 1,
            max_sequence_length: 256,
            batch_size: 1,
            min_count: 1,
            autoregressive_training: false,
        }
    }
}

impl LstmConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(format!("lstm config: {m}")));
        if self.input_dim == 0 || self.hidden_dim == 0 {
            return bad("input_dim and hidden_dim must be at least 1");
        }
        if self.epochs == 0 {
            return bad("epochs must be at least 1");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive");
        }
        if !(self.gradient_clip_norm > 0.0) {
            return bad("gradient_clip_norm must be positive");
        }
        if self.max_sequence_length == 0 {
            return bad("max_sequence_length must be at least 1");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1");
        }
        Ok(())
    }
}

/// Weights of one LSTM cell. `w[g]` is `hidden x input`, `u[g]` is
/// `hidden x hidden`, `b[g]` has length `hidden`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellParams {
    pub w: [Matrix; GATES],
    pub u: [Matrix; GATES],
    pub b: [Vec<f64>; GATES],
}

impl CellParams {
    pub fn zeros(input_dim: usize, hidden_dim: usize) -> Self {
        Self {
            w: std::array::from_fn(|_| Matrix::zeros(hidden_dim, input_dim)),
            u: std::array::from_fn(|_| Matrix::zeros(hidden_dim, hidden_dim)),
            b: std::array::from_fn(|_| vec![0.0; hidden_dim]),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.w[0].cols()
    }

    pub fn hidden_dim(&self) -> usize {
        self.w[0].rows()
    }

    fn slices(&self) -> impl Iterator<Item = &[f64]> {
        self.w
            .iter()
            .map(Matrix::as_slice)
            .chain(self.u.iter().map(Matrix::as_slice))
            .chain(self.b.iter().map(Vec::as_slice))
    }

    fn slices_mut(&mut self) -> impl Iterator<Item = &mut [f64]> {
        self.w
            .iter_mut()
            .map(Matrix::as_mut_slice)
            .chain(self.u.iter_mut().map(Matrix::as_mut_slice))
            .chain(self.b.iter_mut().map(Vec::as_mut_slice))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LstmState {
    pub h: Vec<f64>,
    pub c: Vec<f64>,
}

impl LstmState {
    pub fn zeros(hidden_dim: usize) -> Self {
        Self {
            h: vec![0.0; hidden_dim],
            c: vec![0.0; hidden_dim],
        }
    }
}

/// Gate activations and output of one cell step, kept for backpropagation.
#[derive(Debug, Clone)]
pub struct CellTrace {
    pub gates: [Vec<f64>; GATES],
    pub state: LstmState,
    tanh_c: Vec<f64>,
}

fn cell_step(p: &CellParams, x: &[f64], prev: &LstmState) -> CellTrace {
    let h = p.hidden_dim();
    let mut gates: [Vec<f64>; GATES] = std::array::from_fn(|_| vec![0.0; h]);
    let mut tmp = vec![0.0; h];
    for (g, out) in gates.iter_mut().enumerate() {
        p.w[g].matvec(x, out);
        p.u[g].matvec(&prev.h, &mut tmp);
        for j in 0..h {
            let a = out[j] + tmp[j] + p.b[g][j];
            out[j] = if g == U { a.tanh() } else { sigmoid(a) };
        }
    }
    let c: Vec<f64> = (0..h)
        .map(|j| gates[I][j] * gates[U][j] + gates[F][j] * prev.c[j])
        .collect();
    let tanh_c: Vec<f64> = c.iter().map(|v| v.tanh()).collect();
    let hv = (0..h).map(|j| gates[O][j] * tanh_c[j]).collect();
    CellTrace {
        gates,
        state: LstmState { h: hv, c },
        tanh_c,
    }
}

/// One LSTM transition, returning the gate activations as well.
pub fn cell_forward_traced(p: &CellParams, x: &[f64], prev: &LstmState) -> Result<CellTrace> {
    let h = p.hidden_dim();
    if x.len() != p.input_dim() {
        return Err(Error::DimensionMismatch {
            expected: p.input_dim(),
            actual: x.len(),
        });
    }
    for len in [prev.h.len(), prev.c.len()] {
        if len != h {
            return Err(Error::DimensionMismatch { expected: h, actual: len });
        }
    }
    Ok(cell_step(p, x, prev))
}

/// One LSTM transition:
/// `i, f, o = σ(W x + U h + b)`, `u = tanh(W x + U h + b)`,
/// `c = i ⊙ u + f ⊙ c_prev`, `h = o ⊙ tanh(c)`.
pub fn cell_forward(p: &CellParams, x: &[f64], prev: &LstmState) -> Result<LstmState> {
    cell_forward_traced(p, x, prev).map(|t| t.state)
}

/// Every trainable tensor of the autoencoder. Gradients use the same shape.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LstmParams {
    /// `|V| x input_dim`
    pub embeddings: Matrix,
    pub encoder: CellParams,
    pub decoder: CellParams,
    /// `|V| x hidden_dim`
    pub output: Matrix,
    pub output_bias: Vec<f64>,
}

impl LstmParams {
    pub fn zeros(vocab_len: usize, input_dim: usize, hidden_dim: usize) -> Self {
        Self {
            embeddings: Matrix::zeros(vocab_len, input_dim),
            encoder: CellParams::zeros(input_dim, hidden_dim),
            decoder: CellParams::zeros(input_dim, hidden_dim),
            output: Matrix::zeros(vocab_len, hidden_dim),
            output_bias: vec![0.0; vocab_len],
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.embeddings.rows(), self.embeddings.cols(), self.encoder.hidden_dim())
    }

    /// All tensors in a fixed order.
    pub fn slices(&self) -> Vec<&[f64]> {
        let mut out = vec![self.embeddings.as_slice()];
        out.extend(self.encoder.slices());
        out.extend(self.decoder.slices());
        out.push(self.output.as_slice());
        out.push(&self.output_bias);
        out
    }

    pub fn slices_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = vec![self.embeddings.as_mut_slice()];
        out.extend(self.encoder.slices_mut());
        out.extend(self.decoder.slices_mut());
        out.push(self.output.as_mut_slice());
        out.push(&mut self.output_bias);
        out
    }

    pub fn len(&self) -> usize {
        self.slices().iter().map(|s| s.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn norm(&self) -> f64 {
        self.slices()
            .iter()
            .flat_map(|s| s.iter())
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.slices().iter().all(|s| s.iter().all(|v| v.is_finite()))
    }

    /// `self += a * other`
    pub fn axpy(&mut self, a: f64, other: &LstmParams) {
        for (dst, src) in self.slices_mut().into_iter().zip(other.slices()) {
            axpy(a, src, dst);
        }
    }

    fn round_to_f32(&mut self) {
        for s in self.slices_mut() {
            for v in s {
                *v = *v as f32 as f64;
            }
        }
    }
}

/// Scales `grads` so their global norm is at most `max_norm`. Returns the
/// norm before clipping.
pub fn clip_global_norm(grads: &mut LstmParams, max_norm: f64) -> f64 {
    let n = grads.norm();
    if n > max_norm {
        let scale = max_norm / n;
        for s in grads.slices_mut() {
            for v in s {
                *v *= scale;
            }
        }
    }
    n
}

#[derive(Debug, Clone, PartialEq)]
pub struct LstmModel {
    pub config: LstmConfig,
    pub vocab: Vocabulary,
    pub params: LstmParams,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainReport {
    /// Mean per-sequence loss of each epoch.
    pub epoch_losses: Vec<f64>,
    /// Total cell evaluations (encoder plus decoder) over training.
    pub cell_evaluations: usize,
}

struct Forward {
    enc: Vec<CellTrace>,
    dec: Vec<CellTrace>,
    dec_inputs: Vec<usize>,
    targets: Vec<usize>,
    probs: Vec<Vec<f64>>,
    loss: f64,
}

impl LstmModel {
    /// An untrained model with every parameter zero.
    pub fn zeros(vocab: Vocabulary, config: LstmConfig) -> Self {
        let params = LstmParams::zeros(vocab.len(), config.input_dim, config.hidden_dim);
        Self { config, vocab, params }
    }

    pub fn hidden_dim(&self) -> usize {
        self.params.encoder.hidden_dim()
    }

    /// Token indices after OOV mapping and truncation.
    pub fn token_ids(&self, seq: &TokenSeq) -> Result<Vec<usize>> {
        let n = seq.tokens.len().min(self.config.max_sequence_length);
        if n == 0 {
            return Err(Error::Empty(format!("token sequence for query {}", seq.query_id)));
        }
        Ok(self.vocab.encode(&seq.tokens[..n]))
    }

    fn encode_ids(&self, ids: &[usize]) -> Vec<CellTrace> {
        let p = &self.params;
        let mut state = LstmState::zeros(self.hidden_dim());
        let mut out = Vec::with_capacity(ids.len());
        for &t in ids {
            let tr = cell_step(&p.encoder, p.embeddings.row(t), &state);
            state = tr.state.clone();
            out.push(tr);
        }
        out
    }

    /// Final encoder state for `seq`, folded from the zero state.
    pub fn encode(&self, seq: &TokenSeq) -> Result<LstmState> {
        let ids = self.token_ids(seq)?;
        Ok(self.encode_ids(&ids).pop().expect("non-empty").state)
    }

    /// The final encoder hidden state as the query vector.
    pub fn infer_vector(&self, seq: &TokenSeq) -> Result<QueryVector> {
        Ok(QueryVector::new(seq.query_id.clone(), self.encode(seq)?.h))
    }

    fn logits(&self, h: &[f64], out: &mut [f64]) {
        self.params.output.matvec(h, out);
        axpy(1.0, &self.params.output_bias, out);
    }

    fn argmax(v: &[f64]) -> usize {
        v.iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |(bi, bv), (i, &x)| if x > bv { (i, x) } else { (bi, bv) })
            .0
    }

    fn forward(&self, ids: &[usize], autoregressive: bool) -> Forward {
        let p = &self.params;
        let enc = self.encode_ids(ids);
        let mut state = enc.last().expect("non-empty").state.clone();
        let steps = ids.len() + 1;
        let targets: Vec<usize> = ids.iter().copied().chain([SEQUENCE_END_INDEX]).collect();
        let v = self.vocab.len();
        let mut dec = Vec::with_capacity(steps);
        let mut dec_inputs = Vec::with_capacity(steps);
        let mut probs = Vec::with_capacity(steps);
        let mut loss = 0.0;
        let mut input = SEQUENCE_END_INDEX;
        let mut z = vec![0.0; v];
        for (t, &target) in targets.iter().enumerate() {
            let tr = cell_step(&p.decoder, p.embeddings.row(input), &state);
            self.logits(&tr.state.h, &mut z);
            loss += cross_entropy(&z, target);
            let mut pr = vec![0.0; v];
            softmax(&z, &mut pr);
            dec_inputs.push(input);
            input = if autoregressive {
                Self::argmax(&z)
            } else {
                targets[t]
            };
            state = tr.state.clone();
            dec.push(tr);
            probs.push(pr);
        }
        Forward {
            enc,
            dec,
            dec_inputs,
            targets,
            probs,
            loss: loss / steps as f64,
        }
    }

    /// Mean token cross-entropy of reproducing `seq` (plus the terminal
    /// `SEQUENCE_END`) and its gradient with respect to every parameter.
    pub fn reconstruction_loss(&self, seq: &TokenSeq) -> Result<(f64, LstmParams)> {
        let ids = self.token_ids(seq)?;
        let fwd = self.forward(&ids, self.config.autoregressive_training);
        if !fwd.loss.is_finite() {
            return Err(Error::Diverged {
                step: 0,
                detail: format!("reconstruction loss {} for query {}", fwd.loss, seq.query_id),
            });
        }
        let grads = self.backward(&ids, &fwd);
        Ok((fwd.loss, grads))
    }

    fn backward(&self, ids: &[usize], fwd: &Forward) -> LstmParams {
        let p = &self.params;
        let hd = self.hidden_dim();
        let mut g = p.zeros_like();
        let scale = 1.0 / fwd.targets.len() as f64;
        let mut dh = vec![0.0; hd];
        let mut dc = vec![0.0; hd];
        let mut dx = vec![0.0; p.embeddings.cols()];
        for t in (0..fwd.dec.len()).rev() {
            let mut dz = fwd.probs[t].clone();
            dz[fwd.targets[t]] -= 1.0;
            for v in &mut dz {
                *v *= scale;
            }
            let h = &fwd.dec[t].state.h;
            g.output.add_outer(&dz, h);
            axpy(1.0, &dz, &mut g.output_bias);
            p.output.matvec_t_acc(&dz, &mut dh);
            let prev = if t == 0 {
                &fwd.enc.last().expect("non-empty").state
            } else {
                &fwd.dec[t - 1].state
            };
            let x = p.embeddings.row(fwd.dec_inputs[t]);
            dx.iter_mut().for_each(|v| *v = 0.0);
            let (ndh, ndc) = cell_backward(&p.decoder, &mut g.decoder, &fwd.dec[t], prev, x, &dh, &dc, &mut dx);
            axpy(1.0, &dx, g.embeddings.row_mut(fwd.dec_inputs[t]));
            dh = ndh;
            dc = ndc;
        }
        let zero = LstmState::zeros(hd);
        for t in (0..fwd.enc.len()).rev() {
            let prev = if t == 0 { &zero } else { &fwd.enc[t - 1].state };
            let x = p.embeddings.row(ids[t]);
            dx.iter_mut().for_each(|v| *v = 0.0);
            let (ndh, ndc) = cell_backward(&p.encoder, &mut g.encoder, &fwd.enc[t], prev, x, &dh, &dc, &mut dx);
            axpy(1.0, &dx, g.embeddings.row_mut(ids[t]));
            dh = ndh;
            dc = ndc;
        }
        g
    }

    /// Greedy decoding from the encoded state: each step consumes the
    /// previous prediction, stopping at `SEQUENCE_END` or after
    /// `max_sequence_length + 1` steps.
    pub fn reconstruct(&self, seq: &TokenSeq) -> Result<Vec<String>> {
        let ids = self.token_ids(seq)?;
        let p = &self.params;
        let mut state = self.encode_ids(&ids).pop().expect("non-empty").state;
        let mut z = vec![0.0; self.vocab.len()];
        let mut input = SEQUENCE_END_INDEX;
        let mut out = Vec::new();
        for _ in 0..=self.config.max_sequence_length {
            state = cell_step(&p.decoder, p.embeddings.row(input), &state).state;
            self.logits(&state.h, &mut z);
            input = Self::argmax(&z);
            if input == SEQUENCE_END_INDEX {
                break;
            }
            out.push(self.vocab.token(input).to_string());
        }
        Ok(out)
    }

    /// Fraction of positions, over all sequences, where the greedy
    /// reconstruction reproduces the (vocabulary-mapped, truncated) token.
    /// Missing or surplus positions count as errors.
    pub fn reconstruction_accuracy(&self, corpus: &[TokenSeq]) -> Result<f64> {
        let (mut hit, mut total) = (0usize, 0usize);
        for seq in corpus {
            let truth: Vec<usize> = self.token_ids(seq)?;
            let got = self.vocab.encode(&self.reconstruct(seq)?);
            hit += truth.iter().zip(&got).filter(|(a, b)| a == b).count();
            total += truth.len().max(got.len());
        }
        Ok(if total == 0 { 0.0 } else { hit as f64 / total as f64 })
    }

    fn round_to_f32(&mut self) {
        self.params.round_to_f32();
    }
}

/// Backpropagates through one cell step. `dh`/`dc` are gradients arriving
/// at the step's output state; returns those for the previous state and
/// accumulates parameter gradients into `g` and the input gradient into `dx`.
#[allow(clippy::too_many_arguments)]
fn cell_backward(
    p: &CellParams,
    g: &mut CellParams,
    tr: &CellTrace,
    prev: &LstmState,
    x: &[f64],
    dh: &[f64],
    dc: &[f64],
    dx: &mut [f64],
) -> (Vec<f64>, Vec<f64>) {
    let h = p.hidden_dim();
    let gt = &tr.gates;
    let mut da: [Vec<f64>; GATES] = std::array::from_fn(|_| vec![0.0; h]);
    let mut dc_prev = vec![0.0; h];
    for j in 0..h {
        let (i, f, o, u) = (gt[I][j], gt[F][j], gt[O][j], gt[U][j]);
        let tc = tr.tanh_c[j];
        let dct = dc[j] + dh[j] * o * (1.0 - tc * tc);
        da[I][j] = dct * u * i * (1.0 - i);
        da[F][j] = dct * prev.c[j] * f * (1.0 - f);
        da[O][j] = dh[j] * tc * o * (1.0 - o);
        da[U][j] = dct * i * (1.0 - u * u);
        dc_prev[j] = dct * f;
    }
    let mut dh_prev = vec![0.0; h];
    for k in 0..GATES {
        g.w[k].add_outer(&da[k], x);
        g.u[k].add_outer(&da[k], &prev.h);
        axpy(1.0, &da[k], &mut g.b[k]);
        p.w[k].matvec_t_acc(&da[k], dx);
        p.u[k].matvec_t_acc(&da[k], &mut dh_prev);
    }
    (dh_prev, dc_prev)
}

pub fn train(corpus: &[TokenSeq], config: &LstmConfig) -> Result<LstmModel> {
    train_with_report(corpus, config).map(|(m, _)| m)
}

/// Trains the autoencoder with clipped SGD.
///
/// Parameters start uniform in `[-1/sqrt(hidden), 1/sqrt(hidden)]`. Each
/// epoch visits the corpus in a keyed shuffled order, in batches of
/// `batch_size`. Batch gradients are summed in a fixed order and scaled by
/// the batch length, so results do not depend on the rayon thread count.
/// Final parameters are rounded to `f32`.
pub fn train_with_report(corpus: &[TokenSeq], config: &LstmConfig) -> Result<(LstmModel, TrainReport)> {
    config.validate()?;
    if corpus.is_empty() {
        return Err(Error::Empty("lstm training corpus".into()));
    }
    if let Some(s) = corpus.iter().find(|s| s.is_empty()) {
        return Err(Error::Empty(format!("token sequence for query {}", s.query_id)));
    }
    let vocab = build_vocabulary(corpus, config.min_count)?;
    let mut model = LstmModel::zeros(vocab, config.clone());
    let bound = 1.0 / (config.hidden_dim as f64).sqrt();
    let mut init = rng::keyed_rng(config.seed, &[0x157]);
    for s in model.params.slices_mut() {
        for v in s {
            *v = init.gen_range(-bound..bound);
        }
    }
    let mut report = TrainReport::default();
    let mut step = 0usize;
    for epoch in 0..config.epochs {
        let mut order: Vec<usize> = (0..corpus.len()).collect();
        order.shuffle(&mut rng::keyed_rng(config.seed, &[0xE90C, epoch as u64]));
        let mut epoch_loss = 0.0;
        for batch in order.chunks(config.batch_size) {
            let results: Vec<Result<(f64, LstmParams)>> = if batch.len() == 1 {
                vec![model.reconstruction_loss(&corpus[batch[0]])]
            } else {
                batch.par_iter().map(|&i| model.reconstruction_loss(&corpus[i])).collect()
            };
            let mut grads = model.params.zeros_like();
            for (r, &i) in results.into_iter().zip(batch) {
                let (loss, g) = r.map_err(|_| Error::Diverged {
                    step,
                    detail: format!("lstm reconstruction loss for query {}", corpus[i].query_id),
                })?;
                epoch_loss += loss;
                grads.axpy(1.0, &g);
                let n = model.token_ids(&corpus[i])?.len();
                report.cell_evaluations += 2 * n + 1;
            }
            if batch.len() > 1 {
                let inv = 1.0 / batch.len() as f64;
                for s in grads.slices_mut() {
                    s.iter_mut().for_each(|v| *v *= inv);
                }
            }
            clip_global_norm(&mut grads, config.gradient_clip_norm);
            model.params.axpy(-config.learning_rate, &grads);
            if !model.params.is_finite() {
                return Err(Error::Diverged {
                    step,
                    detail: "lstm parameters became non-finite; lower the learning rate".into(),
                });
            }
            step += 1;
        }
        let mean = epoch_loss / corpus.len() as f64;
        log::debug!("lstm epoch {epoch}: mean loss {mean:.4}");
        report.epoch_losses.push(mean);
    }
    model.round_to_f32();
    Ok((model, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::preprocess::SourceKind;

    fn seq(id: &str, toks: &str) -> TokenSeq {
        TokenSeq::new(id, toks.split_whitespace().map(String::from).collect(), SourceKind::RawSql)
    }

    fn tiny_config() -> LstmConfig {
        LstmConfig {
            input_dim: 3,
            hidden_dim: 4,
            epochs: 1,
            ..Default::default()
        }
    }

    #[test]
    fn zero_cell_gives_half_gates() {
        let p = CellParams::zeros(2, 3);
        let tr = cell_forward_traced(&p, &[1.0, -1.0], &LstmState::zeros(3)).unwrap();
        for g in [I, F, O] {
            assert!(tr.gates[g].iter().all(|&v| v == 0.5));
        }
        assert!(tr.gates[U].iter().all(|&v| v == 0.0));
        assert_eq!(tr.state, LstmState::zeros(3));
    }

    #[test]
    fn zero_cell_halves_memory() {
        let p = CellParams::zeros(1, 2);
        let prev = LstmState {
            h: vec![0.0; 2],
            c: vec![2.0, -4.0],
        };
        let s = cell_forward(&p, &[0.0], &prev).unwrap();
        assert_eq!(s.c, vec![1.0, -2.0]);
        assert_eq!(s.h, vec![0.5 * 1f64.tanh(), 0.5 * (-2f64).tanh()]);
    }

    #[test]
    fn dimension_mismatch() {
        let p = CellParams::zeros(2, 3);
        assert!(matches!(
            cell_forward(&p, &[1.0], &LstmState::zeros(3)),
            Err(Error::DimensionMismatch { expected: 2, actual: 1 })
        ));
    }

    #[test]
    fn zero_model_loss_is_log_vocab() {
        let s = seq("a", "x y z x");
        let vocab = build_vocabulary(std::slice::from_ref(&s), 1).unwrap();
        let n = vocab.len() as f64;
        let m = LstmModel::zeros(vocab, tiny_config());
        let (loss, _) = m.reconstruction_loss(&s).unwrap();
        assert!((loss - n.ln()).abs() < 1e-12);
    }

    #[test]
    fn truncation_matches_prefix() {
        let corpus = vec![seq("a", "p q r s t u")];
        let mut cfg = tiny_config();
        cfg.max_sequence_length = 3;
        let m = train(&corpus, &cfg).unwrap();
        let long = m.encode(&corpus[0]).unwrap();
        let short = m.encode(&seq("b", "p q r")).unwrap();
        assert_eq!(long, short);
    }

    #[test]
    fn single_token_is_one_cell_step() {
        let corpus = vec![seq("a", "p q")];
        let m = train(&corpus, &tiny_config()).unwrap();
        let s = seq("b", "q");
        let x = m.params.embeddings.row(m.vocab.index_of("q"));
        let direct = cell_forward(&m.params.encoder, x, &LstmState::zeros(4)).unwrap();
        assert_eq!(m.encode(&s).unwrap(), direct);
    }

    #[test]
    fn empty_sequence_is_rejected() {
        let corpus = vec![seq("a", "p q")];
        let m = train(&corpus, &tiny_config()).unwrap();
        assert!(matches!(m.infer_vector(&seq("e", "")), Err(Error::Empty(_))));
        assert!(train(&[seq("e", "")], &tiny_config()).is_err());
    }

    #[test]
    fn oov_tokens_map_to_unknown() {
        let corpus = vec![seq("a", "p q")];
        let m = train(&corpus, &tiny_config()).unwrap();
        let a = m.infer_vector(&seq("x", "never seen")).unwrap();
        let b = m.infer_vector(&seq("y", "UNKNOWN UNKNOWN")).unwrap();
        assert_eq!(a.values, b.values);
        assert_eq!(a.dim(), 4);
    }

    #[test]
    fn clipping_bounds_norm() {
        let mut g = LstmParams::zeros(3, 2, 2);
        g.output_bias = vec![30.0, 40.0, 0.0];
        assert_eq!(clip_global_norm(&mut g, 5.0), 50.0);
        assert!((g.norm() - 5.0).abs() < 1e-12);
    }

    #[test]
    fn config_validation() {
        for cfg in [
            LstmConfig { hidden_dim: 0, ..Default::default() },
            LstmConfig { epochs: 0, ..Default::default() },
            LstmConfig { max_sequence_length: 0, ..Default::default() },
            LstmConfig { learning_rate: -1.0, ..Default::default() },
        ] {
            assert!(cfg.validate().is_err());
        }
    }
}
