//! Oracles and fixtures shared by the integration suites.
#![allow(dead_code)]

use query2vec::corpus::{Query, Workload};
use query2vec::doc2vec::{Doc2VecConfig, Doc2VecModel, Objective};
use query2vec::linalg::Matrix;
use query2vec::lstm::{cell_forward, CellParams, LstmConfig, LstmModel, LstmState};
use query2vec::preprocess::{build_vocabulary, SourceKind, TokenSeq};
use query2vec::rng::keyed_rng;
use query2vec::QueryVector;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / (a.abs() + b.abs()).max(1e-7)
}

pub fn random_cell(r: &mut ChaCha8Rng, input: usize, hidden: usize, scale: f64) -> CellParams {
    let mut p = CellParams::zeros(input, hidden);
    for g in 0..4 {
        p.w[g].as_mut_slice().iter_mut().for_each(|v| *v = r.gen_range(-scale..scale));
        p.u[g].as_mut_slice().iter_mut().for_each(|v| *v = r.gen_range(-scale..scale));
        p.b[g].iter_mut().for_each(|v| *v = r.gen_range(-scale..scale));
    }
    p
}

fn sig(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Element-by-element evaluation of the cell equations.
pub fn scalar_cell(p: &CellParams, x: &[f64], h_prev: &[f64], c_prev: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let n = h_prev.len();
    let mut h = vec![0.0; n];
    let mut c = vec![0.0; n];
    for j in 0..n {
        let mut pre = [0.0; 4];
        for (g, a) in pre.iter_mut().enumerate() {
            let mut s = p.b[g][j];
            for (k, xk) in x.iter().enumerate() {
                s += p.w[g].get(j, k) * xk;
            }
            for (k, hk) in h_prev.iter().enumerate() {
                s += p.u[g].get(j, k) * hk;
            }
            *a = s;
        }
        let i = sig(pre[0]);
        let f = sig(pre[1]);
        let o = sig(pre[2]);
        let u = pre[3].tanh();
        c[j] = i * u + f * c_prev[j];
        h[j] = o * c[j].tanh();
    }
    (h, c)
}

/// Largest absolute difference between the vectorized cell and the scalar
/// oracle over `draws` random parameter sets and inputs.
pub fn cell_oracle_worst(draws: usize, seed: u64) -> f64 {
    let mut r = keyed_rng(seed, &[]);
    let mut worst: f64 = 0.0;
    for _ in 0..draws {
        let p = random_cell(&mut r, 3, 3, 1.5);
        let x: Vec<f64> = (0..3).map(|_| r.gen_range(-2.0..2.0)).collect();
        let prev = LstmState {
            h: (0..3).map(|_| r.gen_range(-1.0..1.0)).collect(),
            c: (0..3).map(|_| r.gen_range(-3.0..3.0)).collect(),
        };
        let got = cell_forward(&p, &x, &prev).unwrap();
        let (h, c) = scalar_cell(&p, &x, &prev.h, &prev.c);
        for j in 0..3 {
            worst = worst.max((got.h[j] - h[j]).abs()).max((got.c[j] - c[j]).abs());
        }
    }
    worst
}

/// Hidden size 3, input size 2, |V| = 6, one sequence of length 4.
pub fn lstm_gradient_model() -> (LstmModel, TokenSeq) {
    let toks: Vec<String> = ["a", "b", "c", "a"].iter().map(|s| s.to_string()).collect();
    let s = TokenSeq::new("g", toks, SourceKind::RawSql);
    let vocab = build_vocabulary(std::slice::from_ref(&s), 1).unwrap();
    assert_eq!(vocab.len(), 6);
    let config = LstmConfig {
        input_dim: 2,
        hidden_dim: 3,
        ..Default::default()
    };
    let mut m = LstmModel::zeros(vocab, config);
    let mut r = keyed_rng(5, &[]);
    for sl in m.params.slices_mut() {
        sl.iter_mut().for_each(|v| *v = r.gen_range(-0.8..0.8));
    }
    (m, s)
}

/// Worst relative error of BPTT gradients against central differences, and
/// the number of parameters checked.
pub fn lstm_gradient_worst() -> (f64, usize) {
    let (model, s) = lstm_gradient_model();
    let (_, grads) = model.reconstruction_loss(&s).unwrap();
    let analytic: Vec<f64> = grads.slices().iter().flat_map(|x| x.iter().copied()).collect();
    let eps = 1e-5;
    let mut worst: f64 = 0.0;
    let mut k = 0;
    for si in 0..model.params.slices().len() {
        for j in 0..model.params.slices()[si].len() {
            let loss_at = |delta: f64| {
                let mut m = model.clone();
                m.params.slices_mut()[si][j] += delta;
                m.reconstruction_loss(&s).unwrap().0
            };
            let numeric = (loss_at(eps) - loss_at(-eps)) / (2.0 * eps);
            worst = worst.max(rel_err(analytic[k], numeric));
            k += 1;
        }
    }
    (worst, k)
}

fn seq(id: &str, toks: &[&str]) -> TokenSeq {
    TokenSeq::new(id, toks.iter().map(|t| t.to_string()).collect(), SourceKind::RawSql)
}

/// dim 4, |V| 7, window 3, random parameters.
pub fn doc2vec_random_model(objective: Objective, divisor_exact: bool) -> Doc2VecModel {
    let corpus = vec![seq("q0", &["a", "b", "c", "d"]), seq("q1", &["d", "c"])];
    let vocab = build_vocabulary(&corpus, 1).unwrap();
    assert_eq!(vocab.len(), 7);
    let config = Doc2VecConfig {
        dim: 4,
        window_k: 3,
        paper_exact_divisor: divisor_exact,
        ..Default::default()
    };
    let mut m = Doc2VecModel::zeros(vocab, vec!["q0".into(), "q1".into()], config, objective);
    let mut r = keyed_rng(99, &[]);
    let mut fill = |mat: &mut Matrix| {
        for v in mat.as_mut_slice() {
            *v = r.gen_range(-1.0..1.0);
        }
    };
    fill(&mut m.token_vectors);
    fill(&mut m.output_weights);
    fill(&mut m.query_vectors);
    m
}

enum Param {
    Token,
    Output,
    Query,
}

/// Worst relative error of one window's analytic gradient against central
/// differences over every token, output and query parameter.
pub fn doc2vec_gradient_worst(objective: Objective, exact: bool) -> f64 {
    let model = doc2vec_random_model(objective, exact);
    // Context repeats a token so accumulated gradients are exercised.
    let (q, ctx, target, negs) = (1usize, vec![3usize, 5, 3], 4usize, vec![6usize, 0, 5]);
    let g = model.window_gradients(q, &ctx, target, &negs);
    let eps = 1e-5;
    let mut worst: f64 = 0.0;
    for which in [Param::Token, Param::Output, Param::Query] {
        let len = match which {
            Param::Token => model.token_vectors.as_slice().len(),
            Param::Output => model.output_weights.as_slice().len(),
            Param::Query => model.dim(),
        };
        for i in 0..len {
            let bump = |delta: f64| {
                let mut m = model.clone();
                match which {
                    Param::Token => m.token_vectors.as_mut_slice()[i] += delta,
                    Param::Output => m.output_weights.as_mut_slice()[i] += delta,
                    Param::Query => m.query_vectors.row_mut(q)[i] += delta,
                }
                m.window_loss(q, &ctx, target, &negs)
            };
            let numeric = (bump(eps) - bump(-eps)) / (2.0 * eps);
            let analytic = match which {
                Param::Token => g.token_vectors.as_slice()[i],
                Param::Output => g.output_weights.as_slice()[i],
                Param::Query => g.query[i],
            };
            worst = worst.max(rel_err(analytic, numeric));
        }
    }
    worst
}

/// 10 to 59 uniform points in 2 to 5 dimensions.
pub fn random_instance(seed: u64) -> Vec<QueryVector> {
    let mut r = keyed_rng(seed, &[]);
    let n = r.gen_range(10..60);
    let d = r.gen_range(2..6);
    (0..n)
        .map(|i| QueryVector::new(format!("q{i}"), (0..d).map(|_| r.gen_range(-1.0..1.0)).collect()))
        .collect()
}

/// Gaussian blobs (sigma 0.1) around random centers in `[-10, 10]^dim`.
pub fn blob_workload(centers: usize, per: usize, dim: usize, seed: u64) -> (Workload, Vec<QueryVector>) {
    let mut r = keyed_rng(seed, &[]);
    let noise = Normal::new(0.0, 0.1).unwrap();
    let mut queries = Vec::new();
    let mut vs = Vec::new();
    for c in 0..centers {
        let center: Vec<f64> = (0..dim).map(|_| r.gen_range(-10.0..10.0)).collect();
        for i in 0..per {
            let id = format!("t{c:02}-{i:03}");
            queries.push(Query::new(id.clone(), format!("select {c}")).with_label(format!("t{c:02}")));
            vs.push(QueryVector::new(id, center.iter().map(|x| x + noise.sample(&mut r)).collect()));
        }
    }
    (Workload::new("blobs", queries).unwrap(), vs)
}
