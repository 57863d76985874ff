//! Workload summarization: k-means over query vectors, an elbow rule for
//! the cluster count, and the query nearest each centroid as the cluster's
//! representative.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::Write;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::Workload;
use crate::error::{Error, Result};
use crate::linalg::{dot, norm, normalized, squared_distance};
use crate::rng;
use crate::QueryVector;

/// `1 - cos(u, v)`. A zero vector is at distance 1 from everything.
pub fn cosine_distance(u: &[f64], v: &[f64]) -> Result<f64> {
    if u.len() != v.len() {
        return Err(Error::DimensionMismatch {
            expected: u.len(),
            actual: v.len(),
        });
    }
    let (nu, nv) = (norm(u), norm(v));
    if nu == 0.0 || nv == 0.0 {
        return Ok(1.0);
    }
    Ok((1.0 - dot(u, v) / (nu * nv)).clamp(0.0, 2.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Clustering {
    /// Cluster index of every query id.
    pub assignments: BTreeMap<String, usize>,
    /// Centroids in the length-normalized space.
    pub centroids: Vec<Vec<f64>>,
    pub sse: f64,
    pub iterations: usize,
    pub converged: bool,
    /// SSE after each Lloyd iteration.
    pub sse_history: Vec<f64>,
}

impl Clustering {
    pub fn k(&self) -> usize {
        self.centroids.len()
    }

    /// Query ids of each cluster, in id order.
    pub fn members(&self) -> Vec<Vec<String>> {
        let mut out = vec![Vec::new(); self.k()];
        for (id, &c) in &self.assignments {
            out[c].push(id.clone());
        }
        out
    }
}

fn cmp_values(a: &[f64], b: &[f64]) -> Ordering {
    a.iter()
        .zip(b)
        .map(|(x, y)| x.total_cmp(y))
        .find(|o| o.is_ne())
        .unwrap_or_else(|| a.len().cmp(&b.len()))
}

struct Points {
    ids: Vec<String>,
    values: Vec<Vec<f64>>,
}

/// Normalized copies sorted by content (then id), so that seeding and
/// cluster numbering do not depend on input order.
fn prepare(vectors: &[QueryVector]) -> Result<Points> {
    let dim = vectors.first().map(QueryVector::dim).unwrap_or(0);
    let mut pts: Vec<(Vec<f64>, &str)> = Vec::with_capacity(vectors.len());
    for v in vectors {
        if v.dim() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                actual: v.dim(),
            });
        }
        if !v.values.iter().all(|x| x.is_finite()) {
            return Err(Error::InvalidArgument(format!("non-finite vector for query {}", v.query_id)));
        }
        pts.push((normalized(&v.values), &v.query_id));
    }
    pts.sort_by(|a, b| cmp_values(&a.0, &b.0).then_with(|| a.1.cmp(b.1)));
    Ok(Points {
        ids: pts.iter().map(|p| p.1.to_string()).collect(),
        values: pts.into_iter().map(|p| p.0).collect(),
    })
}

fn distinct_count(values: &[Vec<f64>]) -> usize {
    // `values` is sorted, so duplicates are adjacent.
    1 + values.windows(2).filter(|w| cmp_values(&w[0], &w[1]).is_ne()).count()
}

fn nearest(centroids: &[Vec<f64>], p: &[f64]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (c, centroid) in centroids.iter().enumerate() {
        let d = squared_distance(p, centroid);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

/// Greedy k-means++: each new centroid is the best (lowest resulting
/// potential) of `2 + ln k` candidates drawn proportionally to D².
fn seed_plus_plus(values: &[Vec<f64>], k: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut r = rng::keyed_rng(seed, &[0xC1]);
    let trials = 2 + (k as f64).ln().floor() as usize;
    let mut centroids = vec![values[r.gen_range(0..values.len())].clone()];
    let mut d2: Vec<f64> = values.iter().map(|p| squared_distance(p, &centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        if total <= 0.0 {
            break;
        }
        let mut best: Option<(f64, usize, Vec<f64>)> = None;
        for _ in 0..trials {
            let u = r.gen::<f64>() * total;
            let mut acc = 0.0;
            let mut pick = None;
            for (i, &d) in d2.iter().enumerate() {
                acc += d;
                if d > 0.0 && acc > u {
                    pick = Some(i);
                    break;
                }
            }
            let pick = pick.unwrap_or_else(|| d2.iter().rposition(|&d| d > 0.0).expect("positive total"));
            let next: Vec<f64> = d2
                .iter()
                .zip(values)
                .map(|(d, p)| d.min(squared_distance(p, &values[pick])))
                .collect();
            let potential: f64 = next.iter().sum();
            if best.as_ref().is_none_or(|b| potential < b.0) {
                best = Some((potential, pick, next));
            }
        }
        let (_, pick, next) = best.expect("at least one trial");
        d2 = next;
        centroids.push(values[pick].clone());
    }
    centroids
}

fn lloyd(values: &[Vec<f64>], mut centroids: Vec<Vec<f64>>, max_iters: usize) -> (Vec<usize>, Vec<Vec<f64>>, Vec<f64>, usize, bool) {
    let k = centroids.len();
    let dim = values[0].len();
    let mut assign: Vec<usize> = values.iter().map(|p| nearest(&centroids, p).0).collect();
    let mut history = Vec::new();
    let mut converged = false;
    let mut iters = 0;
    while iters < max_iters {
        iters += 1;
        // Update step, with empty clusters taking over the point farthest
        // from its current centroid.
        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (p, &a) in values.iter().zip(&assign) {
            counts[a] += 1;
            for (s, x) in sums[a].iter_mut().zip(p) {
                *s += x;
            }
        }
        for c in 0..k {
            if counts[c] == 0 {
                let far = (0..values.len())
                    .filter(|&i| counts[assign[i]] > 1)
                    .max_by(|&i, &j| {
                        squared_distance(&values[i], &centroids[assign[i]])
                            .total_cmp(&squared_distance(&values[j], &centroids[assign[j]]))
                            .then(j.cmp(&i))
                    });
                if let Some(i) = far {
                    let old = assign[i];
                    counts[old] -= 1;
                    for (s, x) in sums[old].iter_mut().zip(&values[i]) {
                        *s -= x;
                    }
                    assign[i] = c;
                    counts[c] = 1;
                    sums[c] = values[i].clone();
                }
            }
        }
        for c in 0..k {
            if counts[c] > 0 {
                centroids[c] = sums[c].iter().map(|s| s / counts[c] as f64).collect();
            }
        }
        let sse: f64 = values.iter().zip(&assign).map(|(p, &a)| squared_distance(p, &centroids[a])).sum();
        history.push(sse);
        // Assignment step; ties keep the lowest centroid index.
        let next: Vec<usize> = values.iter().map(|p| nearest(&centroids, p).0).collect();
        if next == assign {
            converged = true;
            break;
        }
        assign = next;
    }
    (assign, centroids, history, iters, converged)
}

/// Lloyd's k-means on length-normalized vectors with k-means++ seeding.
///
/// Points are ordered by content before seeding, so the result depends on
/// the multiset of vectors and `seed`, not on input order. Stops when an
/// iteration changes no assignment or after `max_iters` iterations.
pub fn kmeans(vectors: &[QueryVector], k: usize, seed: u64, max_iters: usize) -> Result<Clustering> {
    if vectors.is_empty() {
        return Err(Error::Empty("no vectors to cluster".into()));
    }
    if k == 0 {
        return Err(Error::InvalidArgument("k must be at least 1".into()));
    }
    let pts = prepare(vectors)?;
    let distinct = distinct_count(&pts.values);
    if k > distinct {
        return Err(Error::TooManyClusters { k, distinct });
    }
    Ok(kmeans_prepared(&pts, k, seed, max_iters.max(1)))
}

/// Lloyd iterations on the raw (unnormalized) vectors starting from the
/// given centroids, skipping seeding.
pub fn kmeans_from(vectors: &[QueryVector], initial: Vec<Vec<f64>>, max_iters: usize) -> Result<Clustering> {
    if vectors.is_empty() || initial.is_empty() {
        return Err(Error::Empty("kmeans_from needs vectors and centroids".into()));
    }
    let dim = vectors[0].dim();
    if let Some(bad) = vectors.iter().map(QueryVector::dim).chain(initial.iter().map(Vec::len)).find(|&d| d != dim) {
        return Err(Error::DimensionMismatch { expected: dim, actual: bad });
    }
    let values: Vec<Vec<f64>> = vectors.iter().map(|v| v.values.clone()).collect();
    let (assign, centroids, sse_history, iterations, converged) = lloyd(&values, initial, max_iters.max(1));
    let sse = values.iter().zip(&assign).map(|(p, &a)| squared_distance(p, &centroids[a])).sum();
    Ok(Clustering {
        assignments: vectors.iter().map(|v| v.query_id.clone()).zip(assign).collect(),
        centroids,
        sse,
        iterations,
        converged,
        sse_history,
    })
}

fn kmeans_prepared(pts: &Points, k: usize, seed: u64, max_iters: usize) -> Clustering {
    let centroids = seed_plus_plus(&pts.values, k, seed);
    let (assign, centroids, sse_history, iterations, converged) = lloyd(&pts.values, centroids, max_iters);
    let sse = pts
        .values
        .iter()
        .zip(&assign)
        .map(|(p, &a)| squared_distance(p, &centroids[a]))
        .sum();
    Clustering {
        assignments: pts.ids.iter().cloned().zip(assign).collect(),
        centroids,
        sse,
        iterations,
        converged,
        sse_history,
    }
}

fn best_of(pts: &Points, k: usize, seed: u64, restarts: usize, max_iters: usize) -> Clustering {
    (0..restarts.max(1))
        .map(|r| kmeans_prepared(pts, k, rng::derive_seed(seed, &[k as u64, r as u64]), max_iters))
        .reduce(|best, c| if c.sse < best.sse { c } else { best })
        .expect("at least one restart")
}

/// Smallest `K` whose relative SSE improvement to `K + 1` is below `tau`;
/// `sse[i]` is `SSE(i + 1)`. A zero SSE stops at that `K`. Falls back to the
/// last `K` evaluated.
pub fn elbow_from_sse(sse: &[f64], tau: f64) -> usize {
    for k in 1..=sse.len() {
        let cur = sse[k - 1];
        if cur <= 0.0 {
            return k;
        }
        if k < sse.len() && (cur - sse[k]) / cur < tau {
            return k;
        }
    }
    sse.len().max(1)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ElbowParams {
    pub k_max: usize,
    pub tau: f64,
    pub restarts: usize,
    pub max_iters: usize,
}

impl Default for ElbowParams {
    fn default() -> Self {
        Self {
            k_max: 40,
            tau: 0.03,
            restarts: 3,
            max_iters: 100,
        }
    }
}

/// SSE of the best of `restarts` runs for every `K` in `1..=k_max + 1`,
/// capped at the number of distinct vectors.
pub fn sse_curve(vectors: &[QueryVector], params: &ElbowParams, seed: u64) -> Result<Vec<f64>> {
    if vectors.is_empty() {
        return Err(Error::Empty("no vectors to cluster".into()));
    }
    let pts = prepare(vectors)?;
    let top = (params.k_max + 1).min(distinct_count(&pts.values));
    Ok((1..=top)
        .into_par_iter()
        .map(|k| best_of(&pts, k, seed, params.restarts, params.max_iters.max(1)).sse)
        .collect())
}

/// Picks `K` by the elbow rule over [`sse_curve`].
pub fn elbow_select_k(vectors: &[QueryVector], params: &ElbowParams, seed: u64) -> Result<usize> {
    if params.k_max == 0 {
        return Err(Error::InvalidArgument("k_max must be at least 1".into()));
    }
    if !(params.tau > 0.0 && params.tau < 1.0) {
        return Err(Error::InvalidArgument("tau must lie in (0, 1)".into()));
    }
    let curve = sse_curve(vectors, params, seed)?;
    Ok(elbow_from_sse(&curve, params.tau).min(params.k_max))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SummarizeParams {
    /// Fixed cluster count; the elbow rule chooses when absent.
    pub k: Option<usize>,
    pub elbow: ElbowParams,
    pub seed: u64,
}

impl Default for SummarizeParams {
    fn default() -> Self {
        Self {
            k: None,
            elbow: ElbowParams::default(),
            seed: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Representative {
    pub query_id: String,
    pub cluster: usize,
    /// Cosine distance to the cluster centroid.
    pub distance: f64,
    pub cluster_size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    /// One per cluster, in cluster order.
    pub representatives: Vec<Representative>,
    pub k: usize,
    pub workload_size: usize,
    /// `1 - k / workload_size`
    pub compression: f64,
    pub clustering: Clustering,
}

impl Summary {
    pub fn representative_ids(&self) -> Vec<&str> {
        self.representatives.iter().map(|r| r.query_id.as_str()).collect()
    }

    /// One JSON record per representative, then a trailing metadata record.
    pub fn write_jsonl(&self, mut out: impl Write) -> std::io::Result<()> {
        for r in &self.representatives {
            let rec = serde_json::json!({
                "id": r.query_id,
                "cluster": r.cluster,
                "distance": r.distance,
                "cluster_size": r.cluster_size,
            });
            writeln!(out, "{rec}")?;
        }
        let meta = serde_json::json!({
            "k": self.k,
            "queries": self.workload_size,
            "sse": self.clustering.sse,
            "compression": self.compression,
        });
        writeln!(out, "{meta}")
    }
}

/// Clusters the workload's vectors and returns the query nearest (cosine)
/// to each centroid; ties go to the lowest query id.
pub fn summarize(workload: &Workload, vectors: &[QueryVector], params: &SummarizeParams) -> Result<Summary> {
    if workload.is_empty() {
        return Err(Error::Empty("workload has no queries".into()));
    }
    let by_id: HashMap<&str, &QueryVector> = vectors.iter().map(|v| (v.query_id.as_str(), v)).collect();
    let mut selected = Vec::with_capacity(workload.len());
    for q in &workload.queries {
        let v = by_id.get(q.id.as_str()).ok_or_else(|| Error::MissingVector(q.id.clone()))?;
        selected.push((*v).clone());
    }
    let pts = prepare(&selected)?;
    let distinct = distinct_count(&pts.values);
    let k = match params.k {
        Some(0) => return Err(Error::InvalidArgument("k must be at least 1".into())),
        Some(k) if k > distinct => return Err(Error::TooManyClusters { k, distinct }),
        Some(k) => k,
        None => elbow_select_k(&selected, &params.elbow, params.seed)?,
    };
    let clustering = best_of(&pts, k, params.seed, params.elbow.restarts, params.elbow.max_iters.max(1));
    let sizes = clustering.members().iter().map(Vec::len).collect::<Vec<_>>();
    let mut best: Vec<Option<(f64, &str)>> = vec![None; k];
    for v in &selected {
        let c = clustering.assignments[&v.query_id];
        let d = cosine_distance(&v.values, &clustering.centroids[c])?;
        let better = match best[c] {
            None => true,
            Some((bd, bid)) => d < bd || (d == bd && v.query_id.as_str() < bid),
        };
        if better {
            best[c] = Some((d, &v.query_id));
        }
    }
    let representatives = best
        .into_iter()
        .enumerate()
        .map(|(c, b)| {
            let (distance, id) = b.expect("every cluster is non-empty");
            Representative {
                query_id: id.to_string(),
                cluster: c,
                distance,
                cluster_size: sizes[c],
            }
        })
        .collect();
    let n = workload.len();
    Ok(Summary {
        representatives,
        k,
        workload_size: n,
        compression: 1.0 - k as f64 / n as f64,
        clustering,
    })
}

/// Scores how well a summary stands in for its workload.
pub trait Advisor {
    fn score(&self, workload: &Workload, summary: &Summary) -> f64;
}

/// Fraction of the workload's labels (templates) that have at least one
/// query in the summary. Unlabeled queries are ignored.
#[derive(Debug, Clone, Copy, Default)]
pub struct TemplateCoverage;

impl Advisor for TemplateCoverage {
    fn score(&self, workload: &Workload, summary: &Summary) -> f64 {
        let all: BTreeSet<&str> = workload.queries.iter().filter_map(|q| q.label.as_deref()).collect();
        if all.is_empty() {
            return 0.0;
        }
        let covered: BTreeSet<&str> = summary
            .representatives
            .iter()
            .filter_map(|r| workload.get(&r.query_id).and_then(|q| q.label.as_deref()))
            .collect();
        covered.len() as f64 / all.len() as f64
    }
}

/// Fraction of queries whose cluster's majority label equals their own.
/// Majority ties go to the smallest label.
pub fn purity(clustering: &Clustering, labels: &HashMap<String, String>) -> f64 {
    let mut counts: Vec<BTreeMap<&str, usize>> = vec![BTreeMap::new(); clustering.k()];
    let mut total = 0usize;
    for (id, &c) in &clustering.assignments {
        if let Some(l) = labels.get(id) {
            *counts[c].entry(l.as_str()).or_default() += 1;
            total += 1;
        }
    }
    if total == 0 {
        return 0.0;
    }
    let majority: usize = counts
        .iter()
        .map(|m| m.values().copied().max().unwrap_or(0))
        .sum();
    majority as f64 / total as f64
}
