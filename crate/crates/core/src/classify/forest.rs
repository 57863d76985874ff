//! Extremely randomized trees.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;
use crate::QueryVector;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ForestConfig {
    pub n_trees: usize,
    /// `None` grows until leaves are pure or too small to split.
    pub max_depth: Option<usize>,
    pub min_leaf: usize,
    pub seed: u64,
}

impl Default for ForestConfig {
    fn default() -> Self {
        Self {
            n_trees: 100,
            max_depth: None,
            min_leaf: 1,
            seed: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Node {
    /// Samples with `x[feature] <= threshold` go left.
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        counts: Vec<u32>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn leaf_for(&self, x: &[f64]) -> &[u32] {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => i = if x[*feature] <= *threshold { *left } else { *right },
                Node::Leaf { counts } => return counts,
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn go(t: &Tree, i: usize) -> usize {
            match &t.nodes[i] {
                Node::Split { left, right, .. } => 1 + go(t, *left).max(go(t, *right)),
                Node::Leaf { .. } => 0,
            }
        }
        go(self, 0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestModel {
    pub trees: Vec<Tree>,
    /// Sorted class labels; leaf counts and scores are indexed by these.
    pub classes: Vec<String>,
    pub n_features: usize,
    pub config: ForestConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub label: String,
    /// Mean leaf class distribution, aligned with `ForestModel::classes`.
    pub scores: Vec<f64>,
}

impl Prediction {
    pub fn top_score(&self) -> f64 {
        self.scores.iter().cloned().fold(0.0, f64::max)
    }
}

fn gini(counts: &[u32], n: u32) -> f64 {
    if n == 0 {
        return 0.0;
    }
    let n = n as f64;
    1.0 - counts.iter().map(|&c| (c as f64 / n).powi(2)).sum::<f64>()
}

struct Builder<'a> {
    x: &'a [&'a [f64]],
    y: &'a [usize],
    n_classes: usize,
    max_features: usize,
    config: &'a ForestConfig,
    nodes: Vec<Node>,
}

impl Builder<'_> {
    fn counts(&self, idx: &[usize]) -> Vec<u32> {
        let mut c = vec![0u32; self.n_classes];
        for &i in idx {
            c[self.y[i]] += 1;
        }
        c
    }

    fn build(&mut self, idx: &mut [usize], depth: usize, r: &mut ChaCha8Rng) -> usize {
        let counts = self.counts(idx);
        let pure = counts.iter().filter(|&&c| c > 0).count() <= 1;
        let too_deep = self.config.max_depth.is_some_and(|d| depth >= d);
        if pure || too_deep || idx.len() < 2 * self.config.min_leaf {
            return self.leaf(counts);
        }
        let Some((feature, threshold)) = self.choose_split(idx, &counts, r) else {
            return self.leaf(counts);
        };
        let mut split = 0;
        for k in 0..idx.len() {
            if self.x[idx[k]][feature] <= threshold {
                idx.swap(k, split);
                split += 1;
            }
        }
        let me = self.nodes.len();
        self.nodes.push(Node::Leaf { counts: Vec::new() });
        let (l, rr) = idx.split_at_mut(split);
        let left = self.build(l, depth + 1, r);
        let right = self.build(rr, depth + 1, r);
        self.nodes[me] = Node::Split {
            feature,
            threshold,
            left,
            right,
        };
        me
    }

    fn leaf(&mut self, counts: Vec<u32>) -> usize {
        self.nodes.push(Node::Leaf { counts });
        self.nodes.len() - 1
    }

    /// Draws candidate features in random order until `max_features`
    /// non-constant ones have been tried; each gets one uniform threshold
    /// in its node range. Returns the candidate with the lowest weighted
    /// child Gini that respects `min_leaf`.
    fn choose_split(&self, idx: &[usize], counts: &[u32], r: &mut ChaCha8Rng) -> Option<(usize, f64)> {
        let d = self.x[0].len();
        let mut features: Vec<usize> = (0..d).collect();
        features.shuffle(r);
        let n = idx.len() as u32;
        let mut best: Option<(f64, usize, f64)> = None;
        let mut tried = 0;
        for f in features {
            if tried == self.max_features {
                break;
            }
            let (lo, hi) = idx.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &i| {
                let v = self.x[i][f];
                (lo.min(v), hi.max(v))
            });
            if lo >= hi {
                continue;
            }
            tried += 1;
            let mut t = r.gen_range(lo..hi);
            if t >= hi {
                t = lo;
            }
            let mut left = vec![0u32; self.n_classes];
            let mut nl = 0u32;
            for &i in idx {
                if self.x[i][f] <= t {
                    left[self.y[i]] += 1;
                    nl += 1;
                }
            }
            let nr = n - nl;
            if (nl as usize) < self.config.min_leaf || (nr as usize) < self.config.min_leaf {
                continue;
            }
            let right: Vec<u32> = counts.iter().zip(&left).map(|(a, b)| a - b).collect();
            let score = (nl as f64 * gini(&left, nl) + nr as f64 * gini(&right, nr)) / n as f64;
            if best.is_none_or(|b| score < b.0) {
                best = Some((score, f, t));
            }
        }
        best.map(|(_, f, t)| (f, t))
    }
}

/// Fits `config.n_trees` extremely randomized trees on the full sample (no
/// bootstrap). At every node `floor(sqrt(d))` candidate features each get
/// one uniform random threshold in the node's observed range, and the
/// split with the best Gini impurity wins. Tree `t` draws from a stream
/// keyed by `(seed, t)`, so the forest does not depend on thread count.
pub fn fit_forest(features: &[QueryVector], labels: &[String], config: &ForestConfig) -> Result<ForestModel> {
    if features.len() != labels.len() {
        return Err(Error::DimensionMismatch {
            expected: features.len(),
            actual: labels.len(),
        });
    }
    if features.is_empty() {
        return Err(Error::Empty("no training samples".into()));
    }
    if config.n_trees == 0 || config.min_leaf == 0 {
        return Err(Error::InvalidArgument("n_trees and min_leaf must be at least 1".into()));
    }
    let d = features[0].dim();
    if d == 0 {
        return Err(Error::InvalidArgument("feature vectors are empty".into()));
    }
    if let Some(bad) = features.iter().find(|f| f.dim() != d) {
        return Err(Error::DimensionMismatch {
            expected: d,
            actual: bad.dim(),
        });
    }
    let mut classes: Vec<String> = labels.to_vec();
    classes.sort();
    classes.dedup();
    if classes.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "need at least 2 classes to fit, found {}",
            classes.len()
        )));
    }
    let y: Vec<usize> = labels
        .iter()
        .map(|l| classes.binary_search(l).expect("label in class list"))
        .collect();
    let x: Vec<&[f64]> = features.iter().map(|f| f.values.as_slice()).collect();
    let max_features = ((d as f64).sqrt().floor() as usize).max(1);
    let trees = (0..config.n_trees)
        .into_par_iter()
        .map(|t| {
            let mut r = rng::keyed_rng(config.seed, &[0x7EE, t as u64]);
            let mut b = Builder {
                x: &x,
                y: &y,
                n_classes: classes.len(),
                max_features,
                config,
                nodes: Vec::new(),
            };
            let mut idx: Vec<usize> = (0..x.len()).collect();
            b.build(&mut idx, 0, &mut r);
            Tree { nodes: b.nodes }
        })
        .collect();
    Ok(ForestModel {
        trees,
        classes,
        n_features: d,
        config: config.clone(),
    })
}

impl ForestModel {
    /// Mean of the trees' leaf distributions; the label is the arg max,
    /// ties going to the lexicographically smallest class.
    pub fn predict(&self, feature: &QueryVector) -> Result<Prediction> {
        if feature.dim() != self.n_features {
            return Err(Error::DimensionMismatch {
                expected: self.n_features,
                actual: feature.dim(),
            });
        }
        let mut scores = vec![0.0; self.classes.len()];
        for t in &self.trees {
            let counts = t.leaf_for(&feature.values);
            let total: u32 = counts.iter().sum();
            for (s, &c) in scores.iter_mut().zip(counts) {
                *s += c as f64 / total as f64;
            }
        }
        let n = self.trees.len() as f64;
        scores.iter_mut().for_each(|s| *s /= n);
        let mut best = 0;
        for (i, &s) in scores.iter().enumerate() {
            if s > scores[best] {
                best = i;
            }
        }
        Ok(Prediction {
            label: self.classes[best].clone(),
            scores,
        })
    }

    pub fn predict_all(&self, features: &[QueryVector]) -> Result<Vec<Prediction>> {
        features.par_iter().map(|f| self.predict(f)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn qv(v: &[f64]) -> QueryVector {
        QueryVector::new("x", v.to_vec())
    }

    #[test]
    fn single_class_is_rejected() {
        let e = fit_forest(&[qv(&[1.0]), qv(&[2.0])], &["a".into(), "a".into()], &ForestConfig::default());
        assert!(matches!(e, Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn inconsistent_lengths_are_rejected() {
        let e = fit_forest(&[qv(&[1.0]), qv(&[2.0, 3.0])], &["a".into(), "b".into()], &ForestConfig::default());
        assert!(matches!(e, Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn one_tree_routes_to_pure_leaf() {
        let xs = [qv(&[0.0]), qv(&[1.0])];
        let cfg = ForestConfig {
            n_trees: 1,
            ..Default::default()
        };
        let m = fit_forest(&xs, &["a".into(), "b".into()], &cfg).unwrap();
        let p = m.predict(&qv(&[0.0])).unwrap();
        assert_eq!(p.label, "a");
        assert_eq!(p.scores, vec![1.0, 0.0]);
        assert_eq!(m.predict(&qv(&[1.0])).unwrap().label, "b");
    }

    #[test]
    fn ties_go_to_smallest_label() {
        // Identical features cannot be split, so the root leaf is 50/50.
        let xs = [qv(&[1.0]), qv(&[1.0])];
        let m = fit_forest(&xs, &["zeta".into(), "alpha".into()], &ForestConfig::default()).unwrap();
        let p = m.predict(&qv(&[1.0])).unwrap();
        assert_eq!(p.scores, vec![0.5, 0.5]);
        assert_eq!(p.label, "alpha");
    }

    #[test]
    fn thresholds_lie_in_node_range() {
        let xs: Vec<_> = (0..20).map(|i| qv(&[i as f64, (i * 7 % 5) as f64])).collect();
        let ys: Vec<String> = (0..20).map(|i| if i % 3 == 0 { "a" } else { "b" }.to_string()).collect();
        let m = fit_forest(&xs, &ys, &ForestConfig::default()).unwrap();
        for t in &m.trees {
            for n in &t.nodes {
                if let Node::Split { threshold, feature, .. } = n {
                    let hi = if *feature == 0 { 19.0 } else { 4.0 };
                    assert!((0.0..hi).contains(threshold));
                }
                if let Node::Leaf { counts } = n {
                    assert!(counts.iter().sum::<u32>() > 0);
                }
            }
        }
    }
}
