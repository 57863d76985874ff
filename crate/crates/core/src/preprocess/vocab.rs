use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{TokenSeq, LITERAL, SEQUENCE_END, UNKNOWN};
use crate::error::{Error, Result};

pub const UNKNOWN_INDEX: usize = 0;
pub const LITERAL_INDEX: usize = 1;
pub const SEQUENCE_END_INDEX: usize = 2;
const SPECIALS: [&str; 3] = [UNKNOWN, LITERAL, SEQUENCE_END];

/// Dense token index. The three special tokens occupy indices 0..3; the
/// rest follow by descending frequency, ties broken lexicographically.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "VocabRepr", into = "VocabRepr")]
pub struct Vocabulary {
    tokens: Vec<String>,
    counts: Vec<u64>,
    min_count: u64,
    index: HashMap<String, usize>,
}

#[derive(Serialize, Deserialize)]
struct VocabRepr {
    tokens: Vec<String>,
    counts: Vec<u64>,
    min_count: u64,
}

impl From<VocabRepr> for Vocabulary {
    fn from(r: VocabRepr) -> Self {
        Vocabulary::from_parts(r.tokens, r.counts, r.min_count)
    }
}

impl From<Vocabulary> for VocabRepr {
    fn from(v: Vocabulary) -> Self {
        VocabRepr {
            tokens: v.tokens,
            counts: v.counts,
            min_count: v.min_count,
        }
    }
}

impl Vocabulary {
    pub(crate) fn from_parts(tokens: Vec<String>, counts: Vec<u64>, min_count: u64) -> Self {
        let index = tokens.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        Self {
            tokens,
            counts,
            min_count,
            index,
        }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Index of `token`, or [`UNKNOWN_INDEX`] when out of vocabulary.
    pub fn index_of(&self, token: &str) -> usize {
        self.index.get(token).copied().unwrap_or(UNKNOWN_INDEX)
    }

    pub fn contains(&self, token: &str) -> bool {
        self.index.contains_key(token)
    }

    pub fn token(&self, index: usize) -> &str {
        &self.tokens[index]
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn count(&self, token: &str) -> u64 {
        self.index.get(token).map_or(0, |&i| self.counts[i])
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn min_count(&self) -> u64 {
        self.min_count
    }

    pub fn encode<S: AsRef<str>>(&self, tokens: &[S]) -> Vec<usize> {
        tokens.iter().map(|t| self.index_of(t.as_ref())).collect()
    }

    /// Number of non-special tokens.
    pub fn regular_len(&self) -> usize {
        self.len() - SPECIALS.len()
    }

    /// Stable 64-bit fingerprint of tokens and counts.
    pub fn fingerprint(&self) -> u64 {
        let mut h = Sha256::new();
        for (t, c) in self.tokens.iter().zip(&self.counts) {
            h.update((t.len() as u64).to_le_bytes());
            h.update(t.as_bytes());
            h.update(c.to_le_bytes());
        }
        let digest = h.finalize();
        u64::from_le_bytes(digest[..8].try_into().expect("sha256 has 32 bytes"))
    }
}

/// Counts tokens across the corpus (sharded, merged deterministically) and
/// builds the index. Tokens seen fewer than `min_count` times are folded
/// into `UNKNOWN`.
pub fn build_vocabulary(corpus: &[TokenSeq], min_count: u64) -> Result<Vocabulary> {
    if corpus.is_empty() {
        return Err(Error::Empty("cannot build a vocabulary from an empty corpus".into()));
    }
    let min_count = min_count.max(1);
    let counts: HashMap<&str, u64> = corpus
        .par_iter()
        .fold(HashMap::new, |mut acc: HashMap<&str, u64>, seq| {
            for t in &seq.tokens {
                *acc.entry(t.as_str()).or_default() += 1;
            }
            acc
        })
        .reduce(HashMap::new, |mut a, b| {
            for (k, v) in b {
                *a.entry(k).or_default() += v;
            }
            a
        });

    let mut special_counts = [0u64; 3];
    let mut regular: Vec<(&str, u64)> = Vec::new();
    for (&tok, &c) in &counts {
        if let Some(pos) = SPECIALS.iter().position(|s| *s == tok) {
            special_counts[pos] += c;
        } else if c >= min_count {
            regular.push((tok, c));
        } else {
            special_counts[UNKNOWN_INDEX] += c;
        }
    }
    regular.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));

    let mut tokens: Vec<String> = SPECIALS.iter().map(|s| s.to_string()).collect();
    let mut cnts = special_counts.to_vec();
    for (t, c) in regular {
        tokens.push(t.to_string());
        cnts.push(c);
    }
    Ok(Vocabulary::from_parts(tokens, cnts, min_count))
}
