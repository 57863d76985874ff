//! Indicator baselines for out-of-memory prediction.

use std::collections::BTreeSet;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::corpus::{Query, NO_ERROR, OOM};
use crate::error::{Error, Result};
use crate::preprocess::{lex, Token, TokenKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum HeuristicKind {
    HeavyJoins,
    WindowFuncs,
    Either,
    Both,
}

impl HeuristicKind {
    pub const ALL: [HeuristicKind; 4] = [Self::HeavyJoins, Self::WindowFuncs, Self::Either, Self::Both];

    pub fn name(self) -> &'static str {
        match self {
            Self::HeavyJoins => "HEAVY_JOINS",
            Self::WindowFuncs => "WINDOW_FUNCS",
            Self::Either => "EITHER",
            Self::Both => "BOTH",
        }
    }

    fn uses_joins(self) -> bool {
        !matches!(self, Self::WindowFuncs)
    }
}

impl FromStr for HeuristicKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::InvalidArgument(format!("unknown heuristic {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeuristicRule {
    pub kind: HeuristicKind,
    /// Lower-cased table names.
    pub big_tables: BTreeSet<String>,
    pub join_threshold: usize,
}

impl HeuristicRule {
    pub fn new(kind: HeuristicKind, big_tables: impl IntoIterator<Item = impl AsRef<str>>) -> Result<Self> {
        let big_tables: BTreeSet<String> = big_tables
            .into_iter()
            .map(|t| t.as_ref().trim().to_lowercase())
            .filter(|t| !t.is_empty())
            .collect();
        if kind.uses_joins() && big_tables.is_empty() {
            return Err(Error::InvalidArgument(format!(
                "{} needs a non-empty big-table list",
                kind.name()
            )));
        }
        Ok(Self {
            kind,
            big_tables,
            join_threshold: 3,
        })
    }

    pub fn with_join_threshold(mut self, n: usize) -> Self {
        self.join_threshold = n;
        self
    }
}

/// Parses a big-table list: one name per line, `#` comments allowed.
pub fn parse_big_tables(text: &str) -> Vec<String> {
    text.lines()
        .map(|l| l.split('#').next().unwrap_or("").trim())
        .filter(|l| !l.is_empty())
        .map(String::from)
        .collect()
}

fn is_kw(t: &Token, kw: &str) -> bool {
    t.kind == TokenKind::Keyword && t.text == kw
}

fn is_punct(t: &Token, p: &str) -> bool {
    t.kind == TokenKind::Punctuation && t.text == p
}

/// `OVER (` or `OVER name`.
pub fn has_window_function(tokens: &[Token]) -> bool {
    tokens.windows(2).any(|w| {
        is_kw(&w[0], "OVER")
            && (is_punct(&w[1], "(") || matches!(w[1].kind, TokenKind::Identifier | TokenKind::QuotedIdentifier))
    })
}

fn table_name(tokens: &[Token], mut i: usize) -> Option<(String, usize)> {
    let ident = |t: &Token| matches!(t.kind, TokenKind::Identifier | TokenKind::QuotedIdentifier);
    if !tokens.get(i).is_some_and(ident) {
        return None;
    }
    let mut name = tokens[i].text.clone();
    // Qualified names: keep the last part.
    while tokens.get(i + 1).is_some_and(|t| is_punct(t, ".")) && tokens.get(i + 2).is_some_and(ident) {
        i += 2;
        name = tokens[i].text.clone();
    }
    let name = name.trim_matches(|c| matches!(c, '"' | '`' | '[' | ']')).to_lowercase();
    Some((name, i + 1))
}

/// Table names in `FROM` (including comma lists) and `JOIN` position,
/// at every nesting level.
pub fn referenced_tables(tokens: &[Token]) -> BTreeSet<String> {
    let mut out = BTreeSet::new();
    let mut i = 0;
    while i < tokens.len() {
        if is_kw(&tokens[i], "JOIN") {
            if let Some((name, _)) = table_name(tokens, i + 1) {
                out.insert(name);
            }
        } else if is_kw(&tokens[i], "FROM") {
            let mut j = i + 1;
            while let Some((name, next)) = table_name(tokens, j) {
                out.insert(name);
                j = next;
                // Optional alias.
                if tokens.get(j).is_some_and(|t| is_kw(t, "AS")) {
                    j += 1;
                }
                if tokens.get(j).is_some_and(|t| t.kind == TokenKind::Identifier) {
                    j += 1;
                }
                if tokens.get(j).is_some_and(|t| is_punct(t, ",")) {
                    j += 1;
                } else {
                    break;
                }
            }
        }
        i += 1;
    }
    out
}

/// True when the rule's indicator is present in the query text.
pub fn heuristic_predict(query: &Query, rule: &HeuristicRule) -> bool {
    let tokens = lex(&query.text).tokens;
    let window = || has_window_function(&tokens);
    let joins = || {
        referenced_tables(&tokens)
            .iter()
            .filter(|t| rule.big_tables.contains(*t))
            .count()
            >= rule.join_threshold
    };
    match rule.kind {
        HeuristicKind::WindowFuncs => window(),
        HeuristicKind::HeavyJoins => joins(),
        HeuristicKind::Either => window() || joins(),
        HeuristicKind::Both => window() && joins(),
    }
}

/// [`OOM`] where the indicator fires, [`NO_ERROR`] elsewhere.
pub fn heuristic_labels(queries: &[Query], rule: &HeuristicRule) -> Vec<String> {
    queries
        .iter()
        .map(|q| if heuristic_predict(q, rule) { OOM } else { NO_ERROR }.to_string())
        .collect()
}
