//! Query normalization: SQL lexing, literal removal, plan linearization and
//! vocabulary construction.

mod lexer;
mod plan;
mod vocab;

use std::fs::File;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::{Query, Workload};
use crate::error::{Error, Result};

pub use lexer::{is_literal, lex, strip_literals, tokenize, LexWarning, Lexed, Token, TokenKind};
pub use plan::{bucket_estimate, linearize_plan, PlanDoc};
pub use vocab::{build_vocabulary, Vocabulary, LITERAL_INDEX, SEQUENCE_END_INDEX, UNKNOWN_INDEX};

pub const UNKNOWN: &str = "UNKNOWN";
pub const LITERAL: &str = "LITERAL";
pub const SEQUENCE_END: &str = "SEQUENCE_END";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceKind {
    RawSql,
    Plan,
    PlanTemplate,
}

impl std::str::FromStr for SourceKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "raw_sql" | "sql" => Ok(Self::RawSql),
            "plan" => Ok(Self::Plan),
            "plan_template" | "template" => Ok(Self::PlanTemplate),
            other => Err(Error::InvalidArgument(format!("unknown source kind `{other}`"))),
        }
    }
}

/// Normalized token sequence for one query.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenSeq {
    #[serde(rename = "id")]
    pub query_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    pub source_kind: SourceKind,
    pub tokens: Vec<String>,
}

impl TokenSeq {
    pub fn new(query_id: impl Into<String>, tokens: Vec<String>, source_kind: SourceKind) -> Self {
        Self {
            query_id: query_id.into(),
            label: None,
            source_kind,
            tokens,
        }
    }

    pub fn with_label(mut self, label: Option<String>) -> Self {
        self.label = label;
        self
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

/// Turns one query into its training sequence.
///
/// `RawSql` lexes the text and strips literals. `Plan` linearizes the plan
/// document keeping bucketed estimates, then strips literals. `PlanTemplate`
/// linearizes in templatized form.
pub fn normalize_query(query: &Query, kind: SourceKind) -> Result<TokenSeq> {
    let tokens = match kind {
        SourceKind::RawSql => strip_literals(&tokenize(&query.text)),
        SourceKind::Plan | SourceKind::PlanTemplate => {
            let doc = query.plan_doc.as_deref().ok_or_else(|| {
                Error::InvalidArgument(format!("query `{}` has no plan document", query.id))
            })?;
            let seq = linearize_plan(&PlanDoc::new(&query.id, doc), kind == SourceKind::PlanTemplate)?;
            strip_literals(&seq.tokens)
        }
    };
    Ok(TokenSeq {
        query_id: query.id.clone(),
        label: query.label.clone(),
        source_kind: kind,
        tokens,
    })
}

pub fn normalize_workload(workload: &Workload, kind: SourceKind) -> Result<Vec<TokenSeq>> {
    workload.queries.iter().map(|q| normalize_query(q, kind)).collect()
}

pub fn write_token_corpus(corpus: &[TokenSeq], mut out: impl Write) -> std::io::Result<()> {
    for seq in corpus {
        serde_json::to_writer(&mut out, seq)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_token_corpus(reader: impl Read) -> Result<Vec<TokenSeq>> {
    let mut out = Vec::new();
    for (i, line) in BufReader::new(reader).lines().enumerate() {
        let line = line.map_err(|e| Error::MalformedRecord {
            line: i + 1,
            message: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| Error::MalformedRecord {
            line: i + 1,
            message: e.to_string(),
        })?);
    }
    Ok(out)
}

pub fn load_token_corpus(path: impl AsRef<Path>) -> Result<Vec<TokenSeq>> {
    let path = path.as_ref();
    read_token_corpus(File::open(path).map_err(|e| Error::io(path, e))?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn raw_sql_normalization_strips_literals() {
        let q = Query::new("1", "select a from t where x = 5 and y = 'z'").with_label("tpl");
        let seq = normalize_query(&q, SourceKind::RawSql).unwrap();
        assert_eq!(
            seq.tokens,
            ["SELECT", "a", "FROM", "t", "WHERE", "x", "=", "LITERAL", "AND", "y", "=", "LITERAL"]
        );
        assert_eq!(seq.label.as_deref(), Some("tpl"));
    }

    #[test]
    fn plan_kinds_need_a_plan() {
        let q = Query::new("1", "select 1");
        assert!(normalize_query(&q, SourceKind::Plan).is_err());
    }

    #[test]
    fn plan_kind_keeps_buckets_but_not_literals() {
        let mut q = Query::new("1", "select 1");
        q.plan_doc = Some(r#"<Filter predicate="x &gt; 10" EstimateRows="250"/>"#.into());
        let plan = normalize_query(&q, SourceKind::Plan).unwrap();
        assert_eq!(plan.tokens, ["Filter", "predicate", "x", "GT", "LITERAL", "EstimateRows", "ROWS_1E2"]);
        let tpl = normalize_query(&q, SourceKind::PlanTemplate).unwrap();
        assert_eq!(tpl.tokens, ["Filter", "predicate", "x", "GT", "LITERAL"]);
    }

    #[test]
    fn token_corpus_round_trip() {
        let corpus = vec![
            TokenSeq::new("a", vec!["SELECT".into(), "x".into()], SourceKind::RawSql),
            TokenSeq::new("b", vec!["Scan".into()], SourceKind::PlanTemplate).with_label(Some("t".into())),
        ];
        let mut buf = Vec::new();
        write_token_corpus(&corpus, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.lines().next().unwrap().contains("\"tokens\":[\"SELECT\",\"x\"]"));
        assert_eq!(read_token_corpus(buf.as_slice()).unwrap(), corpus);
    }
}
