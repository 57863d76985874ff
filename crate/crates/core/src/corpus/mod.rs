//! Query workloads: loading, saving, templated generation and splitting.

mod errors;
mod template;

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

pub use errors::{
    builtin_big_tables, builtin_error_templates, generate_error_workload, ErrorTask,
    ErrorTemplateSpec, Marker, NO_ERROR, OOM,
};
pub use template::{
    builtin_templates, generate_templated_workload, load_templates, parse_templates, SlotDomain,
    TemplateSpec,
};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Query {
    pub id: String,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub plan_doc: Option<String>,
}

impl Query {
    pub fn new(id: impl Into<String>, text: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            text: text.into(),
            label: None,
            plan_doc: None,
        }
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = Some(label.into());
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WorkloadFormat {
    /// One JSON object per line with `id`, `text`, optional `label` and `plan_doc`.
    JsonLines,
    /// One raw SQL statement per line; ids are the 1-based line numbers.
    SqlLines,
}

impl std::str::FromStr for WorkloadFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "jsonl" | "json-lines" => Ok(Self::JsonLines),
            "sql" | "sql-lines" => Ok(Self::SqlLines),
            other => Err(Error::InvalidArgument(format!("unknown workload format `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Workload {
    pub name: String,
    pub queries: Vec<Query>,
}

impl Workload {
    /// Builds a workload, rejecting duplicate ids and empty texts.
    pub fn new(name: impl Into<String>, queries: Vec<Query>) -> Result<Self> {
        let mut seen = HashSet::with_capacity(queries.len());
        for (i, q) in queries.iter().enumerate() {
            if q.text.trim().is_empty() {
                return Err(Error::MalformedRecord {
                    line: i + 1,
                    message: "empty query text".into(),
                });
            }
            if !seen.insert(q.id.as_str()) {
                return Err(Error::DuplicateId {
                    line: i + 1,
                    id: q.id.clone(),
                });
            }
        }
        Ok(Self {
            name: name.into(),
            queries,
        })
    }

    pub fn len(&self) -> usize {
        self.queries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.queries.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&Query> {
        self.queries.iter().find(|q| q.id == id)
    }

    /// Parses line-delimited records. Blank lines are skipped but still
    /// counted for error line numbers.
    pub fn from_reader(name: &str, reader: impl Read, format: WorkloadFormat) -> Result<Self> {
        let mut queries = Vec::new();
        let mut seen = HashSet::new();
        for (i, line) in BufReader::new(reader).lines().enumerate() {
            let lineno = i + 1;
            let line = line.map_err(|e| Error::MalformedRecord {
                line: lineno,
                message: e.to_string(),
            })?;
            if line.trim().is_empty() {
                continue;
            }
            let query = match format {
                WorkloadFormat::JsonLines => {
                    serde_json::from_str::<Query>(&line).map_err(|e| Error::MalformedRecord {
                        line: lineno,
                        message: e.to_string(),
                    })?
                }
                WorkloadFormat::SqlLines => Query::new(lineno.to_string(), line.trim()),
            };
            if query.text.trim().is_empty() {
                return Err(Error::MalformedRecord {
                    line: lineno,
                    message: "empty query text".into(),
                });
            }
            if !seen.insert(query.id.clone()) {
                return Err(Error::DuplicateId {
                    line: lineno,
                    id: query.id,
                });
            }
            queries.push(query);
        }
        Ok(Self {
            name: name.to_string(),
            queries,
        })
    }

    pub fn write_jsonl(&self, mut out: impl Write) -> std::io::Result<()> {
        for q in &self.queries {
            serde_json::to_writer(&mut out, q)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn to_jsonl(&self) -> String {
        let mut buf = Vec::new();
        self.write_jsonl(&mut buf).expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("serde_json emits UTF-8")
    }

    /// Distinct labels in first-seen order.
    pub fn labels(&self) -> Vec<String> {
        let mut seen = HashSet::new();
        self.queries
            .iter()
            .filter_map(|q| q.label.clone())
            .filter(|l| seen.insert(l.clone()))
            .collect()
    }
}

pub fn load_workload(path: impl AsRef<Path>, format: WorkloadFormat) -> Result<Workload> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    Workload::from_reader(&name, file, format)
}

/// Seeded random partition into `(train, test)` with
/// `|test| = round(test_fraction * |w|)`. Both halves keep the input order.
pub fn split_train_test(w: &Workload, test_fraction: f64, seed: u64) -> Result<(Workload, Workload)> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "test fraction must lie in (0, 1), got {test_fraction}"
        )));
    }
    if w.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "need at least 2 queries to split, got {}",
            w.len()
        )));
    }
    let n_test = (test_fraction * w.len() as f64).round() as usize;
    let mut order: Vec<usize> = (0..w.len()).collect();
    order.shuffle(&mut rng::keyed_rng(seed, &[0x5b11]));
    let mut is_test = vec![false; w.len()];
    for &i in &order[..n_test] {
        is_test[i] = true;
    }
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for (q, t) in w.queries.iter().zip(is_test) {
        if t {
            test.push(q.clone());
        } else {
            train.push(q.clone());
        }
    }
    Ok((
        Workload {
            name: format!("{}-train", w.name),
            queries: train,
        },
        Workload {
            name: format!("{}-test", w.name),
            queries: test,
        },
    ))
}
