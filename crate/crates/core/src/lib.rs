//! Dense vector representations of SQL queries and the workload analytics
//! built on top of them.
//!
//! The pipeline is: generate or load a [`corpus::Workload`], normalize each
//! query into a [`preprocess::TokenSeq`], learn query vectors with either the
//! paragraph-vector trainer ([`doc2vec`]) or the LSTM autoencoder ([`lstm`]),
//! then summarize ([`summarize`]), classify ([`classify`]) or project
//! ([`project`]) the vectors. Trained models persist through [`persist`].

pub mod classify;
pub mod corpus;
pub mod doc2vec;
pub mod error;
pub mod linalg;
pub mod lstm;
pub mod persist;
pub mod preprocess;
pub mod project;
pub mod rng;
pub mod summarize;

pub use error::{Error, Result};

/// A learned query vector.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct QueryVector {
    pub query_id: String,
    pub values: Vec<f64>,
}

impl QueryVector {
    pub fn new(query_id: impl Into<String>, values: Vec<f64>) -> Self {
        Self {
            query_id: query_id.into(),
            values,
        }
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }
}

/// Writes `bytes` to a temp file next to `path`, then renames it into place.
pub fn write_atomic(path: impl AsRef<std::path::Path>, bytes: &[u8]) -> Result<()> {
    use std::io::Write;
    let path = path.as_ref();
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => std::path::Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(path, e))?;
    tmp.write_all(bytes).map_err(|e| Error::io(path, e))?;
    tmp.as_file().sync_all().map_err(|e| Error::io(path, e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}
