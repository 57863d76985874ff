//! Binary model files and embedding export.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! "Q2VM" | version u32 | kind u8 | dim u32 | vocab fingerprint u64
//! | meta length u64 | meta (JSON) | parameters (f32) | SHA-256 of all preceding bytes
//! ```
//!
//! The meta block holds the config and vocabulary; parameter matrices follow
//! in a fixed order per kind.

use std::fmt;
use std::io::{BufRead, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::doc2vec::{Doc2VecConfig, Doc2VecModel, Objective};
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::lstm::{LstmConfig, LstmModel, LstmParams};
use crate::preprocess::{TokenSeq, Vocabulary};
use crate::{write_atomic, QueryVector};

pub const MAGIC: &[u8; 4] = b"Q2VM";
pub const FORMAT_VERSION: u32 = 1;
const HEADER_LEN: usize = 4 + 4 + 1 + 4 + 8 + 8;
const DIGEST_LEN: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Doc2Vec,
    Lstm,
}

impl ModelKind {
    fn tag(self) -> u8 {
        match self {
            Self::Doc2Vec => 1,
            Self::Lstm => 2,
        }
    }

    fn from_tag(tag: u8) -> Result<Self> {
        match tag {
            1 => Ok(Self::Doc2Vec),
            2 => Ok(Self::Lstm),
            t => Err(Error::Format(format!("unknown model kind tag {t}"))),
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Doc2Vec => "doc2vec",
            Self::Lstm => "lstm",
        })
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "doc2vec" => Ok(Self::Doc2Vec),
            "lstm" => Ok(Self::Lstm),
            _ => Err(Error::InvalidArgument(format!("unknown model kind {s:?}"))),
        }
    }
}

/// Settings for doc2vec inference on unseen sequences.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct InferOptions {
    pub steps: usize,
    pub learning_rate: f64,
}

impl Default for InferOptions {
    fn default() -> Self {
        Self {
            steps: 100,
            learning_rate: 0.05,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Model {
    Doc2Vec(Doc2VecModel),
    Lstm(LstmModel),
}

impl Model {
    pub fn kind(&self) -> ModelKind {
        match self {
            Self::Doc2Vec(_) => ModelKind::Doc2Vec,
            Self::Lstm(_) => ModelKind::Lstm,
        }
    }

    pub fn vocab(&self) -> &Vocabulary {
        match self {
            Self::Doc2Vec(m) => &m.vocab,
            Self::Lstm(m) => &m.vocab,
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Self::Doc2Vec(m) => m.dim(),
            Self::Lstm(m) => m.hidden_dim(),
        }
    }

    /// Vector for a sequence. Doc2vec always infers, even for training ids.
    pub fn embed(&self, seq: &TokenSeq, opts: &InferOptions) -> Result<QueryVector> {
        match self {
            Self::Doc2Vec(m) => Ok(m.infer_vector(seq, opts.steps, opts.learning_rate)),
            Self::Lstm(m) => m.infer_vector(seq),
        }
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        match self {
            Self::Doc2Vec(m) => doc2vec_bytes(m),
            Self::Lstm(m) => lstm_bytes(m),
        }
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        decode(bytes, None)
    }
}

#[derive(Serialize, Deserialize)]
struct Doc2VecMeta {
    config: Doc2VecConfig,
    objective: Objective,
    vocab: Vocabulary,
    query_ids: Vec<String>,
}

#[derive(Serialize, Deserialize)]
struct LstmMeta {
    config: LstmConfig,
    vocab: Vocabulary,
}

fn encode(kind: ModelKind, dim: usize, vocab: &Vocabulary, meta: &[u8], params: &[&[f64]]) -> Vec<u8> {
    let n: usize = params.iter().map(|p| p.len()).sum();
    let mut out = Vec::with_capacity(HEADER_LEN + meta.len() + 4 * n + DIGEST_LEN);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.push(kind.tag());
    out.extend_from_slice(&(dim as u32).to_le_bytes());
    out.extend_from_slice(&vocab.fingerprint().to_le_bytes());
    out.extend_from_slice(&(meta.len() as u64).to_le_bytes());
    out.extend_from_slice(meta);
    for p in params {
        for &x in *p {
            out.extend_from_slice(&(x as f32).to_le_bytes());
        }
    }
    let digest = Sha256::digest(&out);
    out.extend_from_slice(&digest);
    out
}

fn doc2vec_bytes(m: &Doc2VecModel) -> Result<Vec<u8>> {
    let meta = serde_json::to_vec(&Doc2VecMeta {
        config: m.config.clone(),
        objective: m.objective,
        vocab: m.vocab.clone(),
        query_ids: m.query_ids.clone(),
    })?;
    let params = [
        m.token_vectors.as_slice(),
        m.output_weights.as_slice(),
        m.query_vectors.as_slice(),
    ];
    Ok(encode(ModelKind::Doc2Vec, m.dim(), &m.vocab, &meta, &params))
}

fn lstm_bytes(m: &LstmModel) -> Result<Vec<u8>> {
    let meta = serde_json::to_vec(&LstmMeta {
        config: m.config.clone(),
        vocab: m.vocab.clone(),
    })?;
    Ok(encode(ModelKind::Lstm, m.hidden_dim(), &m.vocab, &meta, &m.params.slices()))
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or(Error::Checksum)?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn fill(&mut self, dst: &mut [f64]) -> Result<()> {
        let src = self.take(4 * dst.len())?;
        for (d, c) in dst.iter_mut().zip(src.chunks_exact(4)) {
            *d = f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64;
        }
        Ok(())
    }
}

/// Reads the header fields without checking the body.
pub fn peek_kind(bytes: &[u8]) -> Result<ModelKind> {
    if bytes.len() < 4 || &bytes[..4] != MAGIC {
        return Err(Error::Format("not a query2vec model file".into()));
    }
    let mut r = Reader { bytes, pos: 4 };
    let version = r.u32()?;
    if version != FORMAT_VERSION {
        return Err(Error::VersionMismatch {
            found: version,
            expected: FORMAT_VERSION,
        });
    }
    ModelKind::from_tag(r.take(1)?[0])
}

fn decode(bytes: &[u8], expected: Option<ModelKind>) -> Result<Model> {
    let kind = peek_kind(bytes)?;
    if bytes.len() < HEADER_LEN + DIGEST_LEN {
        return Err(Error::Checksum);
    }
    let (body, digest) = bytes.split_at(bytes.len() - DIGEST_LEN);
    if Sha256::digest(body).as_slice() != digest {
        return Err(Error::Checksum);
    }
    if let Some(e) = expected {
        if e != kind {
            return Err(Error::KindMismatch {
                found: kind.to_string(),
                expected: e.to_string(),
            });
        }
    }
    let mut r = Reader { bytes: body, pos: 9 };
    let dim = r.u32()? as usize;
    let fingerprint = r.u64()?;
    let meta_len = r.u64()? as usize;
    let meta = r.take(meta_len)?;
    let model = match kind {
        ModelKind::Doc2Vec => {
            let m: Doc2VecMeta = serde_json::from_slice(meta)?;
            check_header(dim, m.config.dim, fingerprint, &m.vocab)?;
            let v = m.vocab.len();
            let mut tokens = Matrix::zeros(v, dim);
            let mut output = Matrix::zeros(v, dim);
            let mut queries = Matrix::zeros(m.query_ids.len(), dim);
            for mat in [&mut tokens, &mut output, &mut queries] {
                r.fill(mat.as_mut_slice())?;
            }
            Model::Doc2Vec(Doc2VecModel::from_parts(
                m.config,
                m.objective,
                m.vocab,
                tokens,
                output,
                m.query_ids,
                queries,
            ))
        }
        ModelKind::Lstm => {
            let m: LstmMeta = serde_json::from_slice(meta)?;
            check_header(dim, m.config.hidden_dim, fingerprint, &m.vocab)?;
            let mut params = LstmParams::zeros(m.vocab.len(), m.config.input_dim, m.config.hidden_dim);
            for s in params.slices_mut() {
                r.fill(s)?;
            }
            Model::Lstm(LstmModel {
                config: m.config,
                vocab: m.vocab,
                params,
            })
        }
    };
    if r.pos != body.len() {
        return Err(Error::Format(format!("{} trailing bytes", body.len() - r.pos)));
    }
    Ok(model)
}

fn check_header(dim: usize, config_dim: usize, fingerprint: u64, vocab: &Vocabulary) -> Result<()> {
    if dim != config_dim {
        return Err(Error::Format(format!("header dim {dim} disagrees with config dim {config_dim}")));
    }
    if fingerprint != vocab.fingerprint() {
        return Err(Error::Format("vocabulary fingerprint mismatch".into()));
    }
    Ok(())
}

pub fn save_model(model: &Model, path: impl AsRef<Path>) -> Result<()> {
    write_atomic(path, &model.to_bytes()?)
}

/// Loads a model file; with `expected` set, a file of another kind is an error.
pub fn load_model(path: impl AsRef<Path>, expected: Option<ModelKind>) -> Result<Model> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes, expected)
}

/// One JSON object per line: `{"id": ..., "vector": [...]}`.
pub fn write_embeddings(vectors: &[QueryVector], mut out: impl Write) -> std::io::Result<()> {
    for v in vectors {
        let rec = serde_json::json!({ "id": v.query_id, "vector": v.values });
        writeln!(out, "{rec}")?;
    }
    Ok(())
}

#[derive(Deserialize)]
struct EmbeddingRecord {
    id: String,
    vector: Vec<f64>,
}

/// Reads [`write_embeddings`] output. All vectors must share one dimension.
pub fn read_embeddings(reader: impl BufRead) -> Result<Vec<QueryVector>> {
    let mut out: Vec<QueryVector> = Vec::new();
    let mut seen = std::collections::HashSet::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io("<embeddings>", e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: EmbeddingRecord = serde_json::from_str(&line).map_err(|e| Error::MalformedRecord {
            line: i + 1,
            message: e.to_string(),
        })?;
        if let Some(first) = out.first() {
            if first.dim() != rec.vector.len() {
                return Err(Error::DimensionMismatch {
                    expected: first.dim(),
                    actual: rec.vector.len(),
                });
            }
        }
        if !seen.insert(rec.id.clone()) {
            return Err(Error::DuplicateId { line: i + 1, id: rec.id });
        }
        out.push(QueryVector::new(rec.id, rec.vector));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kind_round_trips() {
        for k in [ModelKind::Doc2Vec, ModelKind::Lstm] {
            assert_eq!(ModelKind::from_tag(k.tag()).unwrap(), k);
            assert_eq!(k.to_string().parse::<ModelKind>().unwrap(), k);
        }
        assert!(ModelKind::from_tag(9).is_err());
    }

    #[test]
    fn garbage_is_not_a_model() {
        assert!(matches!(peek_kind(b"hello world"), Err(Error::Format(_))));
        let mut b = MAGIC.to_vec();
        b.extend_from_slice(&7u32.to_le_bytes());
        assert!(matches!(peek_kind(&b), Err(Error::VersionMismatch { found: 7, .. })));
    }

    #[test]
    fn embeddings_round_trip() {
        let vs = vec![QueryVector::new("a", vec![0.1, -2.5]), QueryVector::new("b", vec![3.0, 1e-300])];
        let mut buf = Vec::new();
        write_embeddings(&vs, &mut buf).unwrap();
        assert_eq!(read_embeddings(&buf[..]).unwrap(), vs);
        assert!(read_embeddings(&b"{\"id\":\"a\",\"vector\":[1]}\n{\"id\":\"a\",\"vector\":[2]}\n"[..]).is_err());
        assert!(read_embeddings(&b"{\"id\":\"a\",\"vector\":[1]}\n{\"id\":\"b\",\"vector\":[2,3]}\n"[..]).is_err());
    }
}
