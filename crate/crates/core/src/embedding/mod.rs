//! Requirement vectors: built-in TFIDF, externally produced sentence
//! encoder vectors, and fusions of the two.

mod external;
mod fuse;
mod tfidf;

use indexmap::IndexMap;
use std::fmt;
use thiserror::Error;

use crate::corpus::RequirementSet;

pub use external::{load_external_embeddings, write_embeddings};
pub use fuse::{fuse, IdentityReducer, PcaReducer, Reducer, DEFAULT_TARGET_DIM};
pub use tfidf::{embed_table_tfidf, embed_tfidf, fit_tfidf, TfidfModel};

#[derive(Debug, Error)]
pub enum EmbeddingError {
    #[error("corpus has no tokens")]
    EmptyCorpus,
    #[error("text has no in-vocabulary tokens: {0:?}")]
    ZeroVector(String),
    #[error("requirement `{0}` embeds to the zero vector")]
    ZeroRow(String),
    #[error("vector has no entries")]
    EmptyVector,
    #[error("vector contains a non-finite value at index {0}")]
    NonFinite(usize),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: vector contains NaN or infinite values")]
    NonFiniteLine { line: usize },
    #[error("line {line}: dimension {found} differs from {expected}")]
    InconsistentDim { line: usize, expected: usize, found: usize },
    #[error("line {line}: model `{found}` differs from `{expected}`")]
    ModelMismatch { line: usize, expected: String, found: String },
    #[error("line {line}: duplicate id `{id}`")]
    DuplicateId { line: usize, id: String },
    #[error("line {line}: zero vector for `{id}`")]
    ZeroLine { line: usize, id: String },
    #[error("embedding file is empty")]
    EmptyFile,
    #[error("embedding ids do not match the requirement set: missing {missing:?}, unexpected {unexpected:?}")]
    IdMismatch { missing: Vec<String>, unexpected: Vec<String> },
    #[error("invalid target dimension {target} (must be in 1..={max})")]
    TargetDim { target: usize, max: usize },
    #[error("reducer `{reducer}` failed: {message}")]
    Reducer { reducer: String, message: String },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token {
    /// Lowercased surface form.
    pub surface: String,
    /// Surface form with the original casing, for orthographic features.
    pub raw: String,
    pub position: usize,
}

impl Token {
    pub fn new(raw: &str, position: usize) -> Self {
        Token { surface: raw.to_lowercase(), raw: raw.to_string(), position }
    }
}

/// Lowercases and splits on every character that is neither alphanumeric
/// nor an internal hyphen. Numbers are kept; nothing is dropped as a
/// stopword.
pub fn tokenize(text: &str) -> Vec<Token> {
    text.split(|c: char| !(c.is_alphanumeric() || c == '-'))
        .map(|piece| piece.trim_matches('-'))
        .filter(|piece| !piece.is_empty())
        .enumerate()
        .map(|(i, piece)| Token::new(piece, i))
        .collect()
}

/// A finite, non-empty real vector.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingVector {
    values: Vec<f64>,
}

impl EmbeddingVector {
    pub fn new(values: Vec<f64>) -> Result<Self, EmbeddingError> {
        if values.is_empty() {
            return Err(EmbeddingError::EmptyVector);
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(EmbeddingError::NonFinite(i));
        }
        Ok(EmbeddingVector { values })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Unit-L2 copy, or `None` for the zero vector.
    pub fn normalized(&self) -> Option<Self> {
        let n = self.norm();
        (n > 0.0).then(|| EmbeddingVector { values: self.values.iter().map(|v| v / n).collect() })
    }

    pub fn scaled(&self, alpha: f64) -> Self {
        EmbeddingVector { values: self.values.iter().map(|v| v * alpha).collect() }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum EmbeddingSource {
    Tfidf,
    External(String),
    Fused,
}

impl fmt::Display for EmbeddingSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EmbeddingSource::Tfidf => write!(f, "tfidf"),
            EmbeddingSource::External(model) => write!(f, "external:{model}"),
            EmbeddingSource::Fused => write!(f, "fused"),
        }
    }
}

/// Vectors keyed by requirement id, all of one dimension, in insertion order.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    pub source: EmbeddingSource,
    vectors: IndexMap<String, EmbeddingVector>,
    dim: usize,
}

impl EmbeddingTable {
    pub fn new(source: EmbeddingSource, rows: Vec<(String, EmbeddingVector)>) -> Result<Self, EmbeddingError> {
        let dim = rows.first().map(|(_, v)| v.dim()).ok_or(EmbeddingError::EmptyFile)?;
        let mut vectors = IndexMap::with_capacity(rows.len());
        for (i, (id, v)) in rows.into_iter().enumerate() {
            if v.dim() != dim {
                return Err(EmbeddingError::InconsistentDim { line: i + 1, expected: dim, found: v.dim() });
            }
            if vectors.contains_key(&id) {
                return Err(EmbeddingError::DuplicateId { line: i + 1, id });
            }
            vectors.insert(id, v);
        }
        Ok(EmbeddingTable { source, vectors, dim })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&EmbeddingVector> {
        self.vectors.get(id)
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.vectors.keys().map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &EmbeddingVector)> {
        self.vectors.iter().map(|(k, v)| (k.as_str(), v))
    }

    /// Reorders the table to follow `set`, failing unless the id sets match
    /// exactly.
    pub fn align_to(&self, set: &RequirementSet) -> Result<Self, EmbeddingError> {
        let missing: Vec<String> = set.ids().filter(|id| !self.vectors.contains_key(*id)).map(String::from).collect();
        let unexpected: Vec<String> = self.ids().filter(|id| set.get(id).is_none()).map(String::from).collect();
        if !missing.is_empty() || !unexpected.is_empty() {
            return Err(EmbeddingError::IdMismatch { missing, unexpected });
        }
        let vectors = set.ids().map(|id| (id.to_string(), self.vectors[id].clone())).collect();
        Ok(EmbeddingTable { source: self.source.clone(), vectors, dim: self.dim })
    }
}
