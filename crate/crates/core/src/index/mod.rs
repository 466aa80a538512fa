//! Exact flat vector index with cosine-similarity top-N search.
//!
//! Embeddings are unit-normalized when added, so a search is a single pass
//! of dot products. Results are ordered by score descending with ties broken
//! by ascending entry id, which makes every search reproducible.

mod persist;

use std::cmp::Ordering;
use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use persist::{FORMAT_VERSION, MAGIC};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum IndexError {
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("duplicate entry id `{0}`")]
    DuplicateId(String),
    #[error("zero vector")]
    ZeroVector,
    #[error("embedding contains a non-finite value")]
    NonFinite,
    #[error("embedding is empty")]
    EmptyEmbedding,
    #[error("index empty")]
    IndexEmpty,
    #[error("n must be positive")]
    ZeroN,
    #[error("index format error: {0}")]
    Format(String),
    #[error("unsupported index version {found} (expected {expected})")]
    Version { found: u32, expected: u32 },
    #[error("index file truncated: expected {expected} payload bytes, found {found}")]
    Truncated { expected: usize, found: usize },
    #[error("index checksum mismatch")]
    Checksum,
    #[error("{0}")]
    Io(String),
}

/// A finite, non-empty real vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct Embedding(Vec<f64>);

impl Embedding {
    pub fn new(values: Vec<f64>) -> Result<Self, IndexError> {
        if values.is_empty() {
            return Err(IndexError::EmptyEmbedding);
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(IndexError::NonFinite);
        }
        Ok(Embedding(values))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn norm(&self) -> f64 {
        norm(&self.0)
    }

    pub fn scaled(&self, alpha: f64) -> Result<Embedding, IndexError> {
        Embedding::new(self.0.iter().map(|v| v * alpha).collect())
    }

    fn normalized(&self) -> Result<Vec<f64>, IndexError> {
        let n = self.norm();
        if n == 0.0 {
            return Err(IndexError::ZeroVector);
        }
        Ok(self.0.iter().map(|v| v / n).collect())
    }
}

impl TryFrom<Vec<f64>> for Embedding {
    type Error = IndexError;
    fn try_from(v: Vec<f64>) -> Result<Self, Self::Error> {
        Embedding::new(v)
    }
}

impl From<Embedding> for Vec<f64> {
    fn from(e: Embedding) -> Vec<f64> {
        e.0
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn dot(u: &[f64], v: &[f64]) -> f64 {
    u.iter().zip(v).map(|(a, b)| a * b).sum()
}

/// Cosine similarity, clamped to [-1, 1].
pub fn cosine(u: &Embedding, v: &Embedding) -> Result<f64, IndexError> {
    if u.dim() != v.dim() {
        return Err(IndexError::DimensionMismatch {
            expected: u.dim(),
            actual: v.dim(),
        });
    }
    let (nu, nv) = (u.norm(), v.norm());
    if nu == 0.0 || nv == 0.0 {
        return Err(IndexError::ZeroVector);
    }
    Ok((dot(&u.0, &v.0) / (nu * nv)).clamp(-1.0, 1.0))
}

/// Unchecked cosine over slices; zero vectors yield 0.
pub fn cosine_raw(u: &[f64], v: &[f64]) -> f64 {
    let d = norm(u) * norm(v);
    if d == 0.0 {
        0.0
    } else {
        (dot(u, v) / d).clamp(-1.0, 1.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EntryKind {
    Chunk,
    Summary,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IndexEntry {
    pub entry_id: String,
    pub kind: EntryKind,
    pub story_id: String,
    pub episode_index: usize,
    pub embedding: Embedding,
}

/// Entry metadata as stored alongside the vectors.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntryMeta {
    pub entry_id: String,
    pub kind: EntryKind,
    pub story_id: String,
    pub episode_index: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchHit {
    pub entry_id: String,
    pub score: f64,
}

/// Mutable index under construction. Call [`IndexBuilder::freeze`] to get
/// the searchable, immutable [`FlatIndex`].
#[derive(Debug, Clone)]
pub struct IndexBuilder {
    dim: usize,
    meta: Vec<EntryMeta>,
    data: Vec<f64>,
    ids: HashMap<String, usize>,
}

impl IndexBuilder {
    pub fn new(dim: usize) -> Self {
        IndexBuilder {
            dim,
            meta: Vec::new(),
            data: Vec::new(),
            ids: HashMap::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.meta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.meta.is_empty()
    }

    /// Adds an entry; on error the builder is unchanged.
    pub fn add(&mut self, entry: IndexEntry) -> Result<(), IndexError> {
        if entry.embedding.dim() != self.dim {
            return Err(IndexError::DimensionMismatch {
                expected: self.dim,
                actual: entry.embedding.dim(),
            });
        }
        if self.ids.contains_key(&entry.entry_id) {
            return Err(IndexError::DuplicateId(entry.entry_id));
        }
        let unit = entry.embedding.normalized()?;
        self.ids.insert(entry.entry_id.clone(), self.meta.len());
        self.data.extend_from_slice(&unit);
        self.meta.push(EntryMeta {
            entry_id: entry.entry_id,
            kind: entry.kind,
            story_id: entry.story_id,
            episode_index: entry.episode_index,
        });
        Ok(())
    }

    pub fn freeze(self) -> FlatIndex {
        FlatIndex {
            dim: self.dim,
            meta: self.meta,
            data: self.data,
            ids: self.ids,
        }
    }
}

/// Immutable exact index; safe to search from many threads.
#[derive(Debug, Clone, PartialEq)]
pub struct FlatIndex {
    dim: usize,
    meta: Vec<EntryMeta>,
    data: Vec<f64>,
    ids: HashMap<String, usize>,
}

impl FlatIndex {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.meta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.meta.is_empty()
    }

    pub fn entries(&self) -> &[EntryMeta] {
        &self.meta
    }

    pub fn entry(&self, entry_id: &str) -> Option<&EntryMeta> {
        self.ids.get(entry_id).map(|&i| &self.meta[i])
    }

    /// Stored unit vector of an entry.
    pub fn vector(&self, entry_id: &str) -> Option<&[f64]> {
        self.ids.get(entry_id).map(|&i| self.row(i))
    }

    fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    /// Top `n` entries by cosine similarity among those accepted by `filter`.
    pub fn search_top_n(
        &self,
        query: &Embedding,
        n: usize,
        filter: Option<&dyn Fn(&EntryMeta) -> bool>,
    ) -> Result<Vec<SearchHit>, IndexError> {
        if self.is_empty() {
            return Err(IndexError::IndexEmpty);
        }
        if query.dim() != self.dim {
            return Err(IndexError::DimensionMismatch {
                expected: self.dim,
                actual: query.dim(),
            });
        }
        if n == 0 {
            return Err(IndexError::ZeroN);
        }
        let q = query.normalized()?;
        let mut scored: Vec<(f64, usize)> = (0..self.meta.len())
            .filter(|&i| filter.is_none_or(|f| f(&self.meta[i])))
            .map(|i| (dot(&q, self.row(i)).clamp(-1.0, 1.0), i))
            .collect();
        let order = |a: &(f64, usize), b: &(f64, usize)| -> Ordering {
            b.0.total_cmp(&a.0)
                .then_with(|| self.meta[a.1].entry_id.cmp(&self.meta[b.1].entry_id))
        };
        if scored.len() > n {
            scored.select_nth_unstable_by(n - 1, order);
            scored.truncate(n);
        }
        scored.sort_unstable_by(order);
        Ok(scored
            .into_iter()
            .map(|(score, i)| SearchHit {
                entry_id: self.meta[i].entry_id.clone(),
                score,
            })
            .collect())
    }
}
