//! Embedding vectors, caption chunking and exhaustive cosine search.

use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use thiserror::Error;

use crate::graph::NoteId;
use crate::hash::Fnv1a;

pub const STUB_DIM: usize = 64;
pub const MIN_CHUNK_CHARS: usize = 32;
pub const DEFAULT_CHUNK_CHARS: usize = 2000;

#[derive(Debug, Clone, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize), serde(transparent))]
pub struct Embedding(Vec<f64>);

impl Embedding {
    pub fn new(values: Vec<f64>) -> Self {
        Self(values)
    }

    pub fn zeros(dim: usize) -> Self {
        Self(vec![0.0; dim])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }

    pub fn norm(&self) -> f64 {
        libm::sqrt(self.0.iter().map(|v| v * v).sum())
    }
}

impl From<Vec<f64>> for Embedding {
    fn from(values: Vec<f64>) -> Self {
        Self(values)
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum IndexError {
    #[error("dimension mismatch: index has {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("vector contains non-finite values")]
    NonFinite,
    #[error("entry ({note}, {ordinal}) already indexed")]
    DuplicateEntry { note: String, ordinal: usize },
}

/// Lowercased alphanumeric runs. `person_1` yields `person` and `1`.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut tokens = Vec::new();
    let mut current = String::new();
    for c in text.chars() {
        if c.is_alphanumeric() {
            current.extend(c.to_lowercase());
        } else if !current.is_empty() {
            tokens.push(core::mem::take(&mut current));
        }
    }
    if !current.is_empty() {
        tokens.push(current);
    }
    tokens
}

/// Deterministic hashed bag-of-words embedding (dim 64, L2-normalized).
///
/// Each token lands in bucket `fnv(token) mod 64` with a sign taken from an
/// independently seeded hash. Text with no tokens maps to the zero vector.
pub fn stub_embed(text: &str) -> Embedding {
    let mut acc = vec![0.0f64; STUB_DIM];
    for token in tokenize(text) {
        let mut bucket_hash = Fnv1a::default();
        bucket_hash.write(token.as_bytes());
        let mut sign_hash = Fnv1a::with_seed(0x5349_474e);
        sign_hash.write(token.as_bytes());
        let bucket = (bucket_hash.finish() % STUB_DIM as u64) as usize;
        let sign = if sign_hash.finish() & 1 == 0 { 1.0 } else { -1.0 };
        acc[bucket] += sign;
    }
    let norm = libm::sqrt(acc.iter().map(|v| v * v).sum());
    if norm > 0.0 {
        for v in &mut acc {
            *v /= norm;
        }
    }
    Embedding(acc)
}

/// Cosine similarity clamped to `[-1, 1]`; 0 when either side is zero or the
/// dimensions differ.
pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    if a.len() != b.len() {
        return 0.0;
    }
    let (mut dot, mut na, mut nb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    (dot / (libm::sqrt(na) * libm::sqrt(nb))).clamp(-1.0, 1.0)
}

/// Greedy split into chunks of at most `max_chars` characters, breaking at
/// the last whitespace inside the limit when there is one. The whitespace
/// character at each break is dropped. `max_chars` below 32 is raised to 32.
pub fn chunk_text(text: &str, max_chars: usize) -> Vec<String> {
    let max_chars = max_chars.max(MIN_CHUNK_CHARS);
    let mut chunks = Vec::new();
    let mut rest = text;
    loop {
        // byte offset just past the first max_chars characters, if longer
        let limit = match rest.char_indices().nth(max_chars) {
            Some((byte, _)) => byte,
            None => break,
        };
        let window = &rest[..limit];
        let split = window
            .char_indices()
            .rev()
            .find(|&(i, c)| i > 0 && c.is_whitespace())
            .map(|(i, c)| (i, i + c.len_utf8()));
        // the character right at the limit may itself be the break
        let split = split.or_else(|| {
            let c = rest[limit..].chars().next()?;
            c.is_whitespace().then_some((limit, limit + c.len_utf8()))
        });
        match split {
            Some((end, resume)) => {
                chunks.push(rest[..end].to_string());
                rest = &rest[resume..];
            }
            None => {
                chunks.push(window.to_string());
                rest = &rest[limit..];
            }
        }
    }
    if !rest.is_empty() {
        chunks.push(rest.to_string());
    }
    chunks
}

#[derive(Debug, Clone, PartialEq)]
pub struct IndexEntry {
    pub note_id: NoteId,
    pub chunk_ordinal: usize,
    pub text: String,
    pub vector: Embedding,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct SearchHit {
    pub note_id: NoteId,
    pub score: f64,
    pub chunk_ordinal: usize,
}

/// Exhaustive-scan vector index. Every query is compared against every chunk.
#[derive(Debug, Clone, Default)]
pub struct VectorIndex {
    dim: Option<usize>,
    entries: Vec<IndexEntry>,
}

impl VectorIndex {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn dim(&self) -> Option<usize> {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[IndexEntry] {
        &self.entries
    }

    /// Validates a vector against the index dimension without inserting.
    pub fn check(&self, vector: &Embedding) -> Result<(), IndexError> {
        if !vector.is_finite() {
            return Err(IndexError::NonFinite);
        }
        match self.dim {
            Some(d) if d != vector.dim() => Err(IndexError::DimensionMismatch { expected: d, got: vector.dim() }),
            _ => Ok(()),
        }
    }

    pub fn insert(&mut self, entry: IndexEntry) -> Result<(), IndexError> {
        self.check(&entry.vector)?;
        if self
            .entries
            .iter()
            .any(|e| e.note_id == entry.note_id && e.chunk_ordinal == entry.chunk_ordinal)
        {
            return Err(IndexError::DuplicateEntry {
                note: entry.note_id.to_string(),
                ordinal: entry.chunk_ordinal,
            });
        }
        self.dim = Some(entry.vector.dim());
        self.entries.push(entry);
        Ok(())
    }

    /// Top `k` notes by cosine similarity. A note scores as its best chunk;
    /// ties order by ascending note id.
    pub fn search_top_k(&self, query: &Embedding, k: usize) -> Result<Vec<SearchHit>, IndexError> {
        let Some(dim) = self.dim else {
            return Ok(Vec::new());
        };
        if query.dim() != dim {
            return Err(IndexError::DimensionMismatch { expected: dim, got: query.dim() });
        }
        let mut best: alloc::collections::BTreeMap<&NoteId, (f64, usize)> = alloc::collections::BTreeMap::new();
        for e in &self.entries {
            let score = cosine(query.as_slice(), e.vector.as_slice());
            best.entry(&e.note_id)
                .and_modify(|(s, ord)| {
                    if score > *s || (score == *s && e.chunk_ordinal < *ord) {
                        *s = score;
                        *ord = e.chunk_ordinal;
                    }
                })
                .or_insert((score, e.chunk_ordinal));
        }
        let mut hits: Vec<SearchHit> = best
            .into_iter()
            .map(|(id, (score, chunk_ordinal))| SearchHit { note_id: id.clone(), score, chunk_ordinal })
            .collect();
        hits.sort_by(|a, b| b.score.total_cmp(&a.score).then_with(|| a.note_id.cmp(&b.note_id)));
        hits.truncate(k);
        Ok(hits)
    }
}
