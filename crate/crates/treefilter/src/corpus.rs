//! Corpus domain types: chunks, documents, and their embeddings.
//!
//! The unit that is clustered and filtered is the *chunk*; documents are
//! aggregates of chunks and receive scores only after filtering.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Identifier of a chunk, unique within a corpus.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ChunkId(pub String);

/// Identifier of a source document.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DocId(pub String);

impl fmt::Display for ChunkId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl fmt::Display for DocId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for ChunkId {
    fn from(s: &str) -> Self {
        ChunkId(s.to_string())
    }
}

impl From<&str> for DocId {
    fn from(s: &str) -> Self {
        DocId(s.to_string())
    }
}

/// A contiguous slice of a document, the atomic unit of filtering.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Chunk {
    pub chunk_id: ChunkId,
    pub doc_id: DocId,
    /// Absent when only embeddings were ingested.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text: Option<String>,
    pub token_count: u32,
}

/// A document grouping one or more chunks, in document order.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Document {
    pub doc_id: DocId,
    pub chunk_ids: Vec<ChunkId>,
    /// Filled by score aggregation after a filter run.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub score: Option<f64>,
}

/// An in-memory corpus of chunks grouped into documents.
///
/// Immutable after construction; safe to share across concurrent readers.
#[derive(Debug, Clone, Default)]
pub struct Corpus {
    chunks: BTreeMap<ChunkId, Chunk>,
    documents: BTreeMap<DocId, Document>,
}

impl Corpus {
    /// Builds a corpus from chunk records, dropping chunks shorter than
    /// `min_tokens`. Returns the corpus and the number of dropped chunks.
    ///
    /// Duplicate chunk ids are rejected. Document chunk lists preserve the
    /// input order.
    pub fn from_chunks(records: Vec<Chunk>, min_tokens: u32) -> Result<(Self, usize)> {
        let mut chunks = BTreeMap::new();
        let mut documents: BTreeMap<DocId, Document> = BTreeMap::new();
        let mut dropped = 0usize;
        for chunk in records {
            if chunk.token_count < min_tokens {
                dropped += 1;
                continue;
            }
            let doc = documents
                .entry(chunk.doc_id.clone())
                .or_insert_with(|| Document {
                    doc_id: chunk.doc_id.clone(),
                    chunk_ids: Vec::new(),
                    score: None,
                });
            doc.chunk_ids.push(chunk.chunk_id.clone());
            if chunks.insert(chunk.chunk_id.clone(), chunk).is_some() {
                return Err(Error::InvalidParameter(
                    "duplicate chunk_id in corpus".into(),
                ));
            }
        }
        Ok((Corpus { chunks, documents }, dropped))
    }

    pub fn chunk(&self, id: &ChunkId) -> Option<&Chunk> {
        self.chunks.get(id)
    }

    pub fn document(&self, id: &DocId) -> Option<&Document> {
        self.documents.get(id)
    }

    pub fn chunks(&self) -> impl Iterator<Item = &Chunk> {
        self.chunks.values()
    }

    pub fn documents(&self) -> impl Iterator<Item = &Document> {
        self.documents.values()
    }

    pub fn num_chunks(&self) -> usize {
        self.chunks.len()
    }

    pub fn num_documents(&self) -> usize {
        self.documents.len()
    }
}

/// A per-chunk embedding vector.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EmbeddingVector {
    pub chunk_id: ChunkId,
    pub values: Vec<f64>,
}

/// A dimension-consistent set of embeddings, unit-normalized on construction.
#[derive(Debug, Clone)]
pub struct EmbeddingSet {
    dim: usize,
    items: Vec<EmbeddingVector>,
}

impl EmbeddingSet {
    /// Validates dimensions, normalizes every vector to unit Euclidean norm.
    ///
    /// A zero-norm vector is rejected as a degenerate embedding.
    pub fn new(mut items: Vec<EmbeddingVector>) -> Result<Self> {
        let dim = match items.first() {
            Some(v) => v.values.len(),
            None => return Err(Error::NoData),
        };
        for item in &mut items {
            if item.values.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: item.values.len(),
                });
            }
            let norm = item.values.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm == 0.0 || !norm.is_finite() {
                return Err(Error::DegenerateEmbedding);
            }
            for x in &mut item.values {
                *x /= norm;
            }
        }
        Ok(EmbeddingSet { dim, items })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn items(&self) -> &[EmbeddingVector] {
        &self.items
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn chunk(id: &str, doc: &str, tokens: u32) -> Chunk {
        Chunk {
            chunk_id: id.into(),
            doc_id: doc.into(),
            text: None,
            token_count: tokens,
        }
    }

    #[test]
    fn short_chunks_are_dropped_at_ingestion() {
        let (corpus, dropped) = Corpus::from_chunks(
            vec![chunk("a-0", "a", 100), chunk("a-1", "a", 49), chunk("b-0", "b", 50)],
            50,
        )
        .unwrap();
        assert_eq!(dropped, 1);
        assert_eq!(corpus.num_chunks(), 2);
        assert_eq!(corpus.document(&"a".into()).unwrap().chunk_ids.len(), 1);
    }

    #[test]
    fn duplicate_chunk_ids_rejected() {
        let err = Corpus::from_chunks(vec![chunk("a-0", "a", 60), chunk("a-0", "a", 60)], 50);
        assert!(err.is_err());
    }

    #[test]
    fn embeddings_are_normalized() {
        let set = EmbeddingSet::new(vec![EmbeddingVector {
            chunk_id: "a-0".into(),
            values: vec![3.0, 4.0],
        }])
        .unwrap();
        let norm: f64 = set.items()[0].values.iter().map(|x| x * x).sum();
        assert!((norm - 1.0).abs() < 1e-6);
    }

    #[test]
    fn zero_norm_embedding_rejected() {
        let err = EmbeddingSet::new(vec![EmbeddingVector {
            chunk_id: "a-0".into(),
            values: vec![0.0, 0.0],
        }]);
        assert!(matches!(err, Err(Error::DegenerateEmbedding)));
    }
}
