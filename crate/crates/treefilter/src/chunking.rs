//! Document chunking for embedding-model context limits.
//!
//! Documents longer than the token limit are split into consecutive chunks;
//! chunks below the minimum length are dropped. Token counting is a
//! configurable approximation (whitespace-delimited by default) so the
//! chunker stays deterministic without a proprietary tokenizer.

use serde::{Deserialize, Serialize};

use crate::corpus::{Chunk, DocId};
use crate::error::{Error, Result};

/// Chunking parameters.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ChunkingConfig {
    /// Maximum tokens per chunk.
    pub token_limit: u32,
    /// Chunks shorter than this are dropped.
    pub min_tokens: u32,
}

impl Default for ChunkingConfig {
    fn default() -> Self {
        ChunkingConfig {
            token_limit: 2048,
            min_tokens: 50,
        }
    }
}

impl ChunkingConfig {
    pub fn validate(&self) -> Result<()> {
        if self.token_limit == 0 || self.min_tokens == 0 {
            return Err(Error::InvalidParameter(
                "token_limit and min_tokens must be positive".into(),
            ));
        }
        if self.token_limit <= self.min_tokens {
            return Err(Error::InvalidParameter(
                "token_limit must exceed min_tokens".into(),
            ));
        }
        Ok(())
    }
}

/// Splits one document into chunks of at most `token_limit` whitespace
/// tokens; chunks shorter than `min_tokens` are dropped. Chunk ids are
/// `"{doc_id}-{ordinal}"`. Returns the kept chunks and the number dropped.
pub fn chunk_document(doc_id: &DocId, text: &str, cfg: &ChunkingConfig) -> (Vec<Chunk>, usize) {
    let tokens: Vec<&str> = text.split_whitespace().collect();
    let mut chunks = Vec::new();
    let mut dropped = 0usize;
    for (ordinal, piece) in tokens.chunks(cfg.token_limit as usize).enumerate() {
        if (piece.len() as u32) < cfg.min_tokens {
            dropped += 1;
            continue;
        }
        chunks.push(Chunk {
            chunk_id: format!("{doc_id}-{ordinal}").as_str().into(),
            doc_id: doc_id.clone(),
            text: Some(piece.join(" ")),
            token_count: piece.len() as u32,
        });
    }
    (chunks, dropped)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn words(n: usize) -> String {
        (0..n).map(|i| format!("w{i}")).collect::<Vec<_>>().join(" ")
    }

    #[test]
    fn short_document_is_one_chunk() {
        let (chunks, dropped) =
            chunk_document(&"d".into(), &words(100), &ChunkingConfig::default());
        assert_eq!(chunks.len(), 1);
        assert_eq!(dropped, 0);
        assert_eq!(chunks[0].token_count, 100);
        assert_eq!(chunks[0].chunk_id.0, "d-0");
    }

    #[test]
    fn split_keeps_a_long_enough_tail() {
        let (chunks, dropped) =
            chunk_document(&"d".into(), &words(2100), &ChunkingConfig::default());
        assert_eq!(dropped, 0);
        assert_eq!(
            chunks.iter().map(|c| c.token_count).collect::<Vec<_>>(),
            vec![2048, 52]
        );
    }

    #[test]
    fn split_drops_a_short_tail() {
        let (chunks, dropped) =
            chunk_document(&"d".into(), &words(2090), &ChunkingConfig::default());
        assert_eq!(dropped, 1);
        assert_eq!(
            chunks.iter().map(|c| c.token_count).collect::<Vec<_>>(),
            vec![2048]
        );
    }

    #[test]
    fn whole_document_below_minimum_is_dropped() {
        let (chunks, dropped) =
            chunk_document(&"d".into(), &words(42), &ChunkingConfig::default());
        assert!(chunks.is_empty());
        assert_eq!(dropped, 1);
    }

    #[test]
    fn bad_config_rejected() {
        let cfg = ChunkingConfig {
            token_limit: 50,
            min_tokens: 50,
        };
        assert!(cfg.validate().is_err());
    }
}
