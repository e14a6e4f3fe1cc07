//! Sample-efficient tree-based data filtering.
//!
//! Given a corpus of embedded text chunks: cluster the embeddings into a
//! shallow balanced hierarchy, then adaptively sample an expensive quality
//! oracle at tree nodes to classify whole subtrees as keep or discard. Under
//! a planted-purity assumption the number of oracle calls scales with the
//! complexity of the best tree cut rather than the corpus size.
//!
//! Module map:
//! - [`corpus`], [`score`], [`tree`]: domain types (chunks, documents,
//!   embeddings, ordinal scores, cluster trees and cuts).
//! - [`clustering`]: round-based affinity merging over cosine distance.
//! - [`oracle`]: quality oracles with global memoization and call ledgers.
//! - [`estimator`]: Hoeffding widths, confidence schedules, Dirichlet
//!   credible intervals, feedback entropy.
//! - [`filter`]: the greedy subtree classifier, document aggregation,
//!   token-budgeted selection, and the entropy probe.
//! - [`synthbench`]: planted-tree Monte Carlo harness for the purity and
//!   sample-complexity guarantees.
//! - [`chunking`], [`jsonl`]: corpus preparation and artifact formats.

pub mod chunking;
pub mod clustering;
pub mod corpus;
pub mod error;
pub mod estimator;
pub mod filter;
pub mod jsonl;
pub mod oracle;
pub mod rng;
pub mod score;
pub mod synthbench;
pub mod tree;

pub use corpus::{Chunk, ChunkId, Corpus, DocId, Document, EmbeddingSet, EmbeddingVector};
pub use error::{Error, Result};
pub use filter::{run_filter, FilterConfig, FilterOutcome};
pub use oracle::{MemoizedOracle, OracleConfig, QualityOracle, QueryLedger};
pub use score::{OrdinalScore, Score};
pub use tree::{ClusterTree, Cut, NodeId};
