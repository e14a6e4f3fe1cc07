//! Line-delimited JSON readers and writers for all inter-stage artifacts.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::corpus::{Chunk, ChunkId, DocId, EmbeddingVector};
use crate::error::{Error, Result};
use crate::filter::Decision;
use crate::oracle::TableOracle;
use crate::tree::{ClusterTree, NodeId, NodeRecord};

/// Reads a JSONL file strictly: any malformed line is an error.
pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let reader = BufReader::new(File::open(path)?);
    let mut items = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let item = serde_json::from_str(&line).map_err(|e| {
            Error::InvalidParameter(format!("{}:{}: {e}", path.display(), lineno + 1))
        })?;
        items.push(item);
    }
    Ok(items)
}

/// Reads a JSONL file leniently: malformed lines are skipped and counted.
pub fn read_jsonl_lenient<T: DeserializeOwned>(path: &Path) -> Result<(Vec<T>, usize)> {
    let reader = BufReader::new(File::open(path)?);
    let mut items = Vec::new();
    let mut skipped = 0usize;
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str(&line) {
            Ok(item) => items.push(item),
            Err(e) => {
                tracing::warn!(path = %path.display(), line = lineno + 1, %e, "skipping malformed record");
                skipped += 1;
            }
        }
    }
    Ok((items, skipped))
}

/// Writes records as JSONL, one compact object per line.
pub fn write_jsonl<'a, T: Serialize + 'a>(
    path: &Path,
    items: impl IntoIterator<Item = &'a T>,
) -> Result<()> {
    let mut writer = BufWriter::new(File::create(path)?);
    for item in items {
        serde_json::to_writer(&mut writer, item)?;
        writer.write_all(b"\n")?;
    }
    writer.flush()?;
    Ok(())
}

/// A source document before chunking.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DocRecord {
    pub doc_id: DocId,
    pub text: String,
}

/// One ordinal label for the lookup oracle.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LookupRecord {
    pub chunk_id: ChunkId,
    pub level: i32,
}

/// One real-valued label for the ground-truth oracle.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ValueRecord {
    pub chunk_id: ChunkId,
    pub value: f64,
}

/// One per-chunk filtering decision.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DecisionRecord {
    pub chunk_id: ChunkId,
    pub decision: Decision,
    pub score: f64,
    pub node_id: NodeId,
}

/// Per-document aggregate score.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DocScoreRecord {
    pub doc_id: DocId,
    pub score: f64,
    pub token_count: u64,
}

/// One selected document in rank order.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SelectionRecord {
    pub rank: usize,
    pub doc_id: DocId,
    pub score: f64,
    pub token_count: u64,
}

/// Run-level summary of a filter invocation.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FilterSummary {
    pub k: usize,
    pub total_calls: u64,
    pub frac_evaluated: f64,
}

/// Serialized tree: one JSON object (written as a single line).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TreeFile {
    pub nodes: Vec<NodeRecord>,
    pub root_id: usize,
}

pub fn write_tree(path: &Path, tree: &ClusterTree) -> Result<()> {
    let (nodes, root_id) = tree.to_records();
    let file = TreeFile { nodes, root_id };
    let mut writer = BufWriter::new(File::create(path)?);
    serde_json::to_writer(&mut writer, &file)?;
    writer.write_all(b"\n")?;
    writer.flush()?;
    Ok(())
}

pub fn read_tree(path: &Path) -> Result<ClusterTree> {
    let file: TreeFile = serde_json::from_reader(BufReader::new(File::open(path)?))?;
    ClusterTree::from_records(file.nodes, file.root_id)
}

pub fn read_chunks(path: &Path) -> Result<Vec<Chunk>> {
    read_jsonl(path)
}

pub fn read_embeddings(path: &Path) -> Result<Vec<EmbeddingVector>> {
    read_jsonl(path)
}

/// Loads a `{chunk_id, level}` lookup file into a table oracle.
pub fn load_lookup_oracle(path: &Path, levels: u32) -> Result<TableOracle> {
    let records: Vec<LookupRecord> = read_jsonl(path)?;
    TableOracle::from_levels(records.into_iter().map(|r| (r.chunk_id, r.level)), levels)
}

/// Loads a `{chunk_id, value}` file into a real-valued table oracle.
pub fn load_value_oracle(path: &Path) -> Result<TableOracle> {
    let records: Vec<ValueRecord> = read_jsonl(path)?;
    TableOracle::from_real_values(records.into_iter().map(|r| (r.chunk_id, r.value)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tree::TreeBuilder;

    #[test]
    fn tree_round_trips_identically() {
        let mut b = TreeBuilder::new();
        let x = b.leaf(vec!["x".into()]);
        let y = b.leaf(vec!["y".into()]);
        let root = b.internal(vec![x, y]).unwrap();
        let tree = b.build(root).unwrap();

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("tree.json");
        write_tree(&path, &tree).unwrap();
        let loaded = read_tree(&path).unwrap();
        assert_eq!(
            serde_json::to_string(&tree.to_records()).unwrap(),
            serde_json::to_string(&loaded.to_records()).unwrap()
        );
        // and writing again is byte-identical
        let first = std::fs::read(&path).unwrap();
        write_tree(&path, &loaded).unwrap();
        assert_eq!(first, std::fs::read(&path).unwrap());
    }

    #[test]
    fn lenient_reader_skips_bad_lines() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("docs.jsonl");
        std::fs::write(
            &path,
            "{\"doc_id\":\"a\",\"text\":\"hi\"}\nnot json\n{\"doc_id\":\"b\",\"text\":\"yo\"}\n",
        )
        .unwrap();
        let (docs, skipped): (Vec<DocRecord>, usize) = read_jsonl_lenient(&path).unwrap();
        assert_eq!(docs.len(), 2);
        assert_eq!(skipped, 1);
        let strict: Result<Vec<DocRecord>> = read_jsonl(&path);
        assert!(strict.is_err());
    }
}
