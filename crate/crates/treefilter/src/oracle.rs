//! Quality oracles: the expensive evaluator behind the filter.
//!
//! All oracle access goes through [`MemoizedOracle`], which caches scores
//! globally (a chunk is never paid for twice, even across nodes) and keeps a
//! [`QueryLedger`] of call counts.

use std::collections::{BTreeMap, HashMap};
use std::path::PathBuf;
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::corpus::{ChunkId, Corpus};
use crate::error::{Error, Result};
use crate::score::{OrdinalScore, Score};
use crate::tree::NodeId;

/// Which oracle implementation to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OracleKind {
    /// In-memory or file-backed real-valued labels (synthetic benchmarks,
    /// golden runs).
    GroundTruth,
    /// File-backed ordinal levels.
    LookupFile,
    /// Remote scoring endpoint speaking the `quality_score` JSON contract.
    RemoteHttp,
}

/// Oracle configuration, mirrored by the CLI flags and config files.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OracleConfig {
    pub kind: OracleKind,
    /// Number of ordinal levels L (feedback in 0..L, plus -1 for failure).
    #[serde(default = "default_levels")]
    pub levels: u32,
    /// Label file for the ground_truth and lookup_file kinds.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels_path: Option<PathBuf>,
    /// Scoring endpoint URL (remote only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub endpoint: Option<String>,
    /// Prompt template prepended to each chunk text (remote only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prompt_template_path: Option<PathBuf>,
    #[serde(default = "default_timeout_secs")]
    pub request_timeout_secs: f64,
    #[serde(default = "default_max_retries")]
    pub max_retries: u32,
    #[serde(default = "default_max_concurrency")]
    pub max_concurrency: usize,
}

fn default_levels() -> u32 {
    6
}
fn default_timeout_secs() -> f64 {
    30.0
}
fn default_max_retries() -> u32 {
    3
}
fn default_max_concurrency() -> usize {
    8
}

impl OracleConfig {
    pub fn validate(&self) -> Result<()> {
        if self.levels < 2 {
            return Err(Error::InvalidParameter("levels must be >= 2".into()));
        }
        if self.request_timeout_secs < 0.0 {
            return Err(Error::InvalidParameter("timeout must be >= 0".into()));
        }
        match self.kind {
            OracleKind::GroundTruth | OracleKind::LookupFile => {
                if self.labels_path.is_none() {
                    return Err(Error::InvalidParameter(
                        "labels_path required for file-backed oracles".into(),
                    ));
                }
            }
            OracleKind::RemoteHttp => {
                if self.endpoint.is_none() {
                    return Err(Error::InvalidParameter(
                        "endpoint required for remote oracle".into(),
                    ));
                }
            }
        }
        Ok(())
    }
}

/// Environment variable holding the bearer token for the remote oracle.
pub const AUTH_TOKEN_ENV: &str = "TREEFILTER_ORACLE_TOKEN";

/// Accounting of oracle usage.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueryLedger {
    /// Number of fresh (non-memoized) evaluations dispatched.
    pub total_calls: u64,
    /// Distinct chunks ever evaluated; equals `total_calls` under global
    /// memoization.
    pub unique_chunks: u64,
    /// Fresh evaluations attributed to each node via `evaluate_batch`.
    pub per_node_calls: BTreeMap<NodeId, u64>,
    /// Evaluations that returned the failure sentinel.
    pub failures: u64,
}

impl QueryLedger {
    /// Ledger activity since `baseline` (for per-run accounting on a shared
    /// oracle).
    pub fn delta_since(&self, baseline: &QueryLedger) -> QueryLedger {
        let mut per_node_calls = BTreeMap::new();
        for (&node, &count) in &self.per_node_calls {
            let before = baseline.per_node_calls.get(&node).copied().unwrap_or(0);
            if count > before {
                per_node_calls.insert(node, count - before);
            }
        }
        QueryLedger {
            total_calls: self.total_calls - baseline.total_calls,
            unique_chunks: self.unique_chunks - baseline.unique_chunks,
            per_node_calls,
            failures: self.failures - baseline.failures,
        }
    }

    pub fn attributed_calls(&self) -> u64 {
        self.per_node_calls.values().sum()
    }
}

/// The raw evaluator `f(x)`. Implementations must be safe for concurrent
/// callers; memoization and accounting live in [`MemoizedOracle`].
pub trait QualityOracle: Send + Sync {
    fn levels(&self) -> u32;

    fn evaluate_raw(&self, chunk_id: &ChunkId) -> Result<Score>;

    /// Batch hook; implementations may parallelize. Results are positional.
    fn evaluate_raw_batch(&self, chunk_ids: &[&ChunkId]) -> Vec<Result<Score>> {
        chunk_ids.iter().map(|id| self.evaluate_raw(id)).collect()
    }
}

/// Deterministic oracle backed by a score table (planted labels or a lookup
/// file). Unknown chunks are a hard error.
#[derive(Debug, Clone)]
pub struct TableOracle {
    scores: HashMap<ChunkId, Score>,
    levels: u32,
}

impl TableOracle {
    /// Binary 0/1 labels on a two-level ordinal scale.
    pub fn from_binary_labels(labels: impl IntoIterator<Item = (ChunkId, bool)>) -> Self {
        let scores = labels
            .into_iter()
            .map(|(id, good)| {
                let level = if good { 1 } else { 0 };
                (id, Score::Ordinal(OrdinalScore::new(level, 2).unwrap()))
            })
            .collect();
        TableOracle { scores, levels: 2 }
    }

    /// Real-valued labels in `[0, 1]`.
    pub fn from_real_values(values: impl IntoIterator<Item = (ChunkId, f64)>) -> Result<Self> {
        let mut scores = HashMap::new();
        for (id, v) in values {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::InvalidParameter(format!(
                    "label {v} outside [0, 1] for chunk {id}"
                )));
            }
            scores.insert(id, Score::Real(v));
        }
        Ok(TableOracle { scores, levels: 2 })
    }

    /// Ordinal levels on an `levels`-point scale.
    pub fn from_levels(
        entries: impl IntoIterator<Item = (ChunkId, i32)>,
        levels: u32,
    ) -> Result<Self> {
        let mut scores = HashMap::new();
        for (id, level) in entries {
            scores.insert(id, Score::Ordinal(OrdinalScore::new(level, levels)?));
        }
        Ok(TableOracle { scores, levels })
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }
}

impl QualityOracle for TableOracle {
    fn levels(&self) -> u32 {
        self.levels
    }

    fn evaluate_raw(&self, chunk_id: &ChunkId) -> Result<Score> {
        self.scores
            .get(chunk_id)
            .copied()
            .ok_or_else(|| Error::ChunkNotFound(chunk_id.clone()))
    }
}

/// Shape of the remote scorer's JSON reply.
#[derive(Debug, Deserialize)]
struct RemoteReply {
    quality_score: i64,
}

/// HTTP client for a remote scoring endpoint.
///
/// Sends `POST {"text": template + chunk text}` and expects a JSON object
/// with an integer `quality_score` in `0..levels`. Failed or malformed
/// responses (after `max_retries` with exponential backoff) become the
/// failure sentinel, never a hard error; only a chunk without text is fatal.
pub struct RemoteOracle {
    client: reqwest::blocking::Client,
    endpoint: String,
    template: String,
    texts: HashMap<ChunkId, String>,
    levels: u32,
    max_retries: u32,
    max_concurrency: usize,
    backoff_base: Duration,
    auth_token: Option<String>,
}

impl RemoteOracle {
    pub fn new(
        cfg: &OracleConfig,
        template: String,
        texts: HashMap<ChunkId, String>,
    ) -> Result<Self> {
        cfg.validate()?;
        let endpoint = cfg
            .endpoint
            .clone()
            .ok_or_else(|| Error::InvalidParameter("remote oracle needs endpoint".into()))?;
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs_f64(cfg.request_timeout_secs))
            .build()
            .map_err(|e| Error::Http(e.to_string()))?;
        Ok(RemoteOracle {
            client,
            endpoint,
            template,
            texts,
            levels: cfg.levels,
            max_retries: cfg.max_retries,
            max_concurrency: cfg.max_concurrency.max(1),
            backoff_base: Duration::from_secs(1),
            auth_token: std::env::var(AUTH_TOKEN_ENV).ok(),
        })
    }

    /// Builds the text table from a corpus (chunks must carry text).
    pub fn texts_from_corpus(corpus: &Corpus) -> Result<HashMap<ChunkId, String>> {
        corpus
            .chunks()
            .map(|c| {
                let text = c
                    .text
                    .clone()
                    .ok_or_else(|| Error::InvalidParameter(format!(
                        "chunk {} has no text for remote scoring",
                        c.chunk_id
                    )))?;
                Ok((c.chunk_id.clone(), text))
            })
            .collect()
    }

    /// Shrinks the retry backoff; test-only knob.
    pub fn with_backoff_base(mut self, base: Duration) -> Self {
        self.backoff_base = base;
        self
    }

    fn request_once(&self, text: &str) -> Result<Score> {
        let body = serde_json::json!({ "text": format!("{}{}", self.template, text) });
        let mut req = self.client.post(&self.endpoint).json(&body);
        if let Some(token) = &self.auth_token {
            req = req.bearer_auth(token);
        }
        let resp = req.send().map_err(|e| Error::Http(e.to_string()))?;
        if !resp.status().is_success() {
            return Err(Error::Http(format!("status {}", resp.status())));
        }
        let reply: RemoteReply = resp.json().map_err(|e| Error::Http(e.to_string()))?;
        if reply.quality_score < 0 || reply.quality_score >= self.levels as i64 {
            return Err(Error::Http(format!(
                "quality_score {} out of range",
                reply.quality_score
            )));
        }
        Ok(Score::Ordinal(OrdinalScore::new(
            reply.quality_score as i32,
            self.levels,
        )?))
    }
}

impl QualityOracle for RemoteOracle {
    fn levels(&self) -> u32 {
        self.levels
    }

    fn evaluate_raw(&self, chunk_id: &ChunkId) -> Result<Score> {
        let text = self
            .texts
            .get(chunk_id)
            .ok_or_else(|| Error::ChunkNotFound(chunk_id.clone()))?;
        let mut delay = self.backoff_base;
        for attempt in 0..=self.max_retries {
            match self.request_once(text) {
                Ok(score) => return Ok(score),
                Err(err) => {
                    tracing::debug!(%chunk_id, attempt, %err, "remote evaluation failed");
                    if attempt < self.max_retries {
                        std::thread::sleep(delay);
                        delay *= 2;
                    }
                }
            }
        }
        Ok(Score::Ordinal(OrdinalScore::failure(self.levels)))
    }

    fn evaluate_raw_batch(&self, chunk_ids: &[&ChunkId]) -> Vec<Result<Score>> {
        if chunk_ids.len() <= 1 || self.max_concurrency == 1 {
            return chunk_ids.iter().map(|id| self.evaluate_raw(id)).collect();
        }
        // Bounded fan-out: split the batch across at most max_concurrency
        // worker threads, preserving positions.
        let workers = self.max_concurrency.min(chunk_ids.len());
        let per = chunk_ids.len().div_ceil(workers);
        let mut out: Vec<Option<Result<Score>>> = (0..chunk_ids.len()).map(|_| None).collect();
        std::thread::scope(|scope| {
            let mut handles = Vec::new();
            for (w, slice) in chunk_ids.chunks(per).enumerate() {
                handles.push((
                    w * per,
                    scope.spawn(move || {
                        slice
                            .iter()
                            .map(|id| self.evaluate_raw(id))
                            .collect::<Vec<_>>()
                    }),
                ));
            }
            for (offset, handle) in handles {
                for (i, res) in handle.join().expect("oracle worker panicked").into_iter().enumerate()
                {
                    out[offset + i] = Some(res);
                }
            }
        });
        out.into_iter().map(|r| r.unwrap()).collect()
    }
}

/// Globally memoizing front end over any [`QualityOracle`].
pub struct MemoizedOracle {
    inner: Box<dyn QualityOracle>,
    cache: Mutex<HashMap<ChunkId, Score>>,
    ledger: Mutex<QueryLedger>,
}

impl MemoizedOracle {
    pub fn new(inner: impl QualityOracle + 'static) -> Self {
        MemoizedOracle {
            inner: Box::new(inner),
            cache: Mutex::new(HashMap::new()),
            ledger: Mutex::new(QueryLedger::default()),
        }
    }

    pub fn levels(&self) -> u32 {
        self.inner.levels()
    }

    /// Evaluates one chunk. Repeated calls return the cached score without
    /// touching the ledger. Not attributed to any node; prefer
    /// [`evaluate_batch`](Self::evaluate_batch) inside engine loops.
    pub fn evaluate(&self, chunk_id: &ChunkId) -> Result<Score> {
        if let Some(score) = self.cache.lock().unwrap().get(chunk_id) {
            return Ok(*score);
        }
        let score = self.inner.evaluate_raw(chunk_id)?;
        let mut cache = self.cache.lock().unwrap();
        if cache.insert(chunk_id.clone(), score).is_none() {
            let mut ledger = self.ledger.lock().unwrap();
            ledger.total_calls += 1;
            ledger.unique_chunks = cache.len() as u64;
            if score.is_failure() {
                ledger.failures += 1;
            }
        }
        Ok(score)
    }

    /// Evaluates a batch for one node. Duplicate and already-cached ids cost
    /// nothing; fresh evaluations are charged to `node_id`. Results are in
    /// input order. Hard errors (unknown chunks on deterministic oracles)
    /// abort the batch.
    pub fn evaluate_batch(&self, chunk_ids: &[ChunkId], node_id: NodeId) -> Result<Vec<Score>> {
        if chunk_ids.is_empty() {
            return Err(Error::EmptySet);
        }
        // Fresh ids, deduplicated, in first-appearance order.
        let mut misses: Vec<&ChunkId> = Vec::new();
        {
            let cache = self.cache.lock().unwrap();
            let mut seen: HashMap<&ChunkId, ()> = HashMap::new();
            for id in chunk_ids {
                if !cache.contains_key(id) && seen.insert(id, ()).is_none() {
                    misses.push(id);
                }
            }
        }
        if !misses.is_empty() {
            let results = self.inner.evaluate_raw_batch(&misses);
            let mut cache = self.cache.lock().unwrap();
            let mut ledger = self.ledger.lock().unwrap();
            for (id, result) in misses.iter().zip(results) {
                let score = result?;
                if cache.insert((*id).clone(), score).is_none() {
                    ledger.total_calls += 1;
                    *ledger.per_node_calls.entry(node_id).or_insert(0) += 1;
                    if score.is_failure() {
                        ledger.failures += 1;
                    }
                }
            }
            ledger.unique_chunks = cache.len() as u64;
        }
        let cache = self.cache.lock().unwrap();
        chunk_ids
            .iter()
            .map(|id| {
                cache
                    .get(id)
                    .copied()
                    .ok_or_else(|| Error::ChunkNotFound(id.clone()))
            })
            .collect()
    }

    pub fn ledger(&self) -> QueryLedger {
        self.ledger.lock().unwrap().clone()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cid(s: &str) -> ChunkId {
        s.into()
    }

    fn binary_oracle() -> MemoizedOracle {
        MemoizedOracle::new(TableOracle::from_binary_labels(vec![
            (cid("a"), true),
            (cid("b"), false),
            (cid("c"), true),
        ]))
    }

    #[test]
    fn ground_truth_binary_scores() {
        let oracle = binary_oracle();
        assert_eq!(oracle.evaluate(&cid("a")).unwrap().value(), 1.0);
        assert_eq!(oracle.evaluate(&cid("b")).unwrap().value(), 0.0);
    }

    #[test]
    fn unknown_chunk_is_hard_error() {
        let oracle = binary_oracle();
        assert!(matches!(
            oracle.evaluate(&cid("zzz")),
            Err(Error::ChunkNotFound(_))
        ));
    }

    #[test]
    fn memoization_counts_each_chunk_once() {
        let oracle = binary_oracle();
        oracle.evaluate(&cid("a")).unwrap();
        oracle.evaluate(&cid("a")).unwrap();
        oracle.evaluate(&cid("b")).unwrap();
        let ledger = oracle.ledger();
        assert_eq!(ledger.total_calls, 2);
        assert_eq!(ledger.unique_chunks, 2);
    }

    #[test]
    fn batch_dedupes_and_attributes_to_node() {
        let oracle = binary_oracle();
        let node = NodeId(7);
        let scores = oracle
            .evaluate_batch(&[cid("a"), cid("a"), cid("b")], node)
            .unwrap();
        assert_eq!(scores.len(), 3);
        assert_eq!(scores[0], scores[1]);
        let ledger = oracle.ledger();
        assert_eq!(ledger.total_calls, 2);
        assert_eq!(ledger.per_node_calls[&node], 2);
        assert_eq!(ledger.attributed_calls(), ledger.total_calls);

        // A second batch under a different node pays only for fresh chunks.
        oracle
            .evaluate_batch(&[cid("a"), cid("c")], NodeId(9))
            .unwrap();
        let ledger = oracle.ledger();
        assert_eq!(ledger.total_calls, 3);
        assert_eq!(ledger.per_node_calls[&NodeId(9)], 1);
    }

    #[test]
    fn empty_batch_is_an_error() {
        let oracle = binary_oracle();
        assert!(matches!(
            oracle.evaluate_batch(&[], NodeId(0)),
            Err(Error::EmptySet)
        ));
    }

    #[test]
    fn ledger_delta_isolates_a_run() {
        let oracle = binary_oracle();
        oracle.evaluate_batch(&[cid("a")], NodeId(0)).unwrap();
        let baseline = oracle.ledger();
        oracle.evaluate_batch(&[cid("a"), cid("b")], NodeId(1)).unwrap();
        let delta = oracle.ledger().delta_since(&baseline);
        assert_eq!(delta.total_calls, 1);
        assert_eq!(delta.per_node_calls.get(&NodeId(0)), None);
        assert_eq!(delta.per_node_calls[&NodeId(1)], 1);
    }

    #[test]
    fn real_valued_table_oracle() {
        let oracle = MemoizedOracle::new(
            TableOracle::from_real_values(vec![(cid("a"), 0.25)]).unwrap(),
        );
        assert_eq!(oracle.evaluate(&cid("a")).unwrap(), Score::Real(0.25));
        assert!(TableOracle::from_real_values(vec![(cid("x"), 1.5)]).is_err());
    }

    mod remote {
        use super::*;
        use std::io::{Read, Write};
        use std::net::TcpListener;

        /// Minimal scripted HTTP server: plays back one canned response per
        /// connection and records the request bodies it saw.
        fn spawn_server(responses: Vec<String>) -> (String, std::thread::JoinHandle<Vec<String>>) {
            let listener = TcpListener::bind("127.0.0.1:0").unwrap();
            let addr = listener.local_addr().unwrap();
            let handle = std::thread::spawn(move || {
                let mut bodies = Vec::new();
                for response in responses {
                    let (mut stream, _) = listener.accept().unwrap();
                    let mut buf = Vec::new();
                    let mut byte = [0u8; 1];
                    // read headers
                    while !buf.ends_with(b"\r\n\r\n") {
                        if stream.read(&mut byte).unwrap() == 0 {
                            break;
                        }
                        buf.push(byte[0]);
                    }
                    let head = String::from_utf8_lossy(&buf).to_string();
                    let content_length: usize = head
                        .lines()
                        .find_map(|l| l.to_ascii_lowercase().strip_prefix("content-length:").map(str::trim).map(String::from))
                        .and_then(|v| v.parse().ok())
                        .unwrap_or(0);
                    let mut body = vec![0u8; content_length];
                    stream.read_exact(&mut body).unwrap();
                    bodies.push(String::from_utf8_lossy(&body).to_string());
                    let reply = format!(
                        "HTTP/1.1 200 OK\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{}",
                        response.len(),
                        response
                    );
                    stream.write_all(reply.as_bytes()).unwrap();
                }
                bodies
            });
            (format!("http://{addr}/score"), handle)
        }

        fn remote_config(endpoint: String, max_retries: u32) -> OracleConfig {
            OracleConfig {
                kind: OracleKind::RemoteHttp,
                levels: 6,
                labels_path: None,
                endpoint: Some(endpoint),
                prompt_template_path: None,
                request_timeout_secs: 5.0,
                max_retries,
                max_concurrency: 1,
            }
        }

        #[test]
        fn remote_scores_are_normalized() {
            let (endpoint, server) =
                spawn_server(vec!["{\"quality_score\": 4, \"reasoning\": \"fine\"}".into()]);
            let texts = HashMap::from([(cid("a"), "some text".to_string())]);
            let oracle = RemoteOracle::new(&remote_config(endpoint, 0), "RATE: ".into(), texts)
                .unwrap()
                .with_backoff_base(Duration::from_millis(1));
            let score = oracle.evaluate_raw(&cid("a")).unwrap();
            assert_eq!(score.value(), 0.8);
            let bodies = server.join().unwrap();
            assert_eq!(bodies.len(), 1);
            // prompt template is prepended to the chunk text
            assert!(bodies[0].contains("RATE: some text"));
        }

        #[test]
        fn malformed_reply_becomes_failure_sentinel_after_retries() {
            let (endpoint, server) = spawn_server(vec![
                "not json at all".into(),
                "{\"quality_score\": 9}".into(), // out of range
            ]);
            let texts = HashMap::from([(cid("a"), "t".to_string())]);
            let oracle = RemoteOracle::new(&remote_config(endpoint, 1), String::new(), texts)
                .unwrap()
                .with_backoff_base(Duration::from_millis(1));
            let score = oracle.evaluate_raw(&cid("a")).unwrap();
            assert!(score.is_failure());
            assert_eq!(score.value(), 0.0);
            assert_eq!(server.join().unwrap().len(), 2);
        }

        #[test]
        fn retry_recovers_from_transient_garbage() {
            let (endpoint, server) = spawn_server(vec![
                "garbage".into(),
                "{\"quality_score\": 5}".into(),
            ]);
            let texts = HashMap::from([(cid("a"), "t".to_string())]);
            let oracle = RemoteOracle::new(&remote_config(endpoint, 2), String::new(), texts)
                .unwrap()
                .with_backoff_base(Duration::from_millis(1));
            let score = oracle.evaluate_raw(&cid("a")).unwrap();
            assert_eq!(score.value(), 1.0);
            assert_eq!(server.join().unwrap().len(), 2);
        }

        #[test]
        fn missing_text_is_a_hard_error() {
            let (endpoint, _server) = spawn_server(vec![]);
            let oracle =
                RemoteOracle::new(&remote_config(endpoint, 0), String::new(), HashMap::new())
                    .unwrap();
            assert!(matches!(
                oracle.evaluate_raw(&cid("a")),
                Err(Error::ChunkNotFound(_))
            ));
        }

        #[test]
        fn memoized_remote_failures_hit_the_ledger() {
            let (endpoint, server) = spawn_server(vec!["broken".into()]);
            let texts = HashMap::from([(cid("a"), "t".to_string())]);
            let remote = RemoteOracle::new(&remote_config(endpoint, 0), String::new(), texts)
                .unwrap()
                .with_backoff_base(Duration::from_millis(1));
            let oracle = MemoizedOracle::new(remote);
            let scores = oracle.evaluate_batch(&[cid("a"), cid("a")], NodeId(0)).unwrap();
            assert!(scores[0].is_failure());
            let ledger = oracle.ledger();
            assert_eq!(ledger.total_calls, 1);
            assert_eq!(ledger.failures, 1);
            // the sentinel is cached: no second request is ever made
            oracle.evaluate(&cid("a")).unwrap();
            assert_eq!(oracle.ledger().total_calls, 1);
            server.join().unwrap();
        }
    }
}
