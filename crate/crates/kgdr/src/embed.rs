//! Dense embeddings for nodes, edges, and query strings.
//!
//! The store is immutable after load and safe to read concurrently. Query
//! embeddings come from an [`EmbeddingClient`], either a real HTTP service
//! or the deterministic hash embedder used in mock mode, and are cached by
//! exact text.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::sync::{Arc, Mutex};
use std::time::Duration;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::TextualGraph;

const MAGIC: &[u8; 4] = b"KGE1";
const VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum EmbedError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: bad magic bytes (expected KGE1)")]
    BadMagic { path: String },
    #[error("{path}: unsupported version {found} (expected {VERSION})")]
    BadVersion { path: String, found: u32 },
    #[error("{path}: file truncated")]
    Truncated { path: String },
    #[error("embedding contains a non-finite value")]
    NonFinite,
    #[error("row count mismatch: expected {expected}, found {found}")]
    CountMismatch { expected: usize, found: usize },
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimMismatch { expected: usize, found: usize },
    #[error("query text is empty")]
    EmptyQuery,
    #[error("embedding service transport failure (retryable): {0}")]
    Transport(String),
    #[error("embedding service rejected the request: {0}")]
    Rejected(String),
    #[error("embedding service returned {expected} inputs worth of data, got {found}")]
    BatchShape { expected: usize, found: usize },
}

impl EmbedError {
    /// Transport failures may be retried; everything else is fatal.
    pub fn is_retryable(&self) -> bool {
        matches!(self, EmbedError::Transport(_))
    }
}

/// Row-major matrix of 32-bit floats.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    dim: usize,
    data: Vec<f32>,
}

impl Matrix {
    pub fn from_rows(rows: Vec<Vec<f32>>, dim: usize) -> Result<Self, EmbedError> {
        let mut data = Vec::with_capacity(rows.len() * dim);
        let n = rows.len();
        for row in rows {
            if row.len() != dim {
                return Err(EmbedError::DimMismatch { expected: dim, found: row.len() });
            }
            if row.iter().any(|v| !v.is_finite()) {
                return Err(EmbedError::NonFinite);
            }
            data.extend_from_slice(&row);
        }
        Ok(Self { rows: n, dim, data })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    /// Copies a contiguous row range into a new matrix.
    pub fn slice_rows(&self, start: usize, count: usize) -> Matrix {
        let data = self.data[start * self.dim..(start + count) * self.dim].to_vec();
        Matrix { rows: count, dim: self.dim, data }
    }
}

/// Node and edge vectors aligned to one graph.
#[derive(Debug, Clone)]
pub struct EmbeddingStore {
    dim: usize,
    nodes: Matrix,
    edges: Matrix,
}

impl EmbeddingStore {
    pub fn new(nodes: Matrix, edges: Matrix) -> Result<Self, EmbedError> {
        if nodes.dim() != edges.dim() {
            return Err(EmbedError::DimMismatch { expected: nodes.dim(), found: edges.dim() });
        }
        Ok(Self { dim: nodes.dim(), nodes, edges })
    }

    /// Loads node and edge embedding files and validates row counts against
    /// the graph.
    pub fn load(
        node_path: &Path,
        edge_path: &Path,
        graph: &TextualGraph,
    ) -> Result<Self, EmbedError> {
        let nodes = read_embedding_file(node_path)?;
        let edges = read_embedding_file(edge_path)?;
        if nodes.rows() != graph.num_nodes() {
            return Err(EmbedError::CountMismatch {
                expected: graph.num_nodes(),
                found: nodes.rows(),
            });
        }
        if edges.rows() != graph.num_edges() {
            return Err(EmbedError::CountMismatch {
                expected: graph.num_edges(),
                found: edges.rows(),
            });
        }
        Self::new(nodes, edges)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes.rows()
    }

    pub fn num_edges(&self) -> usize {
        self.edges.rows()
    }

    pub fn node_vec(&self, id: usize) -> &[f32] {
        self.nodes.row(id)
    }

    pub fn edge_vec(&self, id: usize) -> &[f32] {
        self.edges.row(id)
    }

    pub fn validate_against(&self, graph: &TextualGraph) -> Result<(), EmbedError> {
        if self.num_nodes() != graph.num_nodes() {
            return Err(EmbedError::CountMismatch {
                expected: graph.num_nodes(),
                found: self.num_nodes(),
            });
        }
        if self.num_edges() != graph.num_edges() {
            return Err(EmbedError::CountMismatch {
                expected: graph.num_edges(),
                found: self.num_edges(),
            });
        }
        Ok(())
    }
}

/// A query vector paired with the exact text it was computed from.
#[derive(Debug, Clone, PartialEq)]
pub struct QueryEmbedding {
    pub vector: Vec<f32>,
    pub source_text: String,
}

/// Cosine similarity, computed in f64. All-zero vectors compare as 0.
pub fn cosine(a: &[f32], b: &[f32]) -> Result<f64, EmbedError> {
    if a.len() != b.len() {
        return Err(EmbedError::DimMismatch { expected: a.len(), found: b.len() });
    }
    let mut dot = 0.0f64;
    let mut na = 0.0f64;
    let mut nb = 0.0f64;
    for (&x, &y) in a.iter().zip(b.iter()) {
        let (x, y) = (f64::from(x), f64::from(y));
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if na == 0.0 || nb == 0.0 {
        return Ok(0.0);
    }
    Ok(dot / (na.sqrt() * nb.sqrt()))
}

// ---------------------------------------------------------------------------
// Binary embedding file format
// ---------------------------------------------------------------------------
//
// Little-endian layout: magic "KGE1", u32 version = 1, u32 dim, u64 row
// count, then row-major f32 data.

pub fn write_embedding_file(path: &Path, matrix: &Matrix) -> Result<(), EmbedError> {
    let io_err = |source| EmbedError::Io { path: path.display().to_string(), source };
    let file = File::create(path).map_err(io_err)?;
    let mut w = BufWriter::new(file);
    w.write_all(MAGIC).map_err(io_err)?;
    w.write_all(&VERSION.to_le_bytes()).map_err(io_err)?;
    w.write_all(&(matrix.dim() as u32).to_le_bytes()).map_err(io_err)?;
    w.write_all(&(matrix.rows() as u64).to_le_bytes()).map_err(io_err)?;
    for i in 0..matrix.rows() {
        for &v in matrix.row(i) {
            w.write_all(&v.to_le_bytes()).map_err(io_err)?;
        }
    }
    w.flush().map_err(io_err)?;
    Ok(())
}

pub fn read_embedding_file(path: &Path) -> Result<Matrix, EmbedError> {
    let display = path.display().to_string();
    let io_err = |source| EmbedError::Io { path: display.clone(), source };
    let file = File::open(path).map_err(io_err)?;
    let mut r = BufReader::new(file);

    let mut magic = [0u8; 4];
    read_exact_or(&mut r, &mut magic, &display)?;
    if &magic != MAGIC {
        return Err(EmbedError::BadMagic { path: display });
    }
    let mut buf4 = [0u8; 4];
    read_exact_or(&mut r, &mut buf4, &display)?;
    let version = u32::from_le_bytes(buf4);
    if version != VERSION {
        return Err(EmbedError::BadVersion { path: display, found: version });
    }
    read_exact_or(&mut r, &mut buf4, &display)?;
    let dim = u32::from_le_bytes(buf4) as usize;
    let mut buf8 = [0u8; 8];
    read_exact_or(&mut r, &mut buf8, &display)?;
    let rows = u64::from_le_bytes(buf8) as usize;

    let mut data = vec![0f32; rows * dim];
    let mut raw = vec![0u8; 4096];
    let mut filled = 0usize;
    while filled < data.len() {
        let want = (data.len() - filled).min(raw.len() / 4) * 4;
        match r.read(&mut raw[..want]) {
            Ok(0) => return Err(EmbedError::Truncated { path: display }),
            Ok(n) if n % 4 == 0 => {
                for chunk in raw[..n].chunks_exact(4) {
                    data[filled] = f32::from_le_bytes([chunk[0], chunk[1], chunk[2], chunk[3]]);
                    filled += 1;
                }
            }
            Ok(n) => {
                // Partial float at the read boundary: top up to a multiple of 4.
                let mut rest = n;
                while rest % 4 != 0 {
                    let got = r.read(&mut raw[rest..rest + 1]).map_err(io_err)?;
                    if got == 0 {
                        return Err(EmbedError::Truncated { path: display });
                    }
                    rest += got;
                }
                for chunk in raw[..rest].chunks_exact(4) {
                    data[filled] = f32::from_le_bytes([chunk[0], chunk[1], chunk[2], chunk[3]]);
                    filled += 1;
                }
            }
            Err(source) => return Err(io_err(source)),
        }
    }
    if data.iter().any(|v| !v.is_finite()) {
        return Err(EmbedError::NonFinite);
    }
    Ok(Matrix { rows, dim, data })
}

fn read_exact_or<R: Read>(r: &mut R, buf: &mut [u8], path: &str) -> Result<(), EmbedError> {
    r.read_exact(buf).map_err(|source| {
        if source.kind() == std::io::ErrorKind::UnexpectedEof {
            EmbedError::Truncated { path: path.to_string() }
        } else {
            EmbedError::Io { path: path.to_string(), source }
        }
    })
}

// ---------------------------------------------------------------------------
// Embedding clients
// ---------------------------------------------------------------------------

pub trait EmbeddingClient: Send + Sync {
    /// Embeds a batch of texts, one output vector per input, all of equal
    /// dimension.
    fn embed_batch(&self, texts: &[&str]) -> Result<Vec<Vec<f32>>, EmbedError>;
}

/// Embeds one query and validates its dimension against the store's.
pub fn embed_query(
    text: &str,
    client: &dyn EmbeddingClient,
    expected_dim: usize,
) -> Result<QueryEmbedding, EmbedError> {
    if text.trim().is_empty() {
        return Err(EmbedError::EmptyQuery);
    }
    let mut vectors = client.embed_batch(&[text])?;
    let vector = vectors.pop().ok_or(EmbedError::BatchShape { expected: 1, found: 0 })?;
    if vector.len() != expected_dim {
        return Err(EmbedError::DimMismatch { expected: expected_dim, found: vector.len() });
    }
    if vector.iter().any(|v| !v.is_finite()) {
        return Err(EmbedError::NonFinite);
    }
    Ok(QueryEmbedding { vector, source_text: text.to_string() })
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h = 0xcbf2_9ce4_8422_2325u64;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Deterministic mock embedder: bag of hash-seeded unit word vectors.
///
/// Each word (lowercased, trimmed of surrounding punctuation) seeds a
/// ChaCha8 stream that yields a unit vector; the text embedding is the
/// normalized mean of its word vectors. Equal texts always embed equally,
/// and texts sharing words land measurably closer than unrelated ones,
/// which is all the retrieval tests need.
#[derive(Debug, Clone)]
pub struct HashEmbedder {
    dim: usize,
}

impl HashEmbedder {
    pub fn new(dim: usize) -> Self {
        assert!(dim > 0, "embedding dimension must be positive");
        Self { dim }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    fn word_vector(&self, word: &str) -> Vec<f32> {
        let mut rng = ChaCha8Rng::seed_from_u64(fnv1a(word.as_bytes()));
        let mut v: Vec<f32> = (0..self.dim).map(|_| rng.random::<f32>() * 2.0 - 1.0).collect();
        normalize(&mut v);
        v
    }

    pub fn embed_text(&self, text: &str) -> Vec<f32> {
        let words: Vec<String> = text
            .split_whitespace()
            .map(|w| {
                w.trim_matches(|c: char| !c.is_alphanumeric() && c != '_')
                    .to_lowercase()
            })
            .filter(|w| !w.is_empty())
            .collect();
        let mut acc = vec![0f32; self.dim];
        if words.is_empty() {
            // Punctuation-only text: hash the raw string as a single token.
            return self.word_vector(text);
        }
        for word in &words {
            for (a, b) in acc.iter_mut().zip(self.word_vector(word)) {
                *a += b;
            }
        }
        for a in acc.iter_mut() {
            *a /= words.len() as f32;
        }
        normalize(&mut acc);
        acc
    }
}

fn normalize(v: &mut [f32]) {
    let norm = v.iter().map(|x| f64::from(*x) * f64::from(*x)).sum::<f64>().sqrt();
    if norm > 0.0 {
        for x in v.iter_mut() {
            *x = (f64::from(*x) / norm) as f32;
        }
    }
}

impl EmbeddingClient for HashEmbedder {
    fn embed_batch(&self, texts: &[&str]) -> Result<Vec<Vec<f32>>, EmbedError> {
        Ok(texts.iter().map(|t| self.embed_text(t)).collect())
    }
}

#[derive(Serialize)]
struct EmbeddingRequest<'a> {
    input: &'a [&'a str],
    model: &'a str,
}

#[derive(Deserialize)]
struct EmbeddingResponse {
    data: Vec<EmbeddingDatum>,
}

#[derive(Deserialize)]
struct EmbeddingDatum {
    embedding: Vec<f32>,
}

/// HTTP client for the common embeddings wire shape:
/// POST `{"input": [...], "model": "..."}` returning
/// `{"data": [{"embedding": [...]}]}`.
pub struct HttpEmbeddingClient {
    pub endpoint: String,
    pub model: String,
    pub api_key: Option<String>,
    pub max_retries: u32,
}

impl HttpEmbeddingClient {
    pub fn new(endpoint: impl Into<String>, model: impl Into<String>) -> Self {
        Self {
            endpoint: endpoint.into(),
            model: model.into(),
            api_key: None,
            max_retries: 3,
        }
    }

    fn request_once(&self, texts: &[&str]) -> Result<Vec<Vec<f32>>, EmbedError> {
        let body = EmbeddingRequest { input: texts, model: &self.model };
        let mut req = ureq::post(&self.endpoint);
        if let Some(key) = &self.api_key {
            req = req.header("Authorization", &format!("Bearer {key}"));
        }
        let mut response = req.send_json(&body).map_err(classify_embed_error)?;
        let parsed: EmbeddingResponse = response
            .body_mut()
            .read_json()
            .map_err(|e| EmbedError::Rejected(format!("bad response body: {e}")))?;
        if parsed.data.len() != texts.len() {
            return Err(EmbedError::BatchShape { expected: texts.len(), found: parsed.data.len() });
        }
        Ok(parsed.data.into_iter().map(|d| d.embedding).collect())
    }
}

fn classify_embed_error(err: ureq::Error) -> EmbedError {
    match err {
        ureq::Error::StatusCode(code) if code == 429 || code == 408 || code >= 500 => {
            EmbedError::Transport(format!("http status {code}"))
        }
        ureq::Error::StatusCode(code) => EmbedError::Rejected(format!("http status {code}")),
        ureq::Error::Io(e) => EmbedError::Transport(e.to_string()),
        ureq::Error::Timeout(t) => EmbedError::Transport(format!("timeout: {t}")),
        ureq::Error::HostNotFound => EmbedError::Transport("host not found".into()),
        other => EmbedError::Rejected(other.to_string()),
    }
}

impl EmbeddingClient for HttpEmbeddingClient {
    fn embed_batch(&self, texts: &[&str]) -> Result<Vec<Vec<f32>>, EmbedError> {
        let mut delay = Duration::from_millis(100);
        let mut attempt = 0;
        loop {
            match self.request_once(texts) {
                Ok(v) => return Ok(v),
                Err(e) if e.is_retryable() && attempt < self.max_retries => {
                    attempt += 1;
                    std::thread::sleep(delay);
                    delay *= 2;
                }
                Err(e) => return Err(e),
            }
        }
    }
}

/// Caches embeddings by exact text string around any inner client.
///
/// Safe under concurrent insert-or-get; values are deterministic per key so
/// last-writer-wins is harmless.
pub struct CachingEmbedder {
    inner: Arc<dyn EmbeddingClient>,
    cache: Mutex<HashMap<String, Arc<Vec<f32>>>>,
}

impl CachingEmbedder {
    pub fn new(inner: Arc<dyn EmbeddingClient>) -> Self {
        Self { inner, cache: Mutex::new(HashMap::new()) }
    }

    pub fn cached_len(&self) -> usize {
        self.cache.lock().unwrap().len()
    }
}

impl EmbeddingClient for CachingEmbedder {
    fn embed_batch(&self, texts: &[&str]) -> Result<Vec<Vec<f32>>, EmbedError> {
        let mut out: Vec<Option<Vec<f32>>> = vec![None; texts.len()];
        let mut misses: Vec<usize> = Vec::new();
        {
            let cache = self.cache.lock().unwrap();
            for (i, text) in texts.iter().enumerate() {
                match cache.get(*text) {
                    Some(v) => out[i] = Some(v.as_ref().clone()),
                    None => misses.push(i),
                }
            }
        }
        if !misses.is_empty() {
            let miss_texts: Vec<&str> = misses.iter().map(|&i| texts[i]).collect();
            let fresh = self.inner.embed_batch(&miss_texts)?;
            if fresh.len() != miss_texts.len() {
                return Err(EmbedError::BatchShape {
                    expected: miss_texts.len(),
                    found: fresh.len(),
                });
            }
            let mut cache = self.cache.lock().unwrap();
            for (&i, vector) in misses.iter().zip(fresh) {
                cache.insert(texts[i].to_string(), Arc::new(vector.clone()));
                out[i] = Some(vector);
            }
        }
        Ok(out.into_iter().map(|v| v.expect("all slots filled")).collect())
    }
}

/// What text represents an edge when it is embedded.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum EdgeTextMode {
    /// The relation text alone (the default).
    #[default]
    RelationOnly,
    /// `"{src text} {relation} {dst text}"`, for setups where endpoint
    /// names should influence edge similarity.
    SrcRelationDst,
}

/// The string an edge embeds as under a given mode.
pub fn edge_text(graph: &TextualGraph, edge_id: usize, mode: EdgeTextMode) -> String {
    let edge = graph.edge(edge_id);
    match mode {
        EdgeTextMode::RelationOnly => edge.relation.clone(),
        EdgeTextMode::SrcRelationDst => format!(
            "{} {} {}",
            graph.node_text(edge.src),
            edge.relation,
            graph.node_text(edge.dst)
        ),
    }
}

/// Builds node and edge matrices for a graph with a given embedder, using
/// the default relation-only edge texts.
pub fn embed_graph(
    graph: &TextualGraph,
    client: &dyn EmbeddingClient,
    dim: usize,
) -> Result<(Matrix, Matrix), EmbedError> {
    embed_graph_with(graph, client, dim, EdgeTextMode::RelationOnly)
}

/// [`embed_graph`] with an explicit edge-text convention.
pub fn embed_graph_with(
    graph: &TextualGraph,
    client: &dyn EmbeddingClient,
    dim: usize,
    mode: EdgeTextMode,
) -> Result<(Matrix, Matrix), EmbedError> {
    let node_texts: Vec<&str> = (0..graph.num_nodes()).map(|i| graph.node_text(i)).collect();
    let edge_texts: Vec<String> =
        (0..graph.num_edges()).map(|i| edge_text(graph, i, mode)).collect();
    let edge_refs: Vec<&str> = edge_texts.iter().map(String::as_str).collect();
    let node_rows = if node_texts.is_empty() { Vec::new() } else { client.embed_batch(&node_texts)? };
    let edge_rows = if edge_refs.is_empty() { Vec::new() } else { client.embed_batch(&edge_refs)? };
    Ok((Matrix::from_rows(node_rows, dim)?, Matrix::from_rows(edge_rows, dim)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn cosine_self_similarity_is_one() {
        let v = vec![0.3f32, -1.2, 4.5];
        assert!((cosine(&v, &v).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn cosine_orthogonal_is_zero() {
        assert_eq!(cosine(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 0.0);
    }

    #[test]
    fn cosine_hand_computed_value() {
        let got = cosine(&[1.0, 1.0], &[1.0, 0.0]).unwrap();
        // Hand computation: 1 / sqrt(2).
        assert!((got - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-6);
    }

    #[test]
    fn cosine_zero_vector_is_zero() {
        assert_eq!(cosine(&[0.0, 0.0], &[1.0, 2.0]).unwrap(), 0.0);
    }

    #[test]
    fn cosine_rejects_dim_mismatch() {
        assert!(matches!(
            cosine(&[1.0], &[1.0, 2.0]),
            Err(EmbedError::DimMismatch { .. })
        ));
    }

    fn sample_graph() -> TextualGraph {
        TextualGraph::new(
            vec!["a".into(), "b".into()],
            vec![(0, "r".into(), 1)],
        )
        .unwrap()
    }

    #[test]
    fn embedding_file_round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.emb");
        let m = Matrix::from_rows(
            vec![vec![0.1, -2.5, 3.25, f32::MIN_POSITIVE], vec![1.0, 2.0, 3.0, 4.0]],
            4,
        )
        .unwrap();
        write_embedding_file(&path, &m).unwrap();
        let loaded = read_embedding_file(&path).unwrap();
        assert_eq!(loaded, m);
    }

    #[test]
    fn load_validates_row_counts_against_graph() {
        let dir = tempfile::tempdir().unwrap();
        let nodes_path = dir.path().join("n.emb");
        let edges_path = dir.path().join("e.emb");
        let graph = sample_graph();

        let two = Matrix::from_rows(vec![vec![1.0; 4]; 2], 4).unwrap();
        let one = Matrix::from_rows(vec![vec![1.0; 4]; 1], 4).unwrap();
        write_embedding_file(&nodes_path, &two).unwrap();
        write_embedding_file(&edges_path, &one).unwrap();
        let store = EmbeddingStore::load(&nodes_path, &edges_path, &graph).unwrap();
        assert_eq!(store.num_nodes(), 2);
        assert_eq!(store.dim(), 4);

        let three = Matrix::from_rows(vec![vec![1.0; 4]; 3], 4).unwrap();
        write_embedding_file(&nodes_path, &three).unwrap();
        assert!(matches!(
            EmbeddingStore::load(&nodes_path, &edges_path, &graph),
            Err(EmbedError::CountMismatch { expected: 2, found: 3 })
        ));
    }

    #[test]
    fn load_rejects_bad_magic_version_truncation() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.emb");

        std::fs::write(&path, b"NOPE").unwrap();
        assert!(matches!(read_embedding_file(&path), Err(EmbedError::BadMagic { .. })));

        let mut bytes = Vec::new();
        bytes.extend_from_slice(b"KGE1");
        bytes.extend_from_slice(&9u32.to_le_bytes());
        bytes.extend_from_slice(&4u32.to_le_bytes());
        bytes.extend_from_slice(&0u64.to_le_bytes());
        std::fs::write(&path, &bytes).unwrap();
        assert!(matches!(
            read_embedding_file(&path),
            Err(EmbedError::BadVersion { found: 9, .. })
        ));

        let mut bytes = Vec::new();
        bytes.extend_from_slice(b"KGE1");
        bytes.extend_from_slice(&1u32.to_le_bytes());
        bytes.extend_from_slice(&4u32.to_le_bytes());
        bytes.extend_from_slice(&2u64.to_le_bytes());
        bytes.extend_from_slice(&1.0f32.to_le_bytes());
        std::fs::write(&path, &bytes).unwrap();
        assert!(matches!(read_embedding_file(&path), Err(EmbedError::Truncated { .. })));
    }

    #[test]
    fn hash_embedder_is_deterministic() {
        let e = HashEmbedder::new(64);
        assert_eq!(e.embed_text("the capital of France"), e.embed_text("the capital of France"));
    }

    #[test]
    fn hash_embedder_distinguishes_texts() {
        let e = HashEmbedder::new(64);
        let a = e.embed_text("first text");
        let b = e.embed_text("second text");
        assert!(a.iter().zip(&b).any(|(x, y)| x != y));
    }

    #[test]
    fn hash_embedder_shared_words_raise_similarity() {
        let e = HashEmbedder::new(256);
        let target = e.embed_text("motihari_token");
        let query = e.embed_text("where was orwell born motihari_token ?");
        let unrelated = e.embed_text("completely different words here");
        let hit = cosine(&query, &target).unwrap();
        let miss = cosine(&unrelated, &target).unwrap();
        assert!(hit > 0.25, "hit={hit}");
        assert!(miss < 0.2, "miss={miss}");
    }

    #[test]
    fn embed_query_rejects_empty_text() {
        let e = HashEmbedder::new(8);
        assert!(matches!(embed_query("  ", &e, 8), Err(EmbedError::EmptyQuery)));
    }

    #[test]
    fn embed_query_validates_dim() {
        let e = HashEmbedder::new(8);
        assert!(matches!(
            embed_query("hello", &e, 16),
            Err(EmbedError::DimMismatch { expected: 16, found: 8 })
        ));
        let q = embed_query("hello", &e, 8).unwrap();
        assert_eq!(q.vector.len(), 8);
        assert_eq!(q.source_text, "hello");
    }

    #[test]
    fn edge_text_modes() {
        let g = TextualGraph::new(
            vec!["George Orwell".into(), "Motihari".into()],
            vec![(0, "born in".into(), 1)],
        )
        .unwrap();
        assert_eq!(edge_text(&g, 0, EdgeTextMode::RelationOnly), "born in");
        assert_eq!(
            edge_text(&g, 0, EdgeTextMode::SrcRelationDst),
            "George Orwell born in Motihari"
        );
        let embedder = HashEmbedder::new(32);
        let (_, relation_only) = embed_graph(&g, &embedder, 32).unwrap();
        let (_, with_endpoints) =
            embed_graph_with(&g, &embedder, 32, EdgeTextMode::SrcRelationDst).unwrap();
        assert_ne!(relation_only, with_endpoints);
    }

    #[test]
    fn caching_embedder_reuses_vectors() {
        struct Counting {
            inner: HashEmbedder,
            calls: Mutex<usize>,
        }
        impl EmbeddingClient for Counting {
            fn embed_batch(&self, texts: &[&str]) -> Result<Vec<Vec<f32>>, EmbedError> {
                *self.calls.lock().unwrap() += texts.len();
                self.inner.embed_batch(texts)
            }
        }
        let counting = Arc::new(Counting { inner: HashEmbedder::new(8), calls: Mutex::new(0) });
        let calls = Arc::clone(&counting);
        let cache = CachingEmbedder::new(counting);
        let a = cache.embed_batch(&["x", "y"]).unwrap();
        let b = cache.embed_batch(&["y", "x"]).unwrap();
        assert_eq!(a[0], b[1]);
        assert_eq!(a[1], b[0]);
        assert_eq!(*calls.calls.lock().unwrap(), 2);
        assert_eq!(cache.cached_len(), 2);
    }

    proptest! {
        #[test]
        fn cosine_is_symmetric(a in proptest::collection::vec(-10f32..10.0, 6),
                               b in proptest::collection::vec(-10f32..10.0, 6)) {
            let ab = cosine(&a, &b).unwrap();
            let ba = cosine(&b, &a).unwrap();
            prop_assert!((ab - ba).abs() < 1e-7);
        }

        #[test]
        fn cosine_is_scale_invariant(a in proptest::collection::vec(-10f32..10.0, 6),
                                     b in proptest::collection::vec(-10f32..10.0, 6),
                                     c in 0.01f32..100.0) {
            let scaled: Vec<f32> = a.iter().map(|x| x * c).collect();
            let base = cosine(&a, &b).unwrap();
            let after = cosine(&scaled, &b).unwrap();
            prop_assert!((base - after).abs() < 1e-6);
        }

        #[test]
        fn file_round_trip(rows in proptest::collection::vec(
            proptest::collection::vec(-100f32..100.0, 3), 0..5)) {
            let dir = tempfile::tempdir().unwrap();
            let path = dir.path().join("p.emb");
            let m = Matrix::from_rows(rows, 3).unwrap();
            write_embedding_file(&path, &m).unwrap();
            prop_assert_eq!(read_embedding_file(&path).unwrap(), m);
        }
    }
}
