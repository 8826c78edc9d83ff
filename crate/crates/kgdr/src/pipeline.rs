//! Full-pipeline orchestration over a dataset: decomposition, per-round
//! answer-conditioned retrieval, subquestion answering, merging, final
//! answer generation, metrics, and the alpha / graph-size sweep drivers.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{load_dataset, DatasetError, DatasetRecord};
use crate::decompose::decompose_with_raw;
use crate::embed::{
    read_embedding_file, CachingEmbedder, EmbedError, EmbeddingClient, EmbeddingStore,
    HashEmbedder, HttpEmbeddingClient, Matrix,
};
use crate::eval::{
    exact_matching, f1_score, hit_at_1, matching, summarize, write_alpha_sweep_csv,
    write_k_sweep_csv, write_records_jsonl, write_summary_csv, write_summary_json, EvalError,
    EvalRecord, Metrics, PromptLog, RoundRecord, RunSummary,
};
use crate::graph::{compute_stats, merge_subgraphs, textualize, GraphStats, TextualGraph};
use crate::llm::{
    build_final_prompt, build_subquestion_prompt, CallLedger, ChatClient, ChatConfig,
    HttpChatClient, ScriptRule, ScriptedMock,
};
use crate::retrieve::{retrieve_round, ConnectivityMode, RetrievalConfig, RetrieveError};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Embed(#[from] EmbedError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Retrieve(#[from] RetrieveError),
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("bad mock script {path}: {source}")]
    BadScript {
        path: String,
        #[source]
        source: serde_json::Error,
    },
    #[error("bad config: {0}")]
    BadConfig(String),
}

/// Endpoint and model name for one model role.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RoleEndpoint {
    pub endpoint: String,
    pub model: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub api_key: Option<String>,
}

impl Default for RoleEndpoint {
    fn default() -> Self {
        Self { endpoint: "http://localhost:8000/v1/chat/completions".into(), model: "default".into(), api_key: None }
    }
}

/// Everything a full evaluation run needs.
#[derive(Debug, Clone)]
pub struct PipelineConfig {
    pub dataset: PathBuf,
    pub node_emb: PathBuf,
    pub edge_emb: PathBuf,
    pub retrieval: RetrievalConfig,
    pub decomposer: RoleEndpoint,
    pub sub_answerer: RoleEndpoint,
    pub final_answerer: RoleEndpoint,
    /// Embedding service for query strings (ignored in mock mode, where the
    /// hash embedder serves queries).
    pub embedding: RoleEndpoint,
    /// Disables answer conditioning between consecutive subquestions.
    pub no_sq_dependency: bool,
    /// Replaces PCST construction with the plain top-k union.
    pub no_connectivity: bool,
    /// Skips subquestion answering entirely (rounds retrieve unconditioned).
    pub no_sub_answering: bool,
    pub mock: bool,
    pub mock_script: Option<PathBuf>,
    pub log_prompts: bool,
    pub out_dir: PathBuf,
    pub jobs: usize,
    pub max_subquestions: Option<usize>,
}

impl PipelineConfig {
    pub fn new(dataset: impl Into<PathBuf>, out_dir: impl Into<PathBuf>) -> Self {
        let dataset: PathBuf = dataset.into();
        let node_emb = sibling_with_suffix(&dataset, "nodes.emb");
        let edge_emb = sibling_with_suffix(&dataset, "edges.emb");
        Self {
            dataset,
            node_emb,
            edge_emb,
            retrieval: RetrievalConfig::default(),
            decomposer: RoleEndpoint::default(),
            sub_answerer: RoleEndpoint::default(),
            final_answerer: RoleEndpoint::default(),
            embedding: RoleEndpoint {
                endpoint: "http://localhost:8000/v1/embeddings".into(),
                model: "default".into(),
                api_key: None,
            },
            no_sq_dependency: false,
            no_connectivity: false,
            no_sub_answering: false,
            mock: false,
            mock_script: None,
            log_prompts: false,
            out_dir: out_dir.into(),
            jobs: 1,
            max_subquestions: None,
        }
    }
}

/// `<dir>/<stem>.<suffix>` next to the dataset file.
pub fn sibling_with_suffix(dataset: &Path, suffix: &str) -> PathBuf {
    let stem = dataset.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    dataset.with_file_name(format!("{stem}.{suffix}"))
}

// ---------------------------------------------------------------------------
// Mock script files
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ScriptSection {
    #[serde(default)]
    pub rules: Vec<ScriptRule>,
    #[serde(default)]
    pub default_response: String,
}

/// Scripted responses for the three model roles, loaded in mock mode.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct MockScript {
    #[serde(default)]
    pub decomposer: ScriptSection,
    #[serde(default)]
    pub sub_answerer: ScriptSection,
    #[serde(default)]
    pub final_answerer: ScriptSection,
}

impl MockScript {
    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let body = std::fs::read_to_string(path).map_err(|source| PipelineError::Io {
            path: path.display().to_string(),
            source,
        })?;
        serde_json::from_str(&body).map_err(|source| PipelineError::BadScript {
            path: path.display().to_string(),
            source,
        })
    }
}

struct Clients {
    decomposer: Arc<dyn ChatClient>,
    sub_answerer: Arc<dyn ChatClient>,
    final_answerer: Arc<dyn ChatClient>,
    embedder: Arc<dyn EmbeddingClient>,
}

fn build_clients(cfg: &PipelineConfig, dim: usize) -> Result<Clients, PipelineError> {
    if cfg.mock {
        let script = match &cfg.mock_script {
            Some(path) => MockScript::load(path)?,
            None => {
                let default_path = sibling_with_suffix(&cfg.dataset, "mock.json");
                if default_path.exists() {
                    MockScript::load(&default_path)?
                } else {
                    MockScript::default()
                }
            }
        };
        let section = |s: ScriptSection| -> Arc<dyn ChatClient> {
            Arc::new(ScriptedMock::new(s.rules, s.default_response))
        };
        Ok(Clients {
            decomposer: section(script.decomposer),
            sub_answerer: section(script.sub_answerer),
            final_answerer: section(script.final_answerer),
            embedder: Arc::new(CachingEmbedder::new(Arc::new(HashEmbedder::new(dim)))),
        })
    } else {
        let chat = |role: &RoleEndpoint, max_output_tokens: usize| -> Arc<dyn ChatClient> {
            let mut cc = ChatConfig::new(role.endpoint.clone(), role.model.clone());
            cc.api_key = role.api_key.clone();
            cc.max_output_tokens = max_output_tokens;
            Arc::new(HttpChatClient::new(cc))
        };
        let mut embed_client =
            HttpEmbeddingClient::new(cfg.embedding.endpoint.clone(), cfg.embedding.model.clone());
        embed_client.api_key = cfg.embedding.api_key.clone();
        // The decomposer emits a whole JSON array, so it gets a larger
        // output budget than the single-entity answer roles.
        Ok(Clients {
            decomposer: chat(&cfg.decomposer, 256),
            sub_answerer: chat(&cfg.sub_answerer, 32),
            final_answerer: chat(&cfg.final_answerer, 32),
            embedder: Arc::new(CachingEmbedder::new(Arc::new(embed_client))),
        })
    }
}

// ---------------------------------------------------------------------------
// Dataset-aligned embeddings
// ---------------------------------------------------------------------------

/// The dataset's embedding files hold one row per node/edge, concatenated
/// in record order; this slices out each record's store.
pub struct DatasetEmbeddings {
    nodes: Matrix,
    edges: Matrix,
    node_offsets: Vec<usize>,
    edge_offsets: Vec<usize>,
}

impl DatasetEmbeddings {
    pub fn load(
        node_path: &Path,
        edge_path: &Path,
        records: &[DatasetRecord],
    ) -> Result<Self, EmbedError> {
        let nodes = read_embedding_file(node_path)?;
        let edges = read_embedding_file(edge_path)?;
        if nodes.dim() != edges.dim() {
            return Err(EmbedError::DimMismatch { expected: nodes.dim(), found: edges.dim() });
        }
        let mut node_offsets = Vec::with_capacity(records.len() + 1);
        let mut edge_offsets = Vec::with_capacity(records.len() + 1);
        let (mut n_acc, mut e_acc) = (0usize, 0usize);
        for record in records {
            node_offsets.push(n_acc);
            edge_offsets.push(e_acc);
            n_acc += record.nodes.len();
            e_acc += record.edges.len();
        }
        node_offsets.push(n_acc);
        edge_offsets.push(e_acc);
        if nodes.rows() != n_acc {
            return Err(EmbedError::CountMismatch { expected: n_acc, found: nodes.rows() });
        }
        if edges.rows() != e_acc {
            return Err(EmbedError::CountMismatch { expected: e_acc, found: edges.rows() });
        }
        Ok(Self { nodes, edges, node_offsets, edge_offsets })
    }

    pub fn dim(&self) -> usize {
        self.nodes.dim()
    }

    pub fn store_for(&self, index: usize) -> Result<EmbeddingStore, EmbedError> {
        let nodes = self.nodes.slice_rows(
            self.node_offsets[index],
            self.node_offsets[index + 1] - self.node_offsets[index],
        );
        let edges = self.edges.slice_rows(
            self.edge_offsets[index],
            self.edge_offsets[index + 1] - self.edge_offsets[index],
        );
        EmbeddingStore::new(nodes, edges)
    }
}

// ---------------------------------------------------------------------------
// Single-question run
// ---------------------------------------------------------------------------

fn zero_stats() -> GraphStats {
    GraphStats { num_nodes: 0, num_edges: 0, density: 0.0, num_components: 0, is_connected: false }
}

fn failed_record(record: &DatasetRecord, error: String) -> EvalRecord {
    EvalRecord {
        question_id: record.id.clone(),
        question: record.question.clone(),
        plan: Vec::new(),
        used_fallback: false,
        rounds: Vec::new(),
        merged_stats: zero_stats(),
        merged_hash: 0,
        merged_node_ids: Vec::new(),
        merged_edge_ids: Vec::new(),
        prediction: String::new(),
        gold_answers: record.answers.clone(),
        metrics: None,
        ledger: CallLedger::default(),
        total_calls: 0,
        failed: true,
        error: Some(error),
        prompts: None,
    }
}

fn run_question(
    record: &DatasetRecord,
    graph: &Arc<TextualGraph>,
    store: &EmbeddingStore,
    clients: &Clients,
    cfg: &PipelineConfig,
) -> EvalRecord {
    match run_question_inner(record, graph, store, clients, cfg) {
        Ok(r) => r,
        Err(e) => failed_record(record, e),
    }
}

fn run_question_inner(
    record: &DatasetRecord,
    graph: &Arc<TextualGraph>,
    store: &EmbeddingStore,
    clients: &Clients,
    cfg: &PipelineConfig,
) -> Result<EvalRecord, String> {
    let mut ledger = CallLedger::default();
    let mut prompts: Vec<PromptLog> = Vec::new();

    let (plan, raw_decomposition) =
        decompose_with_raw(&record.question, clients.decomposer.as_ref(), cfg.max_subquestions)
            .map_err(|e| format!("decomposition failed: {e}"))?;
    ledger.decomposition_calls += 1;
    if cfg.log_prompts {
        prompts.push(PromptLog {
            role: "decomposer".into(),
            prompt: crate::decompose::build_decomposition_prompt(&record.question),
            response: raw_decomposition,
        });
    }

    let mode = if cfg.no_connectivity {
        ConnectivityMode::TopKUnion
    } else {
        ConnectivityMode::Pcst
    };

    let mut rounds: Vec<RoundRecord> = Vec::new();
    let mut subgraphs = Vec::with_capacity(plan.subquestions.len());
    let mut prev_answer: Option<String> = None;
    for subq in &plan.subquestions {
        let condition_on = if cfg.no_sq_dependency || cfg.no_sub_answering {
            None
        } else {
            prev_answer.as_deref()
        };
        let round = retrieve_round(
            graph,
            store,
            &record.question,
            subq,
            condition_on,
            &cfg.retrieval,
            clients.embedder.as_ref(),
            mode,
        )
        .map_err(|e| format!("retrieval failed: {e}"))?;

        let mut answer: Option<String> = None;
        let mut empty_answer = false;
        if !cfg.no_sub_answering {
            let subgraph_text = textualize(&round.subgraph);
            let response = clients
                .sub_answerer
                .complete(&build_subquestion_prompt(subq, &subgraph_text))
                .map_err(|e| format!("subquestion answering failed: {e}"))?;
            ledger.subquestion_calls += 1;
            let trimmed = response.trim().to_string();
            empty_answer = trimmed.is_empty();
            if cfg.log_prompts {
                prompts.push(PromptLog {
                    role: "sub_answerer".into(),
                    prompt: build_subquestion_prompt(subq, &subgraph_text),
                    response: trimmed.clone(),
                });
            }
            prev_answer = Some(trimmed.clone());
            answer = Some(trimmed);
        }

        let stats = compute_stats(&round.subgraph);
        rounds.push(RoundRecord {
            subquestion: subq.clone(),
            query_text: round.query_text.clone(),
            answer,
            empty_answer,
            stats,
            graph_hash: round.subgraph.content_hash(),
            node_ids: round.subgraph.node_ids().iter().copied().collect(),
            edge_ids: round.subgraph.edge_ids().iter().copied().collect(),
        });
        subgraphs.push(round.subgraph);
    }

    let merged = merge_subgraphs(&subgraphs).map_err(|e| format!("merge failed: {e}"))?;
    let merged_stats = compute_stats(&merged);
    let merged_text = textualize(&merged);

    let final_prompt = build_final_prompt(&record.question, &merged_text);
    let prediction = clients
        .final_answerer
        .complete(&final_prompt)
        .map_err(|e| format!("final answering failed: {e}"))?
        .trim()
        .to_string();
    ledger.final_calls += 1;
    if cfg.log_prompts {
        prompts.push(PromptLog {
            role: "final_answerer".into(),
            prompt: final_prompt,
            response: prediction.clone(),
        });
    }

    let metrics = Metrics {
        hit1: hit_at_1(&prediction, &record.answers),
        f1: f1_score(&prediction, &record.answers),
        exact_match_in_graph: exact_matching(&merged, &record.answers),
        match_in_graph: matching(
            &merged,
            &record.answers,
            store,
            clients.embedder.as_ref(),
            cfg.retrieval.matching_threshold,
        )
        .map_err(|e| format!("matching metric failed: {e}"))?,
    };

    Ok(EvalRecord {
        question_id: record.id.clone(),
        question: record.question.clone(),
        plan: plan.subquestions.clone(),
        used_fallback: plan.used_fallback,
        rounds,
        merged_stats,
        merged_hash: merged.content_hash(),
        merged_node_ids: merged.node_ids().iter().copied().collect(),
        merged_edge_ids: merged.edge_ids().iter().copied().collect(),
        prediction,
        gold_answers: record.answers.clone(),
        metrics: Some(metrics),
        ledger,
        total_calls: ledger.total(),
        failed: false,
        error: None,
        prompts: if cfg.log_prompts { Some(prompts) } else { None },
    })
}

// ---------------------------------------------------------------------------
// Full runs and sweeps
// ---------------------------------------------------------------------------

/// Runs the pipeline over the whole dataset and writes `records.jsonl`,
/// `summary.json`, and `summary.csv` into the output directory.
///
/// Dataset or embedding load failures abort; per-question model failures
/// mark that record failed and the run continues. Records are ordered by
/// question id regardless of worker completion order.
pub fn run_eval(cfg: &PipelineConfig) -> Result<RunSummary, PipelineError> {
    cfg.retrieval.validate()?;
    let records = load_dataset(&cfg.dataset)?;
    let graphs: Result<Vec<Arc<TextualGraph>>, DatasetError> =
        records.iter().map(|r| r.to_graph()).collect();
    let graphs = graphs?;
    let embeddings = DatasetEmbeddings::load(&cfg.node_emb, &cfg.edge_emb, &records)?;
    let stores: Result<Vec<EmbeddingStore>, EmbedError> =
        (0..records.len()).map(|i| embeddings.store_for(i)).collect();
    let stores = stores?;
    for (graph, store) in graphs.iter().zip(&stores) {
        store.validate_against(graph)?;
    }
    let clients = build_clients(cfg, embeddings.dim())?;

    let jobs = cfg.jobs.max(1);
    let next = AtomicUsize::new(0);
    let slots: Vec<Mutex<Option<EvalRecord>>> =
        (0..records.len()).map(|_| Mutex::new(None)).collect();
    std::thread::scope(|scope| {
        for _ in 0..jobs.min(records.len()) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= records.len() {
                    break;
                }
                let rec = run_question(&records[i], &graphs[i], &stores[i], &clients, cfg);
                *slots[i].lock().unwrap() = Some(rec);
            });
        }
    });
    let mut results: Vec<EvalRecord> = slots
        .into_iter()
        .map(|slot| slot.into_inner().unwrap().expect("every question produced a record"))
        .collect();
    results.sort_by(|a, b| a.question_id.cmp(&b.question_id));

    std::fs::create_dir_all(&cfg.out_dir).map_err(|source| PipelineError::Io {
        path: cfg.out_dir.display().to_string(),
        source,
    })?;
    write_records_jsonl(&cfg.out_dir.join("records.jsonl"), &results)?;
    let summary = summarize(
        &results,
        cfg.retrieval.alpha,
        cfg.retrieval.alpha_orientation.as_str(),
        cfg.retrieval.k_nodes,
        cfg.retrieval.k_edges,
    )?;
    write_summary_json(&cfg.out_dir.join("summary.json"), &summary)?;
    write_summary_csv(&cfg.out_dir.join("summary.csv"), &summary)?;
    Ok(summary)
}

/// One full run per alpha value; writes `sweep_alpha.csv` with the
/// connected/disconnected accuracy split and the orientation label.
pub fn run_alpha_sweep(
    cfg: &PipelineConfig,
    alphas: &[f64],
) -> Result<Vec<RunSummary>, PipelineError> {
    for &alpha in alphas {
        if !(0.0..=1.0).contains(&alpha) {
            return Err(PipelineError::BadConfig(format!("alpha {alpha} not in [0,1]")));
        }
    }
    let mut summaries = Vec::with_capacity(alphas.len());
    for &alpha in alphas {
        let mut point = cfg.clone();
        point.retrieval.alpha = alpha;
        point.out_dir = cfg.out_dir.join(format!("alpha_{alpha:.3}"));
        summaries.push(run_eval(&point)?);
    }
    std::fs::create_dir_all(&cfg.out_dir).map_err(|source| PipelineError::Io {
        path: cfg.out_dir.display().to_string(),
        source,
    })?;
    write_alpha_sweep_csv(&cfg.out_dir.join("sweep_alpha.csv"), &summaries)?;
    Ok(summaries)
}

/// One full run per (K_n, K_e) pair; writes `sweep_k.csv` with mean merged
/// graph sizes.
pub fn run_k_sweep(
    cfg: &PipelineConfig,
    pairs: &[(usize, usize)],
) -> Result<Vec<RunSummary>, PipelineError> {
    for &(kn, ke) in pairs {
        if kn == 0 || ke == 0 {
            return Err(PipelineError::BadConfig("K_n and K_e must be positive".into()));
        }
    }
    let mut summaries = Vec::with_capacity(pairs.len());
    for &(kn, ke) in pairs {
        let mut point = cfg.clone();
        point.retrieval.k_nodes = kn;
        point.retrieval.k_edges = ke;
        point.out_dir = cfg.out_dir.join(format!("k_{kn}_{ke}"));
        summaries.push(run_eval(&point)?);
    }
    std::fs::create_dir_all(&cfg.out_dir).map_err(|source| PipelineError::Io {
        path: cfg.out_dir.display().to_string(),
        source,
    })?;
    write_k_sweep_csv(&cfg.out_dir.join("sweep_k.csv"), &summaries)?;
    Ok(summaries)
}

// ---------------------------------------------------------------------------
// Key-value config files
// ---------------------------------------------------------------------------

/// Parses a `key = value` config file ('#' starts a comment). Flags given
/// on the command line take precedence over file values.
pub fn parse_key_value_config(path: &Path) -> Result<HashMap<String, String>, PipelineError> {
    let body = std::fs::read_to_string(path).map_err(|source| PipelineError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let mut map = HashMap::new();
    for (idx, raw_line) in body.lines().enumerate() {
        let line = raw_line.split('#').next().unwrap_or_default().trim();
        if line.is_empty() {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(PipelineError::BadConfig(format!(
                "{}:{}: expected 'key = value', got '{raw_line}'",
                path.display(),
                idx + 1
            )));
        };
        map.insert(key.trim().to_string(), value.trim().to_string());
    }
    Ok(map)
}
