//! Evaluation: answer normalization, Hit@1, set-F1, graph matching
//! metrics, per-question run records, and run summaries.

use std::collections::BTreeSet;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embed::{cosine, EmbedError, EmbeddingClient, EmbeddingStore};
use crate::graph::{GraphStats, Subgraph};
use crate::llm::CallLedger;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("cannot summarize an empty record list")]
    NoRecords,
    #[error("io error writing {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Embed(#[from] EmbedError),
}

/// Lowercases, strips punctuation, collapses whitespace, and drops a
/// leading article (a/an/the).
pub fn normalize_answer(s: &str) -> String {
    let lowered = s.to_lowercase();
    let stripped: String = lowered
        .chars()
        .map(|c| if c.is_alphanumeric() || c.is_whitespace() { c } else { ' ' })
        .collect();
    let collapsed = stripped.split_whitespace().collect::<Vec<_>>().join(" ");
    for article in ["a ", "an ", "the "] {
        if let Some(rest) = collapsed.strip_prefix(article) {
            return rest.to_string();
        }
    }
    collapsed
}

/// 1 iff any normalized gold answer occurs as a substring of the
/// normalized prediction.
pub fn hit_at_1(prediction: &str, gold: &[String]) -> u8 {
    let pred = normalize_answer(prediction);
    u8::from(gold.iter().any(|g| {
        let g = normalize_answer(g);
        !g.is_empty() && pred.contains(&g)
    }))
}

/// Splits a prediction into candidate entities on commas, semicolons, and
/// newlines, normalized into a set.
pub fn split_prediction(prediction: &str) -> BTreeSet<String> {
    prediction
        .split([',', ';', '\n'])
        .map(normalize_answer)
        .filter(|s| !s.is_empty())
        .collect()
}

/// Set F1 between the split prediction and the normalized gold answers.
pub fn f1_score(prediction: &str, gold: &[String]) -> f64 {
    let pred_set = split_prediction(prediction);
    let gold_set: BTreeSet<String> = gold
        .iter()
        .map(|g| normalize_answer(g))
        .filter(|s| !s.is_empty())
        .collect();
    if pred_set.is_empty() || gold_set.is_empty() {
        return 0.0;
    }
    let overlap = pred_set.intersection(&gold_set).count() as f64;
    if overlap == 0.0 {
        return 0.0;
    }
    let precision = overlap / pred_set.len() as f64;
    let recall = overlap / gold_set.len() as f64;
    2.0 * precision * recall / (precision + recall)
}

/// 1 iff some node text in the merged graph normalizes equal to some gold
/// answer.
pub fn exact_matching(merged: &Subgraph, gold: &[String]) -> u8 {
    let gold_set: BTreeSet<String> = gold
        .iter()
        .map(|g| normalize_answer(g))
        .filter(|s| !s.is_empty())
        .collect();
    u8::from(
        merged
            .node_ids()
            .iter()
            .any(|&id| gold_set.contains(&normalize_answer(merged.parent().node_text(id)))),
    )
}

/// 1 iff some node embedding reaches cosine >= `threshold` against some
/// gold-answer embedding.
pub fn matching(
    merged: &Subgraph,
    gold: &[String],
    store: &EmbeddingStore,
    embedder: &dyn EmbeddingClient,
    threshold: f64,
) -> Result<u8, EvalError> {
    if merged.num_nodes() == 0 || gold.is_empty() {
        return Ok(0);
    }
    let gold_refs: Vec<&str> = gold.iter().map(String::as_str).collect();
    let gold_vecs = embedder.embed_batch(&gold_refs)?;
    for &node in merged.node_ids() {
        let node_vec = store.node_vec(node);
        for gold_vec in &gold_vecs {
            if cosine(node_vec, gold_vec)? >= threshold {
                return Ok(1);
            }
        }
    }
    Ok(0)
}

/// Per-question metric values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub hit1: u8,
    pub f1: f64,
    pub exact_match_in_graph: u8,
    pub match_in_graph: u8,
}

/// One retrieval round as recorded in the run record.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RoundRecord {
    pub subquestion: String,
    /// Exact text embedded for this round (answer-conditioned when the
    /// dependency between subquestions is enabled).
    pub query_text: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub answer: Option<String>,
    pub empty_answer: bool,
    pub stats: GraphStats,
    pub graph_hash: u64,
    pub node_ids: Vec<usize>,
    pub edge_ids: Vec<usize>,
}

/// A logged prompt/response pair (written when prompt logging is on).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PromptLog {
    pub role: String,
    pub prompt: String,
    pub response: String,
}

/// Everything recorded about one question's run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalRecord {
    pub question_id: String,
    pub question: String,
    pub plan: Vec<String>,
    pub used_fallback: bool,
    pub rounds: Vec<RoundRecord>,
    pub merged_stats: GraphStats,
    pub merged_hash: u64,
    pub merged_node_ids: Vec<usize>,
    pub merged_edge_ids: Vec<usize>,
    pub prediction: String,
    pub gold_answers: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub metrics: Option<Metrics>,
    pub ledger: CallLedger,
    pub total_calls: usize,
    pub failed: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub prompts: Option<Vec<PromptLog>>,
}

/// Aggregates over a run. Failed records are excluded from metric means
/// and counted in `num_failed`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunSummary {
    pub alpha: f64,
    pub alpha_orientation: String,
    pub k_nodes: usize,
    pub k_edges: usize,
    pub num_questions: usize,
    pub num_failed: usize,
    pub hit1: f64,
    pub f1: f64,
    pub exact_matching: f64,
    pub matching: f64,
    pub connected_fraction: f64,
    pub mean_density: f64,
    pub mean_subquestions: f64,
    pub mean_llm_calls: f64,
    pub mean_merged_nodes: f64,
    pub mean_merged_edges: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub hit1_connected: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub hit1_disconnected: Option<f64>,
    pub connected_count: usize,
    pub disconnected_count: usize,
}

/// Arithmetic means over all successful records, sorted by question id
/// upstream.
pub fn summarize(
    records: &[EvalRecord],
    alpha: f64,
    alpha_orientation: &str,
    k_nodes: usize,
    k_edges: usize,
) -> Result<RunSummary, EvalError> {
    if records.is_empty() {
        return Err(EvalError::NoRecords);
    }
    let ok: Vec<&EvalRecord> = records.iter().filter(|r| !r.failed).collect();
    let num_failed = records.len() - ok.len();
    let n = ok.len() as f64;

    let mut sum_hit1 = 0.0;
    let mut sum_f1 = 0.0;
    let mut sum_em = 0.0;
    let mut sum_match = 0.0;
    let mut sum_connected = 0.0;
    let mut sum_density = 0.0;
    let mut sum_plan = 0.0;
    let mut sum_calls = 0.0;
    let mut sum_nodes = 0.0;
    let mut sum_edges = 0.0;
    let mut hit1_connected = Vec::new();
    let mut hit1_disconnected = Vec::new();
    for r in &ok {
        let m = r.metrics.unwrap_or(Metrics {
            hit1: 0,
            f1: 0.0,
            exact_match_in_graph: 0,
            match_in_graph: 0,
        });
        sum_hit1 += f64::from(m.hit1);
        sum_f1 += m.f1;
        sum_em += f64::from(m.exact_match_in_graph);
        sum_match += f64::from(m.match_in_graph);
        sum_connected += f64::from(u8::from(r.merged_stats.is_connected));
        sum_density += r.merged_stats.density;
        sum_plan += r.plan.len() as f64;
        sum_calls += r.total_calls as f64;
        sum_nodes += r.merged_stats.num_nodes as f64;
        sum_edges += r.merged_stats.num_edges as f64;
        if r.merged_stats.is_connected {
            hit1_connected.push(f64::from(m.hit1));
        } else {
            hit1_disconnected.push(f64::from(m.hit1));
        }
    }
    let mean = |sum: f64| if n > 0.0 { sum / n } else { 0.0 };
    let group_mean = |v: &[f64]| {
        if v.is_empty() {
            None
        } else {
            Some(v.iter().sum::<f64>() / v.len() as f64)
        }
    };

    Ok(RunSummary {
        alpha,
        alpha_orientation: alpha_orientation.to_string(),
        k_nodes,
        k_edges,
        num_questions: records.len(),
        num_failed,
        hit1: mean(sum_hit1),
        f1: mean(sum_f1),
        exact_matching: mean(sum_em),
        matching: mean(sum_match),
        connected_fraction: mean(sum_connected),
        mean_density: mean(sum_density),
        mean_subquestions: mean(sum_plan),
        mean_llm_calls: mean(sum_calls),
        mean_merged_nodes: mean(sum_nodes),
        mean_merged_edges: mean(sum_edges),
        hit1_connected: group_mean(&hit1_connected),
        hit1_disconnected: group_mean(&hit1_disconnected),
        connected_count: hit1_connected.len(),
        disconnected_count: hit1_disconnected.len(),
    })
}

// ---------------------------------------------------------------------------
// Output files
// ---------------------------------------------------------------------------

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> EvalError + '_ {
    move |source| EvalError::Io { path: path.display().to_string(), source }
}

pub fn write_records_jsonl(path: &Path, records: &[EvalRecord]) -> Result<(), EvalError> {
    let file = File::create(path).map_err(io_err(path))?;
    let mut w = BufWriter::new(file);
    for record in records {
        let line = serde_json::to_string(record).expect("record serialization cannot fail");
        writeln!(w, "{line}").map_err(io_err(path))?;
    }
    w.flush().map_err(io_err(path))?;
    Ok(())
}

pub fn write_summary_json(path: &Path, summary: &RunSummary) -> Result<(), EvalError> {
    let body = serde_json::to_string_pretty(summary).expect("summary serialization cannot fail");
    std::fs::write(path, body + "\n").map_err(io_err(path))
}

/// Fixed summary CSV column order.
pub const SUMMARY_COLUMNS: [&str; 11] = [
    "alpha",
    "k_nodes",
    "k_edges",
    "hit1",
    "f1",
    "exact_matching",
    "matching",
    "connected_fraction",
    "mean_density",
    "mean_subquestions",
    "mean_llm_calls",
];

fn summary_row(s: &RunSummary) -> String {
    format!(
        "{},{},{},{},{},{},{},{},{},{},{}",
        s.alpha,
        s.k_nodes,
        s.k_edges,
        s.hit1,
        s.f1,
        s.exact_matching,
        s.matching,
        s.connected_fraction,
        s.mean_density,
        s.mean_subquestions,
        s.mean_llm_calls,
    )
}

pub fn write_summary_csv(path: &Path, summary: &RunSummary) -> Result<(), EvalError> {
    let body = format!("{}\n{}\n", SUMMARY_COLUMNS.join(","), summary_row(summary));
    std::fs::write(path, body).map_err(io_err(path))
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// One row per sweep point; base columns plus the connected/disconnected
/// accuracy split and the orientation label.
pub fn write_alpha_sweep_csv(path: &Path, summaries: &[RunSummary]) -> Result<(), EvalError> {
    let mut body = format!(
        "{},hit1_connected,hit1_disconnected,connected_count,disconnected_count,alpha_orientation\n",
        SUMMARY_COLUMNS.join(",")
    );
    for s in summaries {
        body.push_str(&format!(
            "{},{},{},{},{},{}\n",
            summary_row(s),
            opt(s.hit1_connected),
            opt(s.hit1_disconnected),
            s.connected_count,
            s.disconnected_count,
            s.alpha_orientation,
        ));
    }
    std::fs::write(path, body).map_err(io_err(path))
}

/// One row per (K_n, K_e) pair; base columns plus mean merged graph size.
pub fn write_k_sweep_csv(path: &Path, summaries: &[RunSummary]) -> Result<(), EvalError> {
    let mut body = format!("{},mean_merged_nodes,mean_merged_edges\n", SUMMARY_COLUMNS.join(","));
    for s in summaries {
        body.push_str(&format!(
            "{},{},{}\n",
            summary_row(s),
            s.mean_merged_nodes,
            s.mean_merged_edges,
        ));
    }
    std::fs::write(path, body).map_err(io_err(path))
}
