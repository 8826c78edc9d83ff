//! Hybrid entity retrieval: weighted similarity scoring against both the
//! subquestion and the original complex question, top-k selection, and
//! connected-subgraph construction through the PCST solvers.
//!
//! Rank-derived prizes follow the `K - rank` scheme with a constant edge
//! cost, and prized edges are rewritten through the virtual-node
//! transformation so the node-prize solvers apply.

use std::collections::BTreeSet;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embed::{cosine, embed_query, EmbedError, EmbeddingClient, EmbeddingStore};
use crate::graph::{merge_subgraphs, EdgeId, GraphError, NodeId, Subgraph, TextualGraph};
use crate::pcst::{self, PcstError, PcstInstance, PcstSolution};

#[derive(Debug, Error)]
pub enum RetrieveError {
    #[error("invalid retrieval config: {0}")]
    BadConfig(String),
    #[error(transparent)]
    Embed(#[from] EmbedError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Pcst(#[from] PcstError),
}

/// Which term of the weighted similarity `alpha` applies to.
///
/// The default weights the subquestion term by `alpha`; the flipped
/// orientation weights the complex-question term instead. Sweep outputs
/// record the convention in use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum AlphaOrientation {
    #[default]
    Subquestion,
    ComplexQuestion,
}

impl AlphaOrientation {
    pub fn as_str(&self) -> &'static str {
        match self {
            AlphaOrientation::Subquestion => "subquestion",
            AlphaOrientation::ComplexQuestion => "complex_question",
        }
    }
}

impl std::str::FromStr for AlphaOrientation {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "subquestion" => Ok(AlphaOrientation::Subquestion),
            "complex-question" | "complex_question" => Ok(AlphaOrientation::ComplexQuestion),
            other => Err(format!(
                "unknown alpha orientation '{other}' (expected 'subquestion' or 'complex-question')"
            )),
        }
    }
}

/// Retrieval hyperparameters.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct RetrievalConfig {
    /// Weight of the subquestion similarity term (under the default
    /// orientation), in `[0, 1]`.
    pub alpha: f64,
    /// Number of top-scored nodes receiving prizes (`K_n`).
    pub k_nodes: usize,
    /// Number of top-scored edges receiving prizes (`K_e`).
    pub k_edges: usize,
    /// Constant cost applied to every graph edge in the PCST instance.
    pub edge_cost: f64,
    /// Cosine threshold for the relaxed graph-matching metric.
    pub matching_threshold: f64,
    pub alpha_orientation: AlphaOrientation,
}

impl Default for RetrievalConfig {
    fn default() -> Self {
        Self {
            alpha: 0.7,
            k_nodes: 3,
            k_edges: 5,
            edge_cost: 0.5,
            matching_threshold: 0.9,
            alpha_orientation: AlphaOrientation::Subquestion,
        }
    }
}

impl RetrievalConfig {
    pub fn validate(&self) -> Result<(), RetrieveError> {
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(RetrieveError::BadConfig(format!("alpha {} not in [0,1]", self.alpha)));
        }
        if self.k_nodes == 0 || self.k_edges == 0 {
            return Err(RetrieveError::BadConfig("k_nodes and k_edges must be >= 1".into()));
        }
        if !(self.edge_cost > 0.0 && self.edge_cost.is_finite()) {
            return Err(RetrieveError::BadConfig(format!(
                "edge_cost {} must be positive",
                self.edge_cost
            )));
        }
        if !(self.matching_threshold > 0.0 && self.matching_threshold <= 1.0) {
            return Err(RetrieveError::BadConfig(format!(
                "matching_threshold {} not in (0,1]",
                self.matching_threshold
            )));
        }
        Ok(())
    }

    /// Effective weight on the subquestion term after applying the
    /// orientation switch.
    pub fn subquestion_weight(&self) -> f64 {
        match self.alpha_orientation {
            AlphaOrientation::Subquestion => self.alpha,
            AlphaOrientation::ComplexQuestion => 1.0 - self.alpha,
        }
    }
}

/// An entity scored against a query pair, with its zero-based rank within a
/// top-k set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoredEntity {
    pub id: usize,
    pub score: f64,
    pub rank: usize,
}

/// Weighted hybrid similarity of one entity vector against the subquestion
/// and complex-question vectors: `w * cos(z_sub, z_e) + (1-w) * cos(z_q, z_e)`.
pub fn hybrid_score(
    z_sub: &[f32],
    z_q: &[f32],
    z_entity: &[f32],
    alpha: f64,
) -> Result<f64, EmbedError> {
    let sub_term = cosine(z_sub, z_entity)?;
    let question_term = cosine(z_q, z_entity)?;
    Ok(alpha * sub_term + (1.0 - alpha) * question_term)
}

/// Scores every row of an entity matrix accessor.
fn score_all<'a>(
    vectors: impl Iterator<Item = &'a [f32]>,
    z_sub: &[f32],
    z_q: &[f32],
    alpha: f64,
) -> Result<Vec<f64>, EmbedError> {
    vectors.map(|v| hybrid_score(z_sub, z_q, v, alpha)).collect()
}

/// The `k` highest-scoring indices, ranked by descending score with ties
/// broken toward lower ids. Returns all ids when `k >= n`.
pub fn top_k_entities(scores: &[f64], k: usize) -> Vec<ScoredEntity> {
    let mut ids: Vec<usize> = (0..scores.len()).collect();
    ids.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    ids.truncate(k);
    ids.into_iter()
        .enumerate()
        .map(|(rank, id)| ScoredEntity { id, score: scores[id], rank })
        .collect()
}

/// PCST instance over a textual graph plus the bookkeeping needed to map an
/// instance-space solution back to graph nodes and edges.
#[derive(Debug, Clone)]
pub struct GraphPcst {
    instance: PcstInstance,
    /// Instance node count belonging to the original graph; nodes at or
    /// beyond this index are virtual.
    n_graph_nodes: usize,
    /// Graph edge represented by each virtual node.
    virtual_origins: Vec<EdgeId>,
    /// Graph edge represented by each instance edge.
    edge_origins: Vec<EdgeId>,
}

impl GraphPcst {
    pub fn instance(&self) -> &PcstInstance {
        &self.instance
    }

    /// Maps an instance-space solution back to the original graph. Virtual
    /// nodes become their source edge plus both endpoints; instance edges
    /// become their source edge plus both endpoints.
    pub fn to_subgraph(
        &self,
        graph: &Arc<TextualGraph>,
        sol: &PcstSolution,
    ) -> Result<Subgraph, GraphError> {
        let mut nodes: BTreeSet<NodeId> = BTreeSet::new();
        let mut edges: BTreeSet<EdgeId> = BTreeSet::new();
        for &v in &sol.nodes {
            if v < self.n_graph_nodes {
                nodes.insert(v);
            } else {
                edges.insert(self.virtual_origins[v - self.n_graph_nodes]);
            }
        }
        for &e in &sol.edges {
            edges.insert(self.edge_origins[e]);
        }
        for &e in &edges {
            let edge = graph.edge(e);
            nodes.insert(edge.src);
            nodes.insert(edge.dst);
        }
        Subgraph::new(Arc::clone(graph), nodes, edges)
    }
}

/// Builds the PCST instance for one retrieval round.
///
/// Node prizes are `K_n - rank` for top nodes and 0 elsewhere; edge prizes
/// `K_e - rank` likewise. Every graph edge carries `cfg.edge_cost`. A
/// prized edge is replaced by a path through a fresh virtual node holding
/// the edge's prize, with the original cost split across the two halves.
pub fn build_pcst_instance(
    graph: &TextualGraph,
    top_nodes: &[ScoredEntity],
    top_edges: &[ScoredEntity],
    cfg: &RetrievalConfig,
) -> GraphPcst {
    let n = graph.num_nodes();
    let mut prizes = vec![0.0f64; n];
    for entity in top_nodes {
        prizes[entity.id] = (cfg.k_nodes - entity.rank) as f64;
    }
    let mut edge_prize = vec![0.0f64; graph.num_edges()];
    for entity in top_edges {
        edge_prize[entity.id] = (cfg.k_edges - entity.rank) as f64;
    }

    let mut edges: Vec<(usize, usize, f64)> = Vec::new();
    let mut edge_origins: Vec<EdgeId> = Vec::new();
    let mut virtual_origins: Vec<EdgeId> = Vec::new();
    for (eid, edge) in graph.edges() {
        if edge_prize[eid] > 0.0 {
            let virt = n + virtual_origins.len();
            prizes.push(edge_prize[eid]);
            virtual_origins.push(eid);
            edges.push((edge.src, virt, cfg.edge_cost / 2.0));
            edge_origins.push(eid);
            edges.push((virt, edge.dst, cfg.edge_cost / 2.0));
            edge_origins.push(eid);
        } else {
            edges.push((edge.src, edge.dst, cfg.edge_cost));
            edge_origins.push(eid);
        }
    }

    let instance = PcstInstance::new(prizes, edges)
        .expect("instances built from validated graphs are well-formed");
    GraphPcst { instance, n_graph_nodes: n, virtual_origins, edge_origins }
}

/// Solves a round instance approximately and maps the tree back to a
/// connected subgraph.
pub fn solve_pcst(graph: &Arc<TextualGraph>, gp: &GraphPcst) -> Result<Subgraph, RetrieveError> {
    let sol = pcst::solve(gp.instance());
    Ok(gp.to_subgraph(graph, &sol)?)
}

/// Exact counterpart of [`solve_pcst`] for oracle checks on small graphs.
pub fn solve_pcst_exact(
    graph: &Arc<TextualGraph>,
    gp: &GraphPcst,
) -> Result<Subgraph, RetrieveError> {
    let sol = pcst::solve_exact(gp.instance())?;
    Ok(gp.to_subgraph(graph, &sol)?)
}

/// Retrieval query text for a round: the subquestion itself, or the
/// answer-conditioned form when the previous round's answer is available.
pub fn conditioned_query(subquestion: &str, prev_answer: Option<&str>) -> String {
    match prev_answer {
        Some(answer) => format!("Previous answer: {answer}. {subquestion}"),
        None => subquestion.to_string(),
    }
}

/// How the round's scored entities become a subgraph.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ConnectivityMode {
    /// Connect through the prize-collecting Steiner tree.
    #[default]
    Pcst,
    /// Plain union of top-k nodes and top-k edges (with their endpoints);
    /// used by the connectivity ablation.
    TopKUnion,
}

/// Everything produced by one retrieval round.
#[derive(Debug, Clone)]
pub struct RoundRetrieval {
    pub query_text: String,
    pub top_nodes: Vec<ScoredEntity>,
    pub top_edges: Vec<ScoredEntity>,
    pub subgraph: Subgraph,
}

/// Runs one retrieval round for a subquestion.
///
/// The query embedding comes from the conditioned query text; the
/// complex-question embedding provides the second similarity term.
#[allow(clippy::too_many_arguments)]
pub fn retrieve_round(
    graph: &Arc<TextualGraph>,
    store: &EmbeddingStore,
    question_text: &str,
    subq_text: &str,
    prev_answer: Option<&str>,
    cfg: &RetrievalConfig,
    embedder: &dyn EmbeddingClient,
    mode: ConnectivityMode,
) -> Result<RoundRetrieval, RetrieveError> {
    cfg.validate()?;
    let query_text = conditioned_query(subq_text, prev_answer);
    let z_sub = embed_query(&query_text, embedder, store.dim())?;
    let z_q = embed_query(question_text, embedder, store.dim())?;
    let weight = cfg.subquestion_weight();

    let node_scores = score_all(
        (0..store.num_nodes()).map(|i| store.node_vec(i)),
        &z_sub.vector,
        &z_q.vector,
        weight,
    )?;
    let edge_scores = score_all(
        (0..store.num_edges()).map(|i| store.edge_vec(i)),
        &z_sub.vector,
        &z_q.vector,
        weight,
    )?;
    let top_nodes = top_k_entities(&node_scores, cfg.k_nodes);
    let top_edges = top_k_entities(&edge_scores, cfg.k_edges);

    let subgraph = match mode {
        ConnectivityMode::Pcst => {
            let gp = build_pcst_instance(graph, &top_nodes, &top_edges, cfg);
            solve_pcst(graph, &gp)?
        }
        ConnectivityMode::TopKUnion => top_k_union_subgraph(graph, &top_nodes, &top_edges)?,
    };
    Ok(RoundRetrieval { query_text, top_nodes, top_edges, subgraph })
}

/// Connected subgraph for one subquestion (PCST mode).
pub fn retrieve_for_subquestion(
    graph: &Arc<TextualGraph>,
    store: &EmbeddingStore,
    question_text: &str,
    subq_text: &str,
    prev_answer: Option<&str>,
    cfg: &RetrievalConfig,
    embedder: &dyn EmbeddingClient,
) -> Result<Subgraph, RetrieveError> {
    retrieve_round(
        graph,
        store,
        question_text,
        subq_text,
        prev_answer,
        cfg,
        embedder,
        ConnectivityMode::Pcst,
    )
    .map(|round| round.subgraph)
}

/// Union of per-subquestion subgraphs for a full plan.
///
/// `answers` holds one entry per already-answered subquestion; round `i`
/// conditions on `answers[i-1]` when present. Connectivity of the union is
/// not enforced.
pub fn retrieve_merged(
    graph: &Arc<TextualGraph>,
    store: &EmbeddingStore,
    question_text: &str,
    plan: &crate::decompose::DecompositionPlan,
    answers: &[String],
    cfg: &RetrievalConfig,
    embedder: &dyn EmbeddingClient,
) -> Result<Subgraph, RetrieveError> {
    let mut parts = Vec::with_capacity(plan.subquestions.len());
    for (i, subq) in plan.subquestions.iter().enumerate() {
        let prev = if i == 0 { None } else { answers.get(i - 1).map(String::as_str) };
        parts.push(retrieve_for_subquestion(
            graph, store, question_text, subq, prev, cfg, embedder,
        )?);
    }
    Ok(merge_subgraphs(&parts)?)
}

/// The connectivity-ablation subgraph: top-k nodes plus top-k edges with
/// their endpoints, no Steiner connection.
pub fn top_k_union_subgraph(
    graph: &Arc<TextualGraph>,
    top_nodes: &[ScoredEntity],
    top_edges: &[ScoredEntity],
) -> Result<Subgraph, GraphError> {
    let mut nodes: BTreeSet<NodeId> = top_nodes.iter().map(|e| e.id).collect();
    let edges: BTreeSet<EdgeId> = top_edges.iter().map(|e| e.id).collect();
    for &eid in &edges {
        let edge = graph.edge(eid);
        nodes.insert(edge.src);
        nodes.insert(edge.dst);
    }
    Subgraph::new(Arc::clone(graph), nodes, edges)
}
