//! Decompositional retrieval over textual knowledge graphs.
//!
//! Complex questions are decomposed into atomic subquestions; each
//! subquestion drives a retrieval round that scores graph nodes and edges
//! by a weighted similarity to both the subquestion and the original
//! question, then extracts a connected subgraph with a prize-collecting
//! Steiner tree solver. The per-round subgraphs are merged and the merged
//! graph, textualized, conditions the final answer generation. An
//! evaluation harness covers the accuracy and graph-quality metrics plus
//! parameter sweeps.

pub mod dataset;
pub mod decompose;
pub mod embed;
pub mod eval;
pub mod graph;
pub mod llm;
pub mod pcst;
pub mod pipeline;
pub mod retrieve;
pub mod synth;

pub use dataset::{load_dataset, save_dataset, DatasetRecord};
pub use decompose::{build_decomposition_prompt, decompose, parse_decomposition, DecompositionPlan};
pub use embed::{
    cosine, embed_query, read_embedding_file, write_embedding_file, CachingEmbedder,
    EdgeTextMode, EmbeddingClient, EmbeddingStore, HashEmbedder, Matrix, QueryEmbedding,
};
pub use eval::{
    exact_matching, f1_score, hit_at_1, matching, normalize_answer, summarize, EvalRecord,
    Metrics, RunSummary,
};
pub use graph::{
    compute_stats, merge_subgraphs, textualize, GraphStats, Subgraph, TextualGraph,
};
pub use llm::{
    answer_final, answer_subquestion, CallLedger, ChatClient, ChatConfig, HttpChatClient,
    ScriptRule, ScriptedMock,
};
pub use pcst::{solve, solve_exact, PcstInstance, PcstSolution};
pub use pipeline::{
    run_alpha_sweep, run_eval, run_k_sweep, MockScript, PipelineConfig, RoleEndpoint,
    ScriptSection,
};
pub use retrieve::{
    build_pcst_instance, conditioned_query, hybrid_score, retrieve_for_subquestion,
    retrieve_merged, solve_pcst, solve_pcst_exact, top_k_entities, AlphaOrientation,
    ConnectivityMode, RetrievalConfig, ScoredEntity,
};
pub use synth::{generate as generate_synth, SynthConfig, SynthOutput};

// The guide's code blocks run as doctests so the book can never drift from
// the library. One module per chapter keeps failures attributable.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/graphs.md")]
    mod graphs {}
    #[doc = include_str!("../../../book/src/embeddings.md")]
    mod embeddings {}
    #[doc = include_str!("../../../book/src/decomposition.md")]
    mod decomposition {}
    #[doc = include_str!("../../../book/src/retrieval.md")]
    mod retrieval {}
    #[doc = include_str!("../../../book/src/answering.md")]
    mod answering {}
    #[doc = include_str!("../../../book/src/evaluation.md")]
    mod evaluation {}
    #[doc = include_str!("../../../book/src/running.md")]
    mod running {}
}
