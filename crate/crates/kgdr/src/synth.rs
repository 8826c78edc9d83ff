//! Synthetic dataset generation: planted-answer chain graphs with decoys,
//! hash-embedder-aligned embedding files, and scripted mock responses, so
//! the whole pipeline runs offline and deterministically.
//!
//! Each question gets a chain `e0 -> e1 -> ... -> eh` whose last node is
//! the gold answer. Subquestion texts name their hop's target token, which
//! makes the target the cosine argmax under the hash embedder. The final
//! hop's relation text is shared with `decoy_shared_edges` decoy edges
//! placed at lower edge ids; with at least `k_edges` such decoys, the
//! undecomposed question can never rank the true answer edge into the
//! prized set, so retrieval from the complex question alone misses the
//! planted answer while the decomposed rounds recover it through the
//! target-node prizes. Every chain node also carries a satellite neighbor
//! whose text repeats the chain token: satellites rank just below their
//! chain node, which gives larger `K_n` settings extra absorbable prizes
//! and makes merged graphs grow with `K_n`.

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::dataset::{save_dataset, DatasetError, DatasetRecord};
use crate::embed::{embed_graph, write_embedding_file, EmbedError, HashEmbedder, Matrix};
use crate::llm::ScriptRule;
use crate::pipeline::{MockScript, ScriptSection};

/// Relation text shared between every question's answer edge and its decoy
/// edges.
pub const SHARED_RELATION: &str = "target relation link";

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid synth config: {0}")]
    BadConfig(String),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Embed(#[from] EmbedError),
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone)]
pub struct SynthConfig {
    pub out_dir: PathBuf,
    pub name: String,
    pub questions: usize,
    pub nodes_per_graph: usize,
    pub hops: usize,
    pub dim: usize,
    pub seed: u64,
    /// Decoy edges sharing the answer relation text, placed before the true
    /// answer edge in id order. With `decoy_shared_edges >= k_edges`, ties
    /// keep the true answer edge out of the prized set, which is what makes
    /// the undecomposed question miss.
    pub decoy_shared_edges: usize,
    pub noise_edges: usize,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            out_dir: PathBuf::from("synth-out"),
            name: "synth".into(),
            questions: 6,
            nodes_per_graph: 20,
            hops: 2,
            dim: 256,
            seed: 7,
            decoy_shared_edges: 5,
            noise_edges: 6,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SynthOutput {
    pub dataset: PathBuf,
    pub node_emb: PathBuf,
    pub edge_emb: PathBuf,
    /// Script with decomposition, subquestion, and final-answer rules.
    pub mock_script: PathBuf,
    /// Same answer rules but no decomposition rule, so plans fall back to
    /// the undecomposed question.
    pub mock_script_no_decomposition: PathBuf,
}

fn entity_token(question: usize, hop: usize) -> String {
    format!("ent_q{question}_h{hop}")
}

fn question_text(question: usize) -> String {
    format!(
        "which entity does {} finally reach via {SHARED_RELATION} ?",
        entity_token(question, 0)
    )
}

fn subquestion_text(question: usize, hop: usize, hops: usize) -> String {
    let target = entity_token(question, hop);
    if hop == hops {
        format!("{target} : which entity is {target} linked via {SHARED_RELATION} ?")
    } else {
        let source = entity_token(question, hop - 1);
        format!(
            "{target} : which entity is {target} reached from {source} by relation_q{question}_h{hop} ?"
        )
    }
}

/// Builds one question's record.
///
/// Node layout: chain `0..=hops`, one satellite per chain node, then
/// vertex-disjoint decoy pairs hosting the shared-relation decoy edges,
/// then a separate pool for noise edges. Keeping the pools apart stops
/// noise edges from bridging two prized decoy edges into a cluster that
/// could outweigh the chain.
fn build_record(cfg: &SynthConfig, question: usize, rng: &mut ChaCha8Rng) -> DatasetRecord {
    let h = cfg.hops;
    let n = cfg.nodes_per_graph;
    let satellite_of = |j: usize| h + 1 + j;
    let shared_pool_start = 2 * (h + 1);
    let noise_pool_start = shared_pool_start + 2 * cfg.decoy_shared_edges;

    let mut nodes: Vec<String> = (0..=h).map(|j| entity_token(question, j)).collect();
    for j in 0..=h {
        // Satellite text repeats the chain token, so the satellite ranks
        // just below its chain node for queries naming that token.
        nodes.push(format!("{} sidefact_q{question}_s{j}", entity_token(question, j)));
    }
    for d in shared_pool_start..n {
        nodes.push(format!("decoy_q{question}_n{d}"));
    }

    let noise_range = noise_pool_start..n;
    let pick_noise_pair = |rng: &mut ChaCha8Rng| {
        let a = rng.random_range(noise_range.clone());
        let mut b = rng.random_range(noise_range.clone());
        while b == a {
            b = rng.random_range(noise_range.clone());
        }
        (a, b)
    };

    let mut edges: Vec<(usize, String, usize)> = Vec::new();
    // Shared-relation decoys first so they win id tie-breaks over the true
    // answer edge.
    for s in 0..cfg.decoy_shared_edges {
        let a = shared_pool_start + 2 * s;
        edges.push((a, SHARED_RELATION.to_string(), a + 1));
    }
    for j in 1..=h {
        let relation = if j == h {
            SHARED_RELATION.to_string()
        } else {
            format!("relation_q{question}_h{j}")
        };
        edges.push((j - 1, relation, j));
    }
    for j in 0..=h {
        edges.push((j, format!("satrel_q{question}_s{j}"), satellite_of(j)));
    }
    for k in 0..cfg.noise_edges {
        let (a, b) = pick_noise_pair(rng);
        edges.push((a, format!("noise_q{question}_e{k}"), b));
    }

    DatasetRecord {
        id: format!("synth-{question:03}"),
        question: question_text(question),
        nodes,
        edges,
        answers: vec![entity_token(question, h)],
    }
}

pub fn generate(cfg: &SynthConfig) -> Result<SynthOutput, SynthError> {
    if cfg.hops < 1 {
        return Err(SynthError::BadConfig("hops must be >= 1".into()));
    }
    let needed = 2 * (cfg.hops + 1) + 2 * cfg.decoy_shared_edges + 2;
    if cfg.nodes_per_graph < needed {
        return Err(SynthError::BadConfig(format!(
            "nodes_per_graph {} too small: {} hops and {} shared decoy edges need at least {needed} nodes",
            cfg.nodes_per_graph, cfg.hops, cfg.decoy_shared_edges
        )));
    }
    if cfg.questions == 0 {
        return Err(SynthError::BadConfig("questions must be >= 1".into()));
    }
    std::fs::create_dir_all(&cfg.out_dir).map_err(|source| SynthError::Io {
        path: cfg.out_dir.display().to_string(),
        source,
    })?;

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let records: Vec<DatasetRecord> =
        (0..cfg.questions).map(|q| build_record(cfg, q, &mut rng)).collect();

    // Embedding files aligned with the runtime mock embedder.
    let embedder = HashEmbedder::new(cfg.dim);
    let mut node_rows: Vec<Vec<f32>> = Vec::new();
    let mut edge_rows: Vec<Vec<f32>> = Vec::new();
    for record in &records {
        let graph = record.to_graph()?;
        let (nodes, edges) = embed_graph(&graph, &embedder, cfg.dim)?;
        for i in 0..nodes.rows() {
            node_rows.push(nodes.row(i).to_vec());
        }
        for i in 0..edges.rows() {
            edge_rows.push(edges.row(i).to_vec());
        }
    }

    // Scripted responses: decomposition plans, per-hop answers, final
    // answers.
    let mut decomp_rules = Vec::new();
    let mut sub_rules = Vec::new();
    let mut final_rules = Vec::new();
    for (q, record) in records.iter().enumerate() {
        let subquestions: Vec<String> =
            (1..=cfg.hops).map(|j| subquestion_text(q, j, cfg.hops)).collect();
        decomp_rules.push(ScriptRule {
            contains: record.question.clone(),
            response: serde_json::to_string(&subquestions).expect("string array serializes"),
        });
        for (j, subq) in subquestions.iter().enumerate() {
            sub_rules.push(ScriptRule {
                contains: subq.clone(),
                response: entity_token(q, j + 1),
            });
        }
        final_rules.push(ScriptRule {
            contains: record.question.clone(),
            response: entity_token(q, cfg.hops),
        });
    }
    let full_script = MockScript {
        decomposer: ScriptSection { rules: decomp_rules, default_response: "not json".into() },
        sub_answerer: ScriptSection { rules: sub_rules.clone(), default_response: "unknown".into() },
        final_answerer: ScriptSection {
            rules: final_rules.clone(),
            default_response: "unknown".into(),
        },
    };
    let nodecomp_script = MockScript {
        decomposer: ScriptSection { rules: Vec::new(), default_response: "not json".into() },
        sub_answerer: ScriptSection { rules: sub_rules, default_response: "unknown".into() },
        final_answerer: ScriptSection { rules: final_rules, default_response: "unknown".into() },
    };

    let dataset = cfg.out_dir.join(format!("{}.jsonl", cfg.name));
    let node_emb = cfg.out_dir.join(format!("{}.nodes.emb", cfg.name));
    let edge_emb = cfg.out_dir.join(format!("{}.edges.emb", cfg.name));
    let mock_script = cfg.out_dir.join(format!("{}.mock.json", cfg.name));
    let mock_script_no_decomposition =
        cfg.out_dir.join(format!("{}.mock_nodecomp.json", cfg.name));

    save_dataset(&dataset, &records)?;
    write_embedding_file(&node_emb, &Matrix::from_rows(node_rows, cfg.dim)?)?;
    write_embedding_file(&edge_emb, &Matrix::from_rows(edge_rows, cfg.dim)?)?;
    write_script(&mock_script, &full_script)?;
    write_script(&mock_script_no_decomposition, &nodecomp_script)?;

    Ok(SynthOutput { dataset, node_emb, edge_emb, mock_script, mock_script_no_decomposition })
}

fn write_script(path: &Path, script: &MockScript) -> Result<(), SynthError> {
    let body = serde_json::to_string_pretty(script).expect("script serialization cannot fail");
    std::fs::write(path, body + "\n")
        .map_err(|source| SynthError::Io { path: path.display().to_string(), source })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::load_dataset;
    use crate::embed::read_embedding_file;

    #[test]
    fn generation_is_deterministic() {
        let dir = tempfile::tempdir().unwrap();
        let cfg_a = SynthConfig {
            out_dir: dir.path().join("a"),
            questions: 3,
            ..Default::default()
        };
        let cfg_b = SynthConfig { out_dir: dir.path().join("b"), ..cfg_a.clone() };
        let out_a = generate(&cfg_a).unwrap();
        let out_b = generate(&cfg_b).unwrap();
        assert_eq!(
            std::fs::read(&out_a.dataset).unwrap(),
            std::fs::read(&out_b.dataset).unwrap()
        );
        assert_eq!(
            std::fs::read(&out_a.node_emb).unwrap(),
            std::fs::read(&out_b.node_emb).unwrap()
        );
        assert_eq!(
            std::fs::read(&out_a.mock_script).unwrap(),
            std::fs::read(&out_b.mock_script).unwrap()
        );
    }

    #[test]
    fn generated_shapes_line_up() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = SynthConfig {
            out_dir: dir.path().to_path_buf(),
            questions: 4,
            dim: 64,
            ..Default::default()
        };
        let out = generate(&cfg).unwrap();
        let records = load_dataset(&out.dataset).unwrap();
        assert_eq!(records.len(), 4);
        let total_nodes: usize = records.iter().map(|r| r.nodes.len()).sum();
        let total_edges: usize = records.iter().map(|r| r.edges.len()).sum();
        let node_m = read_embedding_file(&out.node_emb).unwrap();
        let edge_m = read_embedding_file(&out.edge_emb).unwrap();
        assert_eq!(node_m.rows(), total_nodes);
        assert_eq!(edge_m.rows(), total_edges);
        assert_eq!(node_m.dim(), 64);

        for (q, record) in records.iter().enumerate() {
            let graph = record.to_graph().unwrap();
            assert_eq!(graph.num_nodes(), cfg.nodes_per_graph);
            // The answer is the last chain node.
            assert_eq!(record.answers, vec![format!("ent_q{q}_h2")]);
            // Decoy shared edges come before the true answer edge, so the
            // true edge loses every id tie-break.
            let shared: Vec<usize> = record
                .edges
                .iter()
                .enumerate()
                .filter(|(_, (_, r, _))| r == SHARED_RELATION)
                .map(|(i, _)| i)
                .collect();
            assert_eq!(shared.len(), cfg.decoy_shared_edges + 1);
            let true_edge = *shared.last().unwrap();
            assert!(shared[..shared.len() - 1].iter().all(|&i| i < true_edge));
            let (src, _, dst) = record.edges[true_edge];
            assert_eq!((src, dst), (1, 2));
        }
    }

    #[test]
    fn rejects_degenerate_configs() {
        let dir = tempfile::tempdir().unwrap();
        let bad = SynthConfig {
            out_dir: dir.path().to_path_buf(),
            nodes_per_graph: 3,
            ..Default::default()
        };
        assert!(matches!(generate(&bad), Err(SynthError::BadConfig(_))));
    }
}
