//! Textual knowledge graphs: the immutable graph data model, subgraph
//! views, union merging, structural statistics, and deterministic
//! textualization for prompting.
//!
//! Graphs are directed in storage (`src -> dst`) but treated as undirected
//! for connectivity and density. Node and edge ids are dense, zero-based
//! indices into the construction order.

use std::borrow::Cow;
use std::collections::BTreeSet;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type NodeId = usize;
pub type EdgeId = usize;

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("edge {edge} references missing node {node}")]
    DanglingEndpoint { edge: EdgeId, node: NodeId },
    #[error("node {0} has empty text")]
    EmptyNodeText(NodeId),
    #[error("edge {0} has empty relation text")]
    EmptyRelationText(EdgeId),
    #[error("subgraph references unknown node {0}")]
    UnknownNode(NodeId),
    #[error("subgraph references unknown edge {0}")]
    UnknownEdge(EdgeId),
    #[error("edge {edge} endpoint {node} missing from subgraph node set")]
    EdgeNotClosed { edge: EdgeId, node: NodeId },
    #[error("subgraphs do not share the same parent graph")]
    ParentMismatch,
    #[error("cannot merge an empty list of subgraphs")]
    EmptyMerge,
}

/// A directed edge carrying a textual relation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Edge {
    pub src: NodeId,
    pub relation: String,
    pub dst: NodeId,
}

/// Immutable knowledge graph with textual node and edge attributes.
///
/// Node ids and edge ids are the indices of the vectors handed to
/// [`TextualGraph::new`], so they are dense, unique, and zero-based by
/// construction.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TextualGraph {
    node_texts: Vec<String>,
    edges: Vec<Edge>,
}

impl TextualGraph {
    /// Builds a graph, validating endpoint references and non-empty texts.
    pub fn new(
        node_texts: Vec<String>,
        edges: Vec<(NodeId, String, NodeId)>,
    ) -> Result<Self, GraphError> {
        for (id, text) in node_texts.iter().enumerate() {
            if text.is_empty() {
                return Err(GraphError::EmptyNodeText(id));
            }
        }
        let n = node_texts.len();
        let mut built = Vec::with_capacity(edges.len());
        for (id, (src, relation, dst)) in edges.into_iter().enumerate() {
            if relation.is_empty() {
                return Err(GraphError::EmptyRelationText(id));
            }
            if src >= n {
                return Err(GraphError::DanglingEndpoint { edge: id, node: src });
            }
            if dst >= n {
                return Err(GraphError::DanglingEndpoint { edge: id, node: dst });
            }
            built.push(Edge { src, relation, dst });
        }
        Ok(Self { node_texts, edges: built })
    }

    pub fn num_nodes(&self) -> usize {
        self.node_texts.len()
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    /// Text attribute of a node. Panics if `id` is out of range.
    pub fn node_text(&self, id: NodeId) -> &str {
        &self.node_texts[id]
    }

    /// Edge record. Panics if `id` is out of range.
    pub fn edge(&self, id: EdgeId) -> &Edge {
        &self.edges[id]
    }

    pub fn edges(&self) -> impl Iterator<Item = (EdgeId, &Edge)> {
        self.edges.iter().enumerate()
    }

    pub fn node_texts(&self) -> impl Iterator<Item = (NodeId, &str)> {
        self.node_texts.iter().enumerate().map(|(i, t)| (i, t.as_str()))
    }
}

/// A subgraph view over a shared parent [`TextualGraph`].
///
/// Invariant: every referenced edge has both endpoints in the node set
/// (edge-closure). Ids are kept in sorted sets so iteration order, and
/// everything derived from it, is deterministic.
#[derive(Debug, Clone)]
pub struct Subgraph {
    parent: Arc<TextualGraph>,
    node_ids: BTreeSet<NodeId>,
    edge_ids: BTreeSet<EdgeId>,
}

impl Subgraph {
    pub fn new(
        parent: Arc<TextualGraph>,
        nodes: impl IntoIterator<Item = NodeId>,
        edges: impl IntoIterator<Item = EdgeId>,
    ) -> Result<Self, GraphError> {
        let node_ids: BTreeSet<NodeId> = nodes.into_iter().collect();
        let edge_ids: BTreeSet<EdgeId> = edges.into_iter().collect();
        for &id in &node_ids {
            if id >= parent.num_nodes() {
                return Err(GraphError::UnknownNode(id));
            }
        }
        for &id in &edge_ids {
            if id >= parent.num_edges() {
                return Err(GraphError::UnknownEdge(id));
            }
            let e = parent.edge(id);
            for endpoint in [e.src, e.dst] {
                if !node_ids.contains(&endpoint) {
                    return Err(GraphError::EdgeNotClosed { edge: id, node: endpoint });
                }
            }
        }
        Ok(Self { parent, node_ids, edge_ids })
    }

    pub fn empty(parent: Arc<TextualGraph>) -> Self {
        Self { parent, node_ids: BTreeSet::new(), edge_ids: BTreeSet::new() }
    }

    pub fn parent(&self) -> &Arc<TextualGraph> {
        &self.parent
    }

    pub fn node_ids(&self) -> &BTreeSet<NodeId> {
        &self.node_ids
    }

    pub fn edge_ids(&self) -> &BTreeSet<EdgeId> {
        &self.edge_ids
    }

    pub fn num_nodes(&self) -> usize {
        self.node_ids.len()
    }

    pub fn num_edges(&self) -> usize {
        self.edge_ids.len()
    }

    pub fn contains_node(&self, id: NodeId) -> bool {
        self.node_ids.contains(&id)
    }

    pub fn same_parent(&self, other: &Subgraph) -> bool {
        Arc::ptr_eq(&self.parent, &other.parent)
    }

    /// FNV-1a hash over the sorted node and edge id sets. Two subgraphs of
    /// the same parent hash equal iff their id sets are equal.
    pub fn content_hash(&self) -> u64 {
        const OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
        const PRIME: u64 = 0x0000_0100_0000_01b3;
        let mut h = OFFSET;
        let mut eat = |byte: u8| {
            h ^= u64::from(byte);
            h = h.wrapping_mul(PRIME);
        };
        eat(b'N');
        for &id in &self.node_ids {
            for b in (id as u64).to_le_bytes() {
                eat(b);
            }
        }
        eat(b'E');
        for &id in &self.edge_ids {
            for b in (id as u64).to_le_bytes() {
                eat(b);
            }
        }
        h
    }
}

impl PartialEq for Subgraph {
    fn eq(&self, other: &Self) -> bool {
        self.same_parent(other)
            && self.node_ids == other.node_ids
            && self.edge_ids == other.edge_ids
    }
}

impl Eq for Subgraph {}

/// Structural statistics of a subgraph.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GraphStats {
    pub num_nodes: usize,
    pub num_edges: usize,
    pub density: f64,
    pub num_components: usize,
    pub is_connected: bool,
}

/// Union of node and edge sets across subgraphs of one parent.
///
/// Connectivity of the result is not enforced; the union of connected
/// subgraphs may be disconnected.
pub fn merge_subgraphs(parts: &[Subgraph]) -> Result<Subgraph, GraphError> {
    let first = parts.first().ok_or(GraphError::EmptyMerge)?;
    let mut node_ids = first.node_ids.clone();
    let mut edge_ids = first.edge_ids.clone();
    for part in &parts[1..] {
        if !first.same_parent(part) {
            return Err(GraphError::ParentMismatch);
        }
        node_ids.extend(part.node_ids.iter().copied());
        edge_ids.extend(part.edge_ids.iter().copied());
    }
    Ok(Subgraph { parent: Arc::clone(&first.parent), node_ids, edge_ids })
}

/// Computes node/edge counts, undirected density, and connected components.
///
/// Density is `2*|E| / (|V| * (|V|-1))`, defined as 0 for graphs with at
/// most one node. Components are counted treating every edge as undirected.
pub fn compute_stats(g: &Subgraph) -> GraphStats {
    let num_nodes = g.num_nodes();
    let num_edges = g.num_edges();
    let density = if num_nodes <= 1 {
        0.0
    } else {
        2.0 * num_edges as f64 / (num_nodes as f64 * (num_nodes as f64 - 1.0))
    };

    // Union-find over the subgraph's nodes, remapped to dense indices.
    let index_of: std::collections::BTreeMap<NodeId, usize> =
        g.node_ids.iter().copied().zip(0..).collect();
    let mut parent: Vec<usize> = (0..num_nodes).collect();
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    for &eid in &g.edge_ids {
        let e = g.parent.edge(eid);
        let (a, b) = (index_of[&e.src], index_of[&e.dst]);
        let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
        if ra != rb {
            parent[ra] = rb;
        }
    }
    let mut roots = BTreeSet::new();
    for i in 0..num_nodes {
        roots.insert(find(&mut parent, i));
    }
    let num_components = roots.len();

    GraphStats {
        num_nodes,
        num_edges,
        density,
        num_components,
        is_connected: num_nodes >= 1 && num_components == 1,
    }
}

fn csv_field(s: &str) -> Cow<'_, str> {
    if s.contains(',') || s.contains('"') || s.contains('\n') {
        Cow::Owned(format!("\"{}\"", s.replace('"', "\"\"")))
    } else {
        Cow::Borrowed(s)
    }
}

/// Renders a subgraph as two CSV-style tables: nodes first, then edges.
///
/// Rows are sorted ascending by id and fields with embedded commas or
/// quotes are quoted, so equal subgraphs always produce byte-identical
/// output.
pub fn textualize(g: &Subgraph) -> String {
    let mut out = String::new();
    out.push_str("node_id,node_attr\n");
    for &id in &g.node_ids {
        out.push_str(&format!("{},{}\n", id, csv_field(g.parent.node_text(id))));
    }
    out.push('\n');
    out.push_str("src,edge_attr,dst\n");
    for &id in &g.edge_ids {
        let e = g.parent.edge(id);
        out.push_str(&format!(
            "{},{},{}\n",
            csv_field(g.parent.node_text(e.src)),
            csv_field(&e.relation),
            csv_field(g.parent.node_text(e.dst)),
        ));
    }
    out
}
