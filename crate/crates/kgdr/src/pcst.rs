//! Prize-collecting Steiner tree solvers over node-prize instances.
//!
//! [`solve`] runs unrooted Goemans-Williamson moat growing followed by a
//! strong-pruning pass and returns a single tree approximately maximizing
//! collected prize minus edge cost. [`solve_exact`] enumerates all node
//! subsets (small instances only) and serves as the independent oracle.
//!
//! Instances are undirected multigraphs. Edge prizes do not appear here;
//! callers fold them in beforehand via the virtual-node transformation
//! (see the retrieval module).

use thiserror::Error;

const EPS: f64 = 1e-9;

/// Exact enumeration refuses instances above this many nodes.
pub const EXACT_NODE_LIMIT: usize = 15;

#[derive(Debug, Error)]
pub enum PcstError {
    #[error("instance has no nodes")]
    EmptyInstance,
    #[error("prize for node {0} is negative or non-finite")]
    BadPrize(usize),
    #[error("edge {0} has non-positive or non-finite cost")]
    BadCost(usize),
    #[error("edge {edge} references missing node {node}")]
    BadEndpoint { edge: usize, node: usize },
    #[error("instance has {nodes} nodes, exact solver handles at most {limit}")]
    TooLarge { nodes: usize, limit: usize },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PcstEdge {
    pub u: usize,
    pub v: usize,
    pub cost: f64,
}

/// A node-prize PCST instance: non-negative node prizes, positive edge costs.
#[derive(Debug, Clone)]
pub struct PcstInstance {
    prizes: Vec<f64>,
    edges: Vec<PcstEdge>,
}

impl PcstInstance {
    pub fn new(prizes: Vec<f64>, edges: Vec<(usize, usize, f64)>) -> Result<Self, PcstError> {
        if prizes.is_empty() {
            return Err(PcstError::EmptyInstance);
        }
        for (i, p) in prizes.iter().enumerate() {
            if !p.is_finite() || *p < 0.0 {
                return Err(PcstError::BadPrize(i));
            }
        }
        let n = prizes.len();
        let mut built = Vec::with_capacity(edges.len());
        for (i, (u, v, cost)) in edges.into_iter().enumerate() {
            if !cost.is_finite() || cost <= 0.0 {
                return Err(PcstError::BadCost(i));
            }
            if u >= n {
                return Err(PcstError::BadEndpoint { edge: i, node: u });
            }
            if v >= n {
                return Err(PcstError::BadEndpoint { edge: i, node: v });
            }
            built.push(PcstEdge { u, v, cost });
        }
        Ok(Self { prizes, edges: built })
    }

    pub fn num_nodes(&self) -> usize {
        self.prizes.len()
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn prize(&self, node: usize) -> f64 {
        self.prizes[node]
    }

    pub fn edge(&self, idx: usize) -> PcstEdge {
        self.edges[idx]
    }
}

/// A solution in instance space: selected nodes, selected edge indices, and
/// the net value (sum of selected prizes minus sum of selected costs).
#[derive(Debug, Clone, PartialEq)]
pub struct PcstSolution {
    pub nodes: Vec<usize>,
    pub edges: Vec<usize>,
    pub value: f64,
}

/// Recomputes a solution's net value from scratch.
pub fn solution_value(inst: &PcstInstance, nodes: &[usize], edges: &[usize]) -> f64 {
    let prize: f64 = nodes.iter().map(|&v| inst.prizes[v]).sum();
    let cost: f64 = edges.iter().map(|&e| inst.edges[e].cost).sum();
    prize - cost
}

struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        Self { parent: (0..n).collect() }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    /// Unions two representatives; the lower index becomes the new root.
    fn union(&mut self, a: usize, b: usize) -> usize {
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        self.parent[hi] = lo;
        lo
    }
}

/// Goemans-Williamson with strong pruning, unrooted.
///
/// Moats grow uniformly around active clusters; an edge merges its two end
/// clusters once the moats crossing it add up to its cost, and a cluster
/// deactivates once its total moat spend equals its prize budget. The tight
/// merge edges form a forest; strong pruning then extracts the best
/// net-worth subtree. Forest-shaped instances skip the growth phase
/// entirely since strong pruning alone is exact on them.
///
/// If no subtree has positive value, the single highest-prize node is
/// returned (node 0 when all prizes are zero). Ties break toward lower
/// indices everywhere, so the solver is deterministic.
pub fn solve(inst: &PcstInstance) -> PcstSolution {
    if is_forest(inst) {
        let all_edges: Vec<usize> = (0..inst.num_edges()).collect();
        return best_pruned_subtree(inst, &all_edges);
    }

    let n = inst.num_nodes();
    let mut uf = UnionFind::new(n);
    let mut remaining: Vec<f64> = inst.prizes.clone();
    let mut active: Vec<bool> = inst.prizes.iter().map(|&p| p > EPS).collect();
    let mut acc: Vec<f64> = vec![0.0; inst.num_edges()];
    let mut merge_edges: Vec<usize> = Vec::new();

    #[derive(Clone, Copy)]
    enum Event {
        Merge(usize),
        Deactivate(usize),
    }

    loop {
        let mut best_dt = f64::INFINITY;
        let mut event: Option<Event> = None;
        for (idx, e) in inst.edges.iter().enumerate() {
            let (ru, rv) = (uf.find(e.u), uf.find(e.v));
            if ru == rv {
                continue;
            }
            let rate = f64::from(u8::from(active[ru]) + u8::from(active[rv]));
            if rate == 0.0 {
                continue;
            }
            let dt = (e.cost - acc[idx]).max(0.0) / rate;
            if dt < best_dt {
                best_dt = dt;
                event = Some(Event::Merge(idx));
            }
        }
        for v in 0..n {
            if uf.find(v) == v && active[v] {
                let dt = remaining[v].max(0.0);
                if dt < best_dt {
                    best_dt = dt;
                    event = Some(Event::Deactivate(v));
                }
            }
        }
        let Some(event) = event else { break };

        if best_dt > 0.0 {
            for (idx, e) in inst.edges.iter().enumerate() {
                let (ru, rv) = (uf.find(e.u), uf.find(e.v));
                if ru == rv {
                    continue;
                }
                let rate = f64::from(u8::from(active[ru]) + u8::from(active[rv]));
                if rate > 0.0 {
                    acc[idx] += rate * best_dt;
                }
            }
            for v in 0..n {
                if uf.find(v) == v && active[v] {
                    remaining[v] -= best_dt;
                }
            }
        }

        match event {
            Event::Merge(idx) => {
                let e = inst.edges[idx];
                let (ru, rv) = (uf.find(e.u), uf.find(e.v));
                let budget = remaining[ru] + remaining[rv];
                let root = uf.union(ru, rv);
                remaining[root] = budget;
                active[root] = budget > EPS;
                merge_edges.push(idx);
            }
            Event::Deactivate(v) => {
                active[v] = false;
            }
        }
    }

    best_pruned_subtree(inst, &merge_edges)
}

fn is_forest(inst: &PcstInstance) -> bool {
    let mut uf = UnionFind::new(inst.num_nodes());
    for e in &inst.edges {
        let (ru, rv) = (uf.find(e.u), uf.find(e.v));
        if ru == rv {
            return false;
        }
        uf.union(ru, rv);
    }
    true
}

/// Strong pruning: over the forest spanned by `tree_edges`, returns the
/// connected subtree maximizing net worth.
///
/// Rooting each component arbitrarily, every connected subtree has a unique
/// topmost node `v`, and the bottom-up recurrence
/// `nw(v) = prize(v) + sum over children c of max(0, nw(c) - cost(v, c))`
/// yields the best subtree topped at `v`, so a single pass finds the global
/// optimum of the forest.
fn best_pruned_subtree(inst: &PcstInstance, tree_edges: &[usize]) -> PcstSolution {
    let n = inst.num_nodes();
    let mut adj: Vec<Vec<(usize, usize)>> = vec![Vec::new(); n];
    for &idx in tree_edges {
        let e = inst.edges[idx];
        adj[e.u].push((e.v, idx));
        adj[e.v].push((e.u, idx));
    }

    let mut nw = vec![0.0f64; n];
    let mut parent: Vec<Option<(usize, usize)>> = vec![None; n];
    let mut visited = vec![false; n];
    let mut best_node = 0usize;
    let mut best_value = f64::NEG_INFINITY;

    for root in 0..n {
        if visited[root] {
            continue;
        }
        // Iterative DFS recording discovery order; children are processed
        // in reverse order afterwards.
        let mut order = Vec::new();
        let mut stack = vec![root];
        visited[root] = true;
        while let Some(v) = stack.pop() {
            order.push(v);
            for &(w, idx) in &adj[v] {
                if !visited[w] {
                    visited[w] = true;
                    parent[w] = Some((v, idx));
                    stack.push(w);
                }
            }
        }
        for &v in order.iter().rev() {
            let mut value = inst.prizes[v];
            for &(w, idx) in &adj[v] {
                if parent[w] == Some((v, idx)) {
                    let margin = nw[w] - inst.edges[idx].cost;
                    if margin > EPS {
                        value += margin;
                    }
                }
            }
            nw[v] = value;
        }
        for &v in &order {
            if nw[v] > best_value + EPS {
                best_value = nw[v];
                best_node = v;
            }
        }
    }

    if best_value <= EPS {
        // Nothing profitable anywhere: fall back to the single
        // highest-prize node, lowest index on ties.
        let mut pick = 0usize;
        for v in 1..n {
            if inst.prizes[v] > inst.prizes[pick] + EPS {
                pick = v;
            }
        }
        return PcstSolution { nodes: vec![pick], edges: vec![], value: inst.prizes[pick] };
    }

    // Reconstruct the subtree topped at best_node by descending through
    // children with positive margin.
    let mut nodes = vec![best_node];
    let mut edges = Vec::new();
    let mut stack = vec![best_node];
    while let Some(v) = stack.pop() {
        for &(w, idx) in &adj[v] {
            if parent[w] == Some((v, idx)) && nw[w] - inst.edges[idx].cost > EPS {
                nodes.push(w);
                edges.push(idx);
                stack.push(w);
            }
        }
    }
    nodes.sort_unstable();
    edges.sort_unstable();
    let value = solution_value(inst, &nodes, &edges);
    PcstSolution { nodes, edges, value }
}

/// Globally optimal PCST by exhaustive enumeration over node subsets with a
/// minimum spanning tree inside each connected subset.
///
/// Returns [`PcstError::TooLarge`] above [`EXACT_NODE_LIMIT`] nodes.
pub fn solve_exact(inst: &PcstInstance) -> Result<PcstSolution, PcstError> {
    let n = inst.num_nodes();
    if n > EXACT_NODE_LIMIT {
        return Err(PcstError::TooLarge { nodes: n, limit: EXACT_NODE_LIMIT });
    }

    // Cheapest edge per unordered node pair; lower index wins ties.
    let mut best_edge = vec![usize::MAX; n * n];
    for (idx, e) in inst.edges.iter().enumerate() {
        if e.u == e.v {
            continue;
        }
        let key = if e.u < e.v { e.u * n + e.v } else { e.v * n + e.u };
        let current = best_edge[key];
        if current == usize::MAX || e.cost < inst.edges[current].cost - EPS {
            best_edge[key] = idx;
        }
    }
    let pair_edge = |a: usize, b: usize| -> Option<usize> {
        let key = if a < b { a * n + b } else { b * n + a };
        let idx = best_edge[key];
        (idx != usize::MAX).then_some(idx)
    };

    let mut best: Option<PcstSolution> = None;
    let mut dist = vec![f64::INFINITY; n];
    let mut via = vec![usize::MAX; n];
    let mut in_tree = vec![false; n];

    for mask in 1u32..(1u32 << n) {
        let size = mask.count_ones() as usize;
        let members: Vec<usize> = (0..n).filter(|&v| mask & (1 << v) != 0).collect();
        let first = members[0];

        // Prim's algorithm restricted to the subset; bails out early if the
        // subset is not connected.
        for &v in &members {
            dist[v] = f64::INFINITY;
            via[v] = usize::MAX;
            in_tree[v] = false;
        }
        in_tree[first] = true;
        for &v in &members[1..] {
            if let Some(idx) = pair_edge(first, v) {
                dist[v] = inst.edges[idx].cost;
                via[v] = idx;
            }
        }
        let mut tree_cost = 0.0f64;
        let mut tree_edges = Vec::with_capacity(size.saturating_sub(1));
        let mut connected = true;
        for _ in 1..size {
            let mut pick = usize::MAX;
            for &v in &members {
                if !in_tree[v]
                    && dist[v].is_finite()
                    && (pick == usize::MAX || dist[v] < dist[pick] - EPS)
                {
                    pick = v;
                }
            }
            if pick == usize::MAX {
                connected = false;
                break;
            }
            in_tree[pick] = true;
            tree_cost += dist[pick];
            tree_edges.push(via[pick]);
            for &v in &members {
                if !in_tree[v] {
                    if let Some(idx) = pair_edge(pick, v) {
                        if inst.edges[idx].cost < dist[v] {
                            dist[v] = inst.edges[idx].cost;
                            via[v] = idx;
                        }
                    }
                }
            }
        }
        if !connected {
            continue;
        }
        let prize: f64 = members.iter().map(|&v| inst.prizes[v]).sum();
        let value = prize - tree_cost;
        if best.as_ref().is_none_or(|b| value > b.value + EPS) {
            tree_edges.sort_unstable();
            best = Some(PcstSolution { nodes: members, edges: tree_edges, value });
        }
    }

    Ok(best.expect("at least one singleton subset exists"))
}

/// Result of cross-checking the approximate solver against the exact one
/// on random instances.
#[derive(Debug, Clone, Default)]
pub struct OracleReport {
    pub instances: usize,
    pub tree_instances: usize,
    pub disconnected_solutions: usize,
    pub guarantee_violations: usize,
    pub tree_mismatches: usize,
    /// Smallest observed approx/exact value ratio over instances with a
    /// positive optimum.
    pub worst_ratio: f64,
}

impl OracleReport {
    pub fn passed(&self) -> bool {
        self.disconnected_solutions == 0
            && self.guarantee_violations == 0
            && self.tree_mismatches == 0
    }
}

/// Generates random instances (prizes uniform in `[0, prize_max]`, constant
/// edge cost) and checks the Goemans-Williamson output for connectivity,
/// the half-of-optimum value guarantee, and exact agreement on trees.
/// Alternates general graphs with pure tree instances.
pub fn oracle_check(
    instances: usize,
    max_nodes: usize,
    edge_cost: f64,
    prize_max: f64,
    seed: u64,
) -> Result<OracleReport, PcstError> {
    use rand::{Rng, SeedableRng};
    let max_nodes = max_nodes.min(EXACT_NODE_LIMIT);
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut report = OracleReport { worst_ratio: f64::INFINITY, ..Default::default() };

    for trial in 0..instances {
        let tree_only = trial % 2 == 1;
        let n = rng.random_range(1..=max_nodes);
        let prizes: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..prize_max)).collect();
        let mut edges = Vec::new();
        for v in 1..n {
            let u = rng.random_range(0..v);
            edges.push((u, v, edge_cost));
        }
        if !tree_only && n > 1 {
            for _ in 0..rng.random_range(0..=n) {
                let u = rng.random_range(0..n);
                let v = rng.random_range(0..n);
                if u != v {
                    edges.push((u, v, edge_cost));
                }
            }
        }
        let inst = PcstInstance::new(prizes, edges)?;
        let approx = solve(&inst);
        let exact = solve_exact(&inst)?;

        report.instances += 1;
        if tree_only {
            report.tree_instances += 1;
        }
        if !solution_is_connected(&inst, &approx) {
            report.disconnected_solutions += 1;
        }
        let value = solution_value(&inst, &approx.nodes, &approx.edges);
        if value < 0.5 * exact.value - 1e-9 {
            report.guarantee_violations += 1;
        }
        if tree_only && (value - exact.value).abs() > 1e-9 {
            report.tree_mismatches += 1;
        }
        if exact.value > 1e-9 {
            report.worst_ratio = report.worst_ratio.min(value / exact.value);
        }
    }
    Ok(report)
}

/// True when the selected edges connect all selected nodes into one
/// component (singletons are connected by definition).
pub fn solution_is_connected(inst: &PcstInstance, sol: &PcstSolution) -> bool {
    if sol.nodes.is_empty() {
        return false;
    }
    let mut uf = UnionFind::new(inst.num_nodes());
    for &idx in &sol.edges {
        let e = inst.edges[idx];
        let (ru, rv) = (uf.find(e.u), uf.find(e.v));
        if ru != rv {
            uf.union(ru, rv);
        }
    }
    let root = uf.find(sol.nodes[0]);
    sol.nodes.iter().all(|&v| uf.find(v) == root)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn inst(prizes: &[f64], edges: &[(usize, usize, f64)]) -> PcstInstance {
        PcstInstance::new(prizes.to_vec(), edges.to_vec()).unwrap()
    }

    #[test]
    fn validation_errors() {
        assert!(matches!(PcstInstance::new(vec![], vec![]), Err(PcstError::EmptyInstance)));
        assert!(matches!(
            PcstInstance::new(vec![-1.0], vec![]),
            Err(PcstError::BadPrize(0))
        ));
        assert!(matches!(
            PcstInstance::new(vec![1.0, 1.0], vec![(0, 1, 0.0)]),
            Err(PcstError::BadCost(0))
        ));
        assert!(matches!(
            PcstInstance::new(vec![1.0], vec![(0, 3, 1.0)]),
            Err(PcstError::BadEndpoint { edge: 0, node: 3 })
        ));
    }

    #[test]
    fn single_prized_node_stands_alone() {
        let i = inst(&[3.0, 0.0], &[(0, 1, 5.0)]);
        let sol = solve(&i);
        assert_eq!(sol.nodes, vec![0]);
        assert!(sol.edges.is_empty());
        assert!((sol.value - 3.0).abs() < 1e-9);
    }

    #[test]
    fn profitable_edge_joins_two_prizes() {
        // A(3) --0.5-- B(2): taking both is worth 4.5 against 3 for A alone.
        let i = inst(&[3.0, 2.0], &[(0, 1, 0.5)]);
        let sol = solve(&i);
        assert_eq!(sol.nodes, vec![0, 1]);
        assert_eq!(sol.edges, vec![0]);
        assert!((sol.value - 4.5).abs() < 1e-9);
        let exact = solve_exact(&i).unwrap();
        assert!((exact.value - 4.5).abs() < 1e-9);
    }

    #[test]
    fn cheap_prize_behind_expensive_edge_is_excluded() {
        // C(0.1) reachable only via cost 0.5 from the rest of the solution.
        let i = inst(&[3.0, 2.0, 0.1], &[(0, 1, 0.5), (1, 2, 0.5)]);
        let sol = solve(&i);
        assert_eq!(sol.nodes, vec![0, 1]);
        assert_eq!(sol.edges, vec![0]);
        let exact = solve_exact(&i).unwrap();
        assert!((sol.value - exact.value).abs() < 1e-9);
    }

    #[test]
    fn zero_prize_instance_returns_node_zero() {
        let i = inst(&[0.0], &[]);
        let sol = solve(&i);
        assert_eq!(sol.nodes, vec![0]);
        assert_eq!(sol.value, 0.0);
        let exact = solve_exact(&i).unwrap();
        assert_eq!(exact.value, 0.0);

        let i = inst(&[0.0, 0.0, 0.0], &[(0, 1, 1.0), (1, 2, 1.0), (2, 0, 1.0)]);
        let sol = solve(&i);
        assert_eq!(sol.nodes, vec![0]);
        assert_eq!(sol.value, 0.0);
    }

    #[test]
    fn expensive_complete_graph_keeps_single_node() {
        // All prizes 1, every edge costs 2: connecting anything loses value.
        let i = inst(
            &[1.0, 1.0, 1.0, 1.0],
            &[
                (0, 1, 2.0),
                (0, 2, 2.0),
                (0, 3, 2.0),
                (1, 2, 2.0),
                (1, 3, 2.0),
                (2, 3, 2.0),
            ],
        );
        let sol = solve(&i);
        assert_eq!(sol.nodes.len(), 1);
        assert!((sol.value - 1.0).abs() < 1e-9);
        let exact = solve_exact(&i).unwrap();
        assert!((exact.value - 1.0).abs() < 1e-9);
    }

    #[test]
    fn steiner_node_bridges_two_prizes() {
        // B has no prize but sits between A(4) and C(4) on cheap edges.
        let i = inst(&[4.0, 0.0, 4.0], &[(0, 1, 0.5), (1, 2, 0.5)]);
        let sol = solve(&i);
        assert_eq!(sol.nodes, vec![0, 1, 2]);
        assert_eq!(sol.edges, vec![0, 1]);
        assert!((sol.value - 7.0).abs() < 1e-9);
    }

    #[test]
    fn parallel_edges_use_the_cheaper_one() {
        let i = inst(&[2.0, 2.0], &[(0, 1, 3.0), (0, 1, 0.5)]);
        let sol = solve(&i);
        assert_eq!(sol.nodes, vec![0, 1]);
        assert_eq!(sol.edges, vec![1]);
        let exact = solve_exact(&i).unwrap();
        assert!((sol.value - exact.value).abs() < 1e-9);
        assert!((sol.value - 3.5).abs() < 1e-9);
    }

    #[test]
    fn exact_refuses_large_instances() {
        let prizes = vec![1.0; EXACT_NODE_LIMIT + 1];
        let i = PcstInstance::new(prizes, vec![]).unwrap();
        assert!(matches!(solve_exact(&i), Err(PcstError::TooLarge { .. })));
    }

    #[test]
    fn solver_is_deterministic() {
        let i = inst(
            &[1.0, 1.0, 1.0, 1.0],
            &[(0, 1, 1.0), (1, 2, 1.0), (2, 3, 1.0), (3, 0, 1.0)],
        );
        let a = solve(&i);
        let b = solve(&i);
        assert_eq!(a, b);
    }

    fn random_instance(rng: &mut ChaCha8Rng, tree_only: bool) -> PcstInstance {
        let n = rng.random_range(1..=10usize);
        let prizes: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..5.0)).collect();
        let mut edges = Vec::new();
        // Random spanning structure plus extra edges when not tree_only.
        for v in 1..n {
            let u = rng.random_range(0..v);
            edges.push((u, v, 0.5));
        }
        if !tree_only && n > 1 {
            for _ in 0..rng.random_range(0..=n) {
                let u = rng.random_range(0..n);
                let v = rng.random_range(0..n);
                if u != v {
                    edges.push((u, v, 0.5));
                }
            }
        }
        PcstInstance::new(prizes, edges).unwrap()
    }

    #[test]
    fn gw_matches_exact_on_random_trees() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..60 {
            let i = random_instance(&mut rng, true);
            let approx = solve(&i);
            let exact = solve_exact(&i).unwrap();
            assert!(
                (approx.value - exact.value).abs() < 1e-9,
                "tree instance should be solved exactly: {} vs {}",
                approx.value,
                exact.value
            );
            assert!(solution_is_connected(&i, &approx));
        }
    }

    #[test]
    fn gw_stays_within_guarantee_on_random_graphs() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..60 {
            let i = random_instance(&mut rng, false);
            let approx = solve(&i);
            let exact = solve_exact(&i).unwrap();
            assert!(solution_is_connected(&i, &approx));
            let recomputed = solution_value(&i, &approx.nodes, &approx.edges);
            assert!((recomputed - approx.value).abs() < 1e-9);
            assert!(
                approx.value >= 0.5 * exact.value - 1e-9,
                "value {} below half of optimum {}",
                approx.value,
                exact.value
            );
        }
    }
}
