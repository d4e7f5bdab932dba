//! Problem-graph partitioning, overlap expansion and primal-dual index maps.
//!
//! Nodes are 0-based `usize` indices throughout this module.

use std::collections::VecDeque;
use std::fmt::Write as _;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PartitionError {
    #[error("cannot split {nodes} nodes into {parts} parts")]
    TooManyParts { parts: usize, nodes: usize },
    #[error("part count must be at least 1")]
    ZeroParts,
}

/// Undirected simple graph with sorted adjacency lists.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Graph {
    adj: Vec<Vec<usize>>,
}

impl Graph {
    pub fn new(num_nodes: usize) -> Self {
        Graph {
            adj: vec![Vec::new(); num_nodes],
        }
    }

    /// Builds a graph from an edge list; duplicate edges collapse, self-loops are dropped.
    pub fn from_edges(num_nodes: usize, edges: &[(usize, usize)]) -> Self {
        let mut g = Graph::new(num_nodes);
        for &(i, j) in edges {
            g.add_edge(i, j);
        }
        g
    }

    /// Returns false when the edge already exists or is a self-loop.
    pub fn add_edge(&mut self, i: usize, j: usize) -> bool {
        if i == j || self.adj[i].binary_search(&j).is_ok() {
            return false;
        }
        for (a, b) in [(i, j), (j, i)] {
            let pos = self.adj[a].binary_search(&b).unwrap_err();
            self.adj[a].insert(pos, b);
        }
        true
    }

    pub fn num_nodes(&self) -> usize {
        self.adj.len()
    }

    pub fn num_edges(&self) -> usize {
        self.adj.iter().map(Vec::len).sum::<usize>() / 2
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.adj[i]
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.adj[i].binary_search(&j).is_ok()
    }

    /// BFS hop distances from `src`; `usize::MAX` marks unreachable nodes.
    pub fn distances(&self, src: usize) -> Vec<usize> {
        let mut dist = vec![usize::MAX; self.num_nodes()];
        let mut queue = VecDeque::new();
        dist[src] = 0;
        queue.push_back(src);
        while let Some(u) = queue.pop_front() {
            for &v in &self.adj[u] {
                if dist[v] == usize::MAX {
                    dist[v] = dist[u] + 1;
                    queue.push_back(v);
                }
            }
        }
        dist
    }

    /// Largest finite eccentricity over all nodes (max over components).
    pub fn diameter(&self) -> usize {
        (0..self.num_nodes())
            .map(|s| {
                self.distances(s)
                    .into_iter()
                    .filter(|&d| d != usize::MAX)
                    .max()
                    .unwrap_or(0)
            })
            .max()
            .unwrap_or(0)
    }

    pub fn is_connected(&self) -> bool {
        self.num_nodes() == 0 || self.distances(0).iter().all(|&d| d != usize::MAX)
    }

    /// True when the graph is a single cycle through all nodes.
    pub fn is_cycle(&self) -> bool {
        self.num_nodes() >= 3 && self.adj.iter().all(|a| a.len() == 2) && self.is_connected()
    }
}

/// Splits the nodes into `k` balanced parts by greedy graph growing.
///
/// Parts are filled one after another to sizes `⌈n/k⌉` or `⌊n/k⌋` by BFS
/// from a seed. The first seed is node 0; every later seed is the
/// lowest-numbered unassigned node adjacent to an assigned node, or the
/// lowest-numbered unassigned node if there is none. Each part is sorted.
pub fn partition_graph(g: &Graph, k: usize) -> Result<Vec<Vec<usize>>, PartitionError> {
    let n = g.num_nodes();
    if k == 0 {
        return Err(PartitionError::ZeroParts);
    }
    if k > n {
        return Err(PartitionError::TooManyParts { parts: k, nodes: n });
    }
    let mut owner = vec![usize::MAX; n];
    let mut parts = Vec::with_capacity(k);
    let (base, extra) = (n / k, n % k);
    for part in 0..k {
        let target = base + usize::from(part < extra);
        let mut members = Vec::with_capacity(target);
        let mut queue = VecDeque::new();
        while members.len() < target {
            let u = match queue.pop_front() {
                Some(u) => u,
                None => {
                    let seed = next_seed(g, &owner);
                    owner[seed] = part;
                    members.push(seed);
                    queue.push_back(seed);
                    continue;
                }
            };
            for &v in g.neighbors(u) {
                if members.len() == target {
                    break;
                }
                if owner[v] == usize::MAX {
                    owner[v] = part;
                    members.push(v);
                    queue.push_back(v);
                }
            }
        }
        members.sort_unstable();
        parts.push(members);
    }
    Ok(parts)
}

fn next_seed(g: &Graph, owner: &[usize]) -> usize {
    let free = |v: usize| owner[v] == usize::MAX;
    (0..g.num_nodes())
        .find(|&v| free(v) && g.neighbors(v).iter().any(|&w| !free(w)))
        .or_else(|| (0..g.num_nodes()).find(|&v| free(v)))
        .expect("seed requested with no unassigned node")
}

/// ω-level BFS closure of `nodes`, sorted.
pub fn expand(g: &Graph, nodes: &[usize], omega: usize) -> Vec<usize> {
    let mut inside = vec![false; g.num_nodes()];
    let mut frontier: Vec<usize> = Vec::new();
    for &v in nodes {
        if !inside[v] {
            inside[v] = true;
            frontier.push(v);
        }
    }
    for _ in 0..omega {
        let mut next = Vec::new();
        for &u in &frontier {
            for &v in g.neighbors(u) {
                if !inside[v] {
                    inside[v] = true;
                    next.push(v);
                }
            }
        }
        if next.is_empty() {
            break;
        }
        frontier = next;
    }
    (0..g.num_nodes()).filter(|&v| inside[v]).collect()
}

/// Smallest ω with `|expand(nodes, ω)| ≥ ⌈1.5·|nodes|⌉`, capped at the
/// diameter and at the level where the expansion stops growing.
pub fn auto_omega(g: &Graph, nodes: &[usize], diameter: usize) -> usize {
    let want = (3 * nodes.len()).div_ceil(2);
    let mut prev = nodes.len();
    for omega in 0..=diameter {
        let size = expand(g, nodes, omega).len();
        if size >= want || (omega > 0 && size == prev) {
            return omega;
        }
        prev = size;
    }
    diameter
}

/// One subdomain of a [`SubdomainMap`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Subdomain {
    pub omega: usize,
    /// `V_k`, sorted.
    pub nodes: Vec<usize>,
    /// `V_k^ω`, sorted.
    pub expanded: Vec<usize>,
    /// `W_k`, sorted primal-dual indices.
    pub owned: Vec<usize>,
    /// `W_k^ω`, sorted primal-dual indices.
    pub overlap: Vec<usize>,
    /// Position of each `owned[i]` inside `overlap`.
    pub owned_in_overlap: Vec<usize>,
}

/// Partition `{V_k}`, expansions `{V_k^ω}` and induced index sets.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SubdomainMap {
    pub subdomains: Vec<Subdomain>,
    /// Total primal-dual dimension.
    pub dim: usize,
    pub diameter: usize,
}

impl SubdomainMap {
    pub fn k(&self) -> usize {
        self.subdomains.len()
    }

    /// Builds the map with per-subdomain ω; `node_indices[i]` is `U_i`.
    pub fn build(
        g: &Graph,
        node_indices: &[Vec<usize>],
        parts: &[Vec<usize>],
        omegas: &[usize],
    ) -> SubdomainMap {
        let expansions: Vec<Vec<usize>> = parts
            .iter()
            .zip(omegas)
            .map(|(p, &w)| expand(g, p, w))
            .collect();
        let mut map = build_index_maps(node_indices, parts, &expansions);
        for (s, &w) in map.subdomains.iter_mut().zip(omegas) {
            s.omega = w;
        }
        map.diameter = g.diameter();
        map
    }

    /// Builds the map choosing each ω automatically.
    pub fn build_auto(g: &Graph, node_indices: &[Vec<usize>], parts: &[Vec<usize>]) -> SubdomainMap {
        let diameter = g.diameter();
        let omegas: Vec<usize> = parts.iter().map(|p| auto_omega(g, p, diameter)).collect();
        Self::build(g, node_indices, parts, &omegas)
    }

    pub fn omegas(&self) -> Vec<usize> {
        self.subdomains.iter().map(|s| s.omega).collect()
    }

    /// True when every subdomain already covers the whole graph.
    pub fn is_saturated(&self, g: &Graph) -> bool {
        self.subdomains
            .iter()
            .all(|s| s.omega >= self.diameter || s.expanded.len() == g.num_nodes())
    }

    /// Increments every ω, capped at the diameter.
    pub fn grow(&self, g: &Graph, node_indices: &[Vec<usize>]) -> SubdomainMap {
        let parts: Vec<Vec<usize>> = self.subdomains.iter().map(|s| s.nodes.clone()).collect();
        let omegas: Vec<usize> = self
            .subdomains
            .iter()
            .map(|s| (s.omega + 1).min(self.diameter))
            .collect();
        Self::build(g, node_indices, &parts, &omegas)
    }

    /// Text dump: one line per subdomain with 1-based node ids.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        let list = |v: &[usize]| {
            v.iter()
                .map(|i| (i + 1).to_string())
                .collect::<Vec<_>>()
                .join(",")
        };
        for (k, s) in self.subdomains.iter().enumerate() {
            let _ = writeln!(
                out,
                "subdomain {} omega {} |W| {} |W_omega| {} nodes {} expanded {}",
                k + 1,
                s.omega,
                s.owned.len(),
                s.overlap.len(),
                list(&s.nodes),
                list(&s.expanded)
            );
        }
        out
    }
}

/// Index sets `W_k = ⊔_{i∈V_k} U_i` and `W_k^ω = ⊔_{i∈V_k^ω} U_i`.
pub fn build_index_maps(
    node_indices: &[Vec<usize>],
    parts: &[Vec<usize>],
    expansions: &[Vec<usize>],
) -> SubdomainMap {
    let gather = |nodes: &[usize]| {
        let mut idx: Vec<usize> = nodes
            .iter()
            .flat_map(|&i| node_indices[i].iter().copied())
            .collect();
        idx.sort_unstable();
        idx
    };
    let subdomains = parts
        .iter()
        .zip(expansions)
        .map(|(p, e)| {
            let mut nodes = p.clone();
            nodes.sort_unstable();
            let owned = gather(&nodes);
            let overlap = gather(e);
            let owned_in_overlap = owned
                .iter()
                .map(|i| overlap.binary_search(i).expect("V_k ⊆ V_k^ω"))
                .collect();
            Subdomain {
                omega: 0,
                nodes,
                expanded: e.clone(),
                owned,
                overlap,
                owned_in_overlap,
            }
        })
        .collect();
    SubdomainMap {
        subdomains,
        dim: node_indices.iter().map(Vec::len).sum(),
        diameter: 0,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cycle(n: usize) -> Graph {
        let edges: Vec<(usize, usize)> = (0..n).map(|i| (i, (i + 1) % n)).collect();
        Graph::from_edges(n, &edges)
    }

    fn path(n: usize) -> Graph {
        let edges: Vec<(usize, usize)> = (0..n - 1).map(|i| (i, i + 1)).collect();
        Graph::from_edges(n, &edges)
    }

    fn is_arc(n: usize, part: &[usize]) -> bool {
        // contiguous modulo n: exactly one member whose predecessor is outside
        let inside = |v: usize| part.contains(&v);
        part.iter().filter(|&&v| !inside((v + n - 1) % n)).count() == 1
    }

    #[test]
    fn cycle_24_into_four_arcs() {
        let g = cycle(24);
        let parts = partition_graph(&g, 4).unwrap();
        assert_eq!(parts.len(), 4);
        for p in &parts {
            assert_eq!(p.len(), 6);
            assert!(is_arc(24, p), "{p:?}");
        }
    }

    #[test]
    fn single_part_is_everything() {
        let g = cycle(9);
        assert_eq!(partition_graph(&g, 1).unwrap(), vec![(0..9).collect::<Vec<_>>()]);
    }

    #[test]
    fn path_of_seven_in_two() {
        let parts = partition_graph(&path(7), 2).unwrap();
        assert_eq!(parts, vec![vec![0, 1, 2, 3], vec![4, 5, 6]]);
    }

    #[test]
    fn too_many_parts() {
        assert_eq!(
            partition_graph(&path(3), 4),
            Err(PartitionError::TooManyParts { parts: 4, nodes: 3 })
        );
        assert_eq!(partition_graph(&path(3), 0), Err(PartitionError::ZeroParts));
    }

    #[test]
    fn disconnected_graph_is_covered() {
        let g = Graph::from_edges(6, &[(0, 1), (2, 3), (4, 5)]);
        let parts = partition_graph(&g, 4).unwrap();
        let mut all: Vec<usize> = parts.concat();
        all.sort_unstable();
        assert_eq!(all, (0..6).collect::<Vec<_>>());
    }

    #[test]
    fn expansion_levels() {
        let g = cycle(24);
        let v1: Vec<usize> = (0..6).collect();
        let mut want: Vec<usize> = (0..7).collect();
        want.push(23);
        assert_eq!(expand(&g, &v1, 1), want);
        assert_eq!(expand(&g, &v1, 0), v1);
        assert_eq!(expand(&g, &v1, g.diameter()), (0..24).collect::<Vec<_>>());
        assert_eq!(g.diameter(), 12);
    }

    #[test]
    fn auto_omega_targets_half_again() {
        let g = cycle(24);
        // ⌈1.5·6⌉ = 9 needs ω = 2 (one level adds two nodes)
        assert_eq!(auto_omega(&g, &(0..6).collect::<Vec<_>>(), 12), 2);
        // saturation stops early on a tiny graph
        let p = path(2);
        assert_eq!(auto_omega(&p, &[0, 1], p.diameter()), 1);
    }

    #[test]
    fn index_maps_two_nodes() {
        let u = vec![vec![0, 1, 2], vec![3, 4]];
        let map = build_index_maps(&u, &[vec![0], vec![1]], &[vec![0], vec![1]]);
        assert_eq!(map.subdomains[0].owned, vec![0, 1, 2]);
        assert_eq!(map.subdomains[1].owned, vec![3, 4]);
        assert_eq!(map.dim, 5);
    }

    #[test]
    fn grow_caps_at_diameter() {
        let g = path(4);
        let u: Vec<Vec<usize>> = (0..4).map(|i| vec![i]).collect();
        let parts = partition_graph(&g, 2).unwrap();
        let mut map = SubdomainMap::build(&g, &u, &parts, &[0, 0]);
        for _ in 0..10 {
            map = map.grow(&g, &u);
        }
        assert_eq!(map.omegas(), vec![3, 3]);
        assert!(map.is_saturated(&g));
        assert!(map.subdomains.iter().all(|s| s.overlap == vec![0, 1, 2, 3]));
    }

    #[test]
    fn dump_is_one_based() {
        let g = path(2);
        let map = SubdomainMap::build(&g, &[vec![0], vec![1]], &[vec![0], vec![1]], &[1, 0]);
        let text = map.dump();
        assert!(text.starts_with("subdomain 1 omega 1 |W| 1 |W_omega| 2 nodes 1 expanded 1,2"));
    }
}
