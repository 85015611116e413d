//! Undirected simple graph, perturbation deltas, and private-pair bookkeeping.
//!
//! Graphs are immutable snapshots: [`Graph::apply_flip`] returns a new value,
//! so read-only sharing across workers is safe.

use std::collections::HashSet;
use std::hash::{Hash, Hasher};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Unordered node pair stored canonically with `i < j`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodePair {
    i: usize,
    j: usize,
}

impl NodePair {
    pub fn new(a: usize, b: usize) -> Result<Self> {
        if a == b {
            return Err(Error::InvalidPair { i: a, j: b });
        }
        Ok(Self {
            i: a.min(b),
            j: a.max(b),
        })
    }

    pub fn i(&self) -> usize {
        self.i
    }

    pub fn j(&self) -> usize {
        self.j
    }
}

/// A single link flip: add (`delta = +1`) or remove (`delta = -1`) a pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct FlipDelta {
    pub pair: NodePair,
    pub delta: i8,
}

impl FlipDelta {
    pub fn add(pair: NodePair) -> Self {
        Self { pair, delta: 1 }
    }

    pub fn remove(pair: NodePair) -> Self {
        Self { pair, delta: -1 }
    }

    /// Flip matching the current link status of `graph`.
    pub fn toggling(graph: &Graph, pair: NodePair) -> Self {
        if graph.has_edge(pair.i(), pair.j()) {
            Self::remove(pair)
        } else {
            Self::add(pair)
        }
    }

    pub fn inverse(&self) -> Self {
        Self {
            pair: self.pair,
            delta: -self.delta,
        }
    }
}

/// Sparse symmetric 0/1 adjacency with cached volume.
///
/// Neighbor lists are kept sorted; edge membership is a binary search.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Graph {
    adj: Vec<Vec<usize>>,
    volume: usize,
}

impl Graph {
    /// Build from deduplicated undirected edges over `n` nodes.
    /// Self-loops and duplicates are dropped.
    pub fn from_edges(n: usize, edges: &[(usize, usize)]) -> Result<Self> {
        if n == 0 {
            return Err(Error::EmptyGraph);
        }
        let mut adj = vec![Vec::new(); n];
        let mut seen = HashSet::new();
        for &(a, b) in edges {
            let m = a.max(b);
            if m >= n {
                return Err(Error::IndexOutOfRange { index: m, nodes: n });
            }
            if a == b {
                continue;
            }
            let pair = (a.min(b), a.max(b));
            if seen.insert(pair) {
                adj[a].push(b);
                adj[b].push(a);
            }
        }
        for list in &mut adj {
            list.sort_unstable();
        }
        let volume = adj.iter().map(Vec::len).sum();
        Ok(Self { adj, volume })
    }

    pub fn node_count(&self) -> usize {
        self.adj.len()
    }

    pub fn edge_count(&self) -> usize {
        self.volume / 2
    }

    /// Sum of degrees. Always even.
    pub fn volume(&self) -> usize {
        self.volume
    }

    pub fn degree(&self, i: usize) -> usize {
        self.adj[i].len()
    }

    pub fn degrees(&self) -> Vec<usize> {
        self.adj.iter().map(Vec::len).collect()
    }

    /// Smallest degree among nodes with at least one link.
    pub fn min_positive_degree(&self) -> Option<usize> {
        self.adj.iter().map(Vec::len).filter(|&d| d > 0).min()
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.adj[i]
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.adj[i].binary_search(&j).is_ok()
    }

    /// Edges as canonical pairs, ascending.
    pub fn edges(&self) -> Vec<NodePair> {
        let mut out = Vec::with_capacity(self.edge_count());
        for (i, nbrs) in self.adj.iter().enumerate() {
            for &j in nbrs {
                if i < j {
                    out.push(NodePair { i, j });
                }
            }
        }
        out
    }

    /// Apply a single flip, returning the perturbed graph.
    pub fn apply_flip(&self, flip: FlipDelta) -> Result<Graph> {
        let (i, j) = (flip.pair.i(), flip.pair.j());
        let n = self.node_count();
        if j >= n {
            return Err(Error::IndexOutOfRange { index: j, nodes: n });
        }
        let exists = self.has_edge(i, j);
        match (flip.delta, exists) {
            (1, false) => {
                let mut g = self.clone();
                let pos_i = g.adj[i].binary_search(&j).unwrap_err();
                g.adj[i].insert(pos_i, j);
                let pos_j = g.adj[j].binary_search(&i).unwrap_err();
                g.adj[j].insert(pos_j, i);
                g.volume += 2;
                Ok(g)
            }
            (-1, true) => {
                let mut g = self.clone();
                let pos_i = g.adj[i].binary_search(&j).unwrap();
                g.adj[i].remove(pos_i);
                let pos_j = g.adj[j].binary_search(&i).unwrap();
                g.adj[j].remove(pos_j);
                g.volume -= 2;
                Ok(g)
            }
            _ => Err(Error::InconsistentFlip {
                i,
                j,
                delta: flip.delta,
            }),
        }
    }

    /// Content fingerprint used for cache staleness checks.
    pub fn fingerprint(&self) -> u64 {
        let mut h = std::collections::hash_map::DefaultHasher::new();
        self.adj.hash(&mut h);
        h.finish()
    }
}

/// Attack targets: hidden true links (`p_pos`) and true non-links (`p_neg`).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PrivatePairSet {
    p_pos: Vec<NodePair>,
    p_neg: Vec<NodePair>,
}

impl PrivatePairSet {
    pub fn new(mut p_pos: Vec<NodePair>, mut p_neg: Vec<NodePair>) -> Result<Self> {
        p_pos.sort_unstable();
        p_pos.dedup();
        p_neg.sort_unstable();
        p_neg.dedup();
        if let Some(p) = p_pos.iter().find(|p| p_neg.binary_search(p).is_ok()) {
            return Err(Error::InvalidPair { i: p.i(), j: p.j() });
        }
        Ok(Self { p_pos, p_neg })
    }

    pub fn p_pos(&self) -> &[NodePair] {
        &self.p_pos
    }

    pub fn p_neg(&self) -> &[NodePair] {
        &self.p_neg
    }

    pub fn contains(&self, pair: &NodePair) -> bool {
        self.p_pos.binary_search(pair).is_ok() || self.p_neg.binary_search(pair).is_ok()
    }

    /// Swap the positive and negative sides.
    pub fn swapped(&self) -> Self {
        Self {
            p_pos: self.p_neg.clone(),
            p_neg: self.p_pos.clone(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.p_pos.is_empty() && self.p_neg.is_empty()
    }

    /// Nodes touched by any pair, sorted and deduplicated.
    pub fn touched_nodes(&self) -> Vec<usize> {
        let mut nodes: Vec<usize> = self
            .p_pos
            .iter()
            .chain(self.p_neg.iter())
            .flat_map(|p| [p.i(), p.j()])
            .collect();
        nodes.sort_unstable();
        nodes.dedup();
        nodes
    }
}

/// Parse a whitespace-separated edge list. `#` starts a comment line.
///
/// Tokens map to contiguous indices in first-appearance order; the
/// token table (index -> token) is returned alongside the graph.
pub fn load_edge_list(text: &str) -> Result<(Graph, Vec<String>)> {
    let mut tokens: Vec<String> = Vec::new();
    let mut index: std::collections::HashMap<String, usize> = std::collections::HashMap::new();
    let mut edges: Vec<(usize, usize)> = Vec::new();
    let mut intern = |tok: &str, tokens: &mut Vec<String>| -> usize {
        if let Some(&id) = index.get(tok) {
            id
        } else {
            let id = tokens.len();
            tokens.push(tok.to_string());
            index.insert(tok.to_string(), id);
            id
        }
    };
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut parts = line.split_whitespace();
        let (a, b) = match (parts.next(), parts.next(), parts.next()) {
            (Some(a), Some(b), None) => (a, b),
            _ => return Err(Error::MalformedEdgeLine { line: lineno + 1 }),
        };
        let ia = intern(a, &mut tokens);
        let ib = intern(b, &mut tokens);
        edges.push((ia, ib));
    }
    if tokens.is_empty() {
        return Err(Error::EmptyGraph);
    }
    let graph = Graph::from_edges(tokens.len(), &edges)?;
    Ok((graph, tokens))
}

/// Hide a fraction of links as private, returning the observed graph and
/// the target pair set (equal-size positive and negative sides).
pub fn sample_private_pairs(
    complete: &Graph,
    fraction: f64,
    seed: u64,
) -> Result<(Graph, PrivatePairSet)> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::InvalidFraction { fraction });
    }
    let edges = complete.edges();
    if edges.is_empty() {
        return Err(Error::ZeroVolume);
    }
    let n_hide = ((fraction * edges.len() as f64).ceil() as usize).max(1);
    if n_hide >= edges.len() {
        return Err(Error::AllLinksRemoved);
    }
    let non_links = complete.node_count() * (complete.node_count() - 1) / 2 - edges.len();
    if non_links < n_hide {
        return Err(Error::NotEnoughNonLinks {
            needed: n_hide,
            available: non_links,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut shuffled = edges;
    shuffled.shuffle(&mut rng);
    let p_pos: Vec<NodePair> = shuffled[..n_hide].to_vec();

    let n = complete.node_count();
    let mut p_neg: Vec<NodePair> = Vec::with_capacity(n_hide);
    let mut chosen: HashSet<NodePair> = HashSet::new();
    // Rejection-sample never-linked pairs of the complete graph.
    while p_neg.len() < n_hide {
        let a = rng.random_range(0..n);
        let b = rng.random_range(0..n);
        if a == b {
            continue;
        }
        let pair = NodePair::new(a, b)?;
        if complete.has_edge(pair.i(), pair.j()) || !chosen.insert(pair) {
            continue;
        }
        p_neg.push(pair);
    }

    let mut observed = complete.clone();
    for &pair in &p_pos {
        observed = observed.apply_flip(FlipDelta::remove(pair))?;
    }
    if observed.volume() == 0 {
        return Err(Error::AllLinksRemoved);
    }
    Ok((observed, PrivatePairSet::new(p_pos, p_neg)?))
}
