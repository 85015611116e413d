//! Synthetic graph generators for experiments and tests.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::graph::Graph;

/// Map a linear index over the upper triangle (i < j, row-major) to (i, j).
pub fn unrank_pair(n: u64, p: u64) -> (usize, usize) {
    // Invert p = i*n - i*(i+1)/2 + (j - i - 1) with a float guess, then fix up.
    let nf = n as f64;
    let pf = p as f64;
    let mut i = (nf - 0.5 - ((nf - 0.5) * (nf - 0.5) - 2.0 * pf).max(0.0).sqrt()).floor() as u64;
    let row_start = |i: u64| i * n - i * (i + 1) / 2;
    while i > 0 && row_start(i) > p {
        i -= 1;
    }
    while row_start(i + 1) <= p {
        i += 1;
    }
    let j = i + 1 + (p - row_start(i));
    (i as usize, j as usize)
}

/// Erdos-Renyi G(n, p) with p = avg_degree / (n - 1).
///
/// Uses geometric skipping over the pair universe, so the cost is linear in
/// the number of generated edges.
pub fn synth_er_graph(nodes: usize, avg_degree: f64, seed: u64) -> Result<Graph> {
    if nodes < 2 {
        return Err(Error::EmptyGraph);
    }
    let p = avg_degree / (nodes as f64 - 1.0);
    if p > 1.0 {
        return Err(Error::InvalidEdgeProbability { p });
    }
    let mut edges: Vec<(usize, usize)> = Vec::new();
    if p > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let total = nodes as u64 * (nodes as u64 - 1) / 2;
        let log1mp = (1.0 - p).ln();
        let mut pos: u64 = 0;
        loop {
            let u: f64 = rng.random_range(f64::EPSILON..1.0);
            let skip = if p >= 1.0 {
                0
            } else {
                (u.ln() / log1mp).floor() as u64
            };
            pos = match pos.checked_add(skip) {
                Some(v) => v,
                None => break,
            };
            if pos >= total {
                break;
            }
            edges.push(unrank_pair(nodes as u64, pos));
            pos += 1;
            if pos >= total {
                break;
            }
        }
    }
    Graph::from_edges(nodes, &edges)
}

/// Planted-partition graph: `clusters` equal groups, within-group edge
/// probability `p_in`, across-group probability `p_out`. Returns the graph
/// and the ground-truth cluster label per node.
pub fn planted_partition(
    nodes: usize,
    clusters: usize,
    p_in: f64,
    p_out: f64,
    seed: u64,
) -> Result<(Graph, Vec<usize>)> {
    if nodes < 2 || clusters == 0 {
        return Err(Error::EmptyGraph);
    }
    if p_in > 1.0 || p_out > 1.0 {
        return Err(Error::InvalidEdgeProbability { p: p_in.max(p_out) });
    }
    let labels: Vec<usize> = (0..nodes).map(|i| i % clusters).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut edges = Vec::new();
    for i in 0..nodes {
        for j in (i + 1)..nodes {
            let p = if labels[i] == labels[j] { p_in } else { p_out };
            if rng.random_range(0.0..1.0) < p {
                edges.push((i, j));
            }
        }
    }
    Ok((Graph::from_edges(nodes, &edges)?, labels))
}
