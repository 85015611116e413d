//! Comparison perturbation strategies: random, degree-guided, betweenness
//! deletion, and private-neighborhood rewiring.
//!
//! All baselines return the same [`PerturbationPlan`] shape as the
//! optimizer; per-flip estimates are zero (nothing is estimated).

use std::collections::BTreeSet;

use rand::distr::weighted::WeightedIndex;
use rand::prelude::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::graph::{FlipDelta, Graph, NodePair, PrivatePairSet};
use crate::optimizer::{exclusion_set, PerturbationPlan, PlanEntry};
use crate::scalar::Scalar;

fn zero_entry<S: Scalar>(iteration: usize, flip: FlipDelta) -> PlanEntry<S> {
    PlanEntry {
        iteration,
        flip,
        est_pg: S::zero(),
        est_ul: S::zero(),
        score: S::zero(),
    }
}

fn finish_plan<S: Scalar>(
    entries: Vec<PlanEntry<S>>,
    graph: Graph,
    budget: usize,
) -> PerturbationPlan<S> {
    let exhausted = entries.len() < budget;
    PerturbationPlan {
        entries,
        final_graph: graph,
        records: Vec::new(),
        stopped_early: exhausted,
        universe_exhausted: exhausted,
    }
}

/// Candidate pairs not excluded for the current graph, ascending.
fn valid_universe(
    graph: &Graph,
    pairs: &PrivatePairSet,
    flipped: &BTreeSet<NodePair>,
) -> Vec<NodePair> {
    let excluded = exclusion_set(graph, pairs, flipped);
    let n = graph.node_count();
    let mut out = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            let p = NodePair::new(i, j).unwrap();
            if !excluded.contains(&p) {
                out.push(p);
            }
        }
    }
    out
}

/// Uniform random flips: each of `budget` pairs is drawn uniformly from the
/// valid universe (same exclusions as the optimizer), with the flip
/// direction set by the current link status. Stops short with a flag when
/// the universe runs out.
pub fn random_perturb<S: Scalar>(
    graph: &Graph,
    pairs: &PrivatePairSet,
    budget: usize,
    seed: u64,
) -> Result<PerturbationPlan<S>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut current = graph.clone();
    let mut flipped = BTreeSet::new();
    let mut entries = Vec::with_capacity(budget);
    for step in 0..budget {
        let universe = valid_universe(&current, pairs, &flipped);
        if universe.is_empty() {
            break;
        }
        let pair = universe[rng.random_range(0..universe.len())];
        let flip = FlipDelta::toggling(&current, pair);
        current = current.apply_flip(flip)?;
        flipped.insert(pair);
        entries.push(zero_entry(step, flip));
    }
    Ok(finish_plan(entries, current, budget))
}

/// Degree-guided flips: deletions are drawn with probability inversely
/// proportional to the endpoint degree sum among existing links, additions
/// proportionally to the degree sum among absent pairs. Deletions and
/// additions alternate evenly (odd budgets favor deletion).
pub fn degree_perturb<S: Scalar>(
    graph: &Graph,
    pairs: &PrivatePairSet,
    budget: usize,
    seed: u64,
) -> Result<PerturbationPlan<S>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut current = graph.clone();
    let mut flipped = BTreeSet::new();
    let mut entries = Vec::with_capacity(budget);
    for step in 0..budget {
        let want_delete = step % 2 == 0;
        let universe = valid_universe(&current, pairs, &flipped);
        let candidates: Vec<NodePair> = universe
            .into_iter()
            .filter(|p| current.has_edge(p.i(), p.j()) == want_delete)
            .collect();
        if candidates.is_empty() {
            break;
        }
        let weights: Vec<f64> = candidates
            .iter()
            .map(|p| {
                let sum = (current.degree(p.i()) + current.degree(p.j())) as f64;
                if want_delete {
                    1.0 / sum.max(1.0)
                } else {
                    // Absent pairs may join two isolated nodes; floor the
                    // weight so they stay reachable.
                    sum.max(f64::EPSILON)
                }
            })
            .collect();
        let dist = WeightedIndex::new(&weights).map_err(|_| Error::InvalidConfigValue {
            key: "degree_perturb".into(),
            value: "degenerate sampling weights".into(),
        })?;
        let pair = candidates[dist.sample(&mut rng)];
        let flip = FlipDelta::toggling(&current, pair);
        current = current.apply_flip(flip)?;
        flipped.insert(pair);
        entries.push(zero_entry(step, flip));
    }
    Ok(finish_plan(entries, current, budget))
}

/// Exact edge betweenness by Brandes-style accumulation over all sources.
/// Each unordered source-target pair contributes once.
pub fn edge_betweenness(graph: &Graph) -> Vec<(NodePair, f64)> {
    let n = graph.node_count();
    let edges = graph.edges();
    let edge_index: std::collections::HashMap<NodePair, usize> =
        edges.iter().enumerate().map(|(k, &e)| (e, k)).collect();

    // Per-source partial sums, reduced sequentially for determinism.
    let partials: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|s| {
            let mut scores = vec![0.0f64; edges.len()];
            let mut dist = vec![usize::MAX; n];
            let mut sigma = vec![0.0f64; n];
            let mut preds: Vec<Vec<usize>> = vec![Vec::new(); n];
            let mut order = Vec::with_capacity(n);
            let mut queue = std::collections::VecDeque::new();
            dist[s] = 0;
            sigma[s] = 1.0;
            queue.push_back(s);
            while let Some(v) = queue.pop_front() {
                order.push(v);
                for &w in graph.neighbors(v) {
                    if dist[w] == usize::MAX {
                        dist[w] = dist[v] + 1;
                        queue.push_back(w);
                    }
                    if dist[w] == dist[v] + 1 {
                        sigma[w] += sigma[v];
                        preds[w].push(v);
                    }
                }
            }
            let mut delta = vec![0.0f64; n];
            for &w in order.iter().rev() {
                for &v in &preds[w] {
                    let c = sigma[v] / sigma[w] * (1.0 + delta[w]);
                    let e = NodePair::new(v, w).unwrap();
                    scores[edge_index[&e]] += c;
                    delta[v] += c;
                }
            }
            scores
        })
        .collect();

    let mut totals = vec![0.0f64; edges.len()];
    for p in partials {
        for (t, v) in totals.iter_mut().zip(p) {
            *t += v;
        }
    }
    // Each unordered (s, t) pair was counted from both endpoints.
    edges
        .into_iter()
        .zip(totals)
        .map(|(e, v)| (e, v / 2.0))
        .collect()
}

/// Deletes the `budget` highest-betweenness edges in descending order;
/// ties break on the lowest canonical pair. Betweenness is computed once
/// on the input graph.
pub fn betweenness_perturb<S: Scalar>(graph: &Graph, budget: usize) -> Result<PerturbationPlan<S>> {
    let edges = graph.edge_count();
    if budget > edges {
        return Err(Error::BudgetExceedsEdges { budget, edges });
    }
    let mut scored = edge_betweenness(graph);
    scored.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    let mut current = graph.clone();
    let mut entries = Vec::with_capacity(budget);
    for (step, &(pair, _)) in scored.iter().take(budget).enumerate() {
        let flip = FlipDelta::remove(pair);
        current = current.apply_flip(flip)?;
        entries.push(zero_entry(step, flip));
    }
    Ok(finish_plan(entries, current, budget))
}

/// Rewiring around the private neighborhood: deletes links incident to any
/// endpoint of a hidden link and adds links between nodes that touch none.
/// Half the budget goes to each side (odd budgets favor deletion); a side
/// with no eligible pairs left shrinks the plan.
pub fn dice_perturb<S: Scalar>(
    graph: &Graph,
    pairs: &PrivatePairSet,
    budget: usize,
    seed: u64,
) -> Result<PerturbationPlan<S>> {
    let private_nodes: BTreeSet<usize> = pairs
        .p_pos()
        .iter()
        .flat_map(|p| [p.i(), p.j()])
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut current = graph.clone();
    let mut flipped: BTreeSet<NodePair> = BTreeSet::new();
    let mut entries = Vec::with_capacity(budget);
    let mut deletions_left = budget - budget / 2;
    let mut additions_left = budget / 2;
    let mut step = 0usize;
    while deletions_left + additions_left > 0 {
        let want_delete = if deletions_left == 0 {
            false
        } else if additions_left == 0 {
            true
        } else {
            // Alternate starting with a deletion.
            step % 2 == 0
        };
        let universe = valid_universe(&current, pairs, &flipped);
        let candidates: Vec<NodePair> = universe
            .into_iter()
            .filter(|p| {
                let touches = private_nodes.contains(&p.i()) || private_nodes.contains(&p.j());
                if want_delete {
                    current.has_edge(p.i(), p.j()) && touches
                } else {
                    !current.has_edge(p.i(), p.j()) && !touches
                }
            })
            .collect();
        if candidates.is_empty() {
            // This side is exhausted; keep draining the other side.
            if want_delete {
                deletions_left = 0;
            } else {
                additions_left = 0;
            }
            continue;
        }
        let pair = candidates[rng.random_range(0..candidates.len())];
        let flip = FlipDelta::toggling(&current, pair);
        current = current.apply_flip(flip)?;
        flipped.insert(pair);
        entries.push(zero_entry(step, flip));
        if want_delete {
            deletions_left -= 1;
        } else {
            additions_left -= 1;
        }
        step += 1;
    }
    Ok(finish_plan(entries, current, budget))
}
