//! The iterative perturbation loop: exact (per-candidate retraining) and
//! fast (sampled, batched, training-free estimators).

use std::collections::BTreeSet;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::attack::{average_precision, similarity_attack};
use crate::error::{Error, Result};
use crate::graph::{FlipDelta, Graph, NodePair, PrivatePairSet};
use crate::netmf::{
    build_target, build_target_matrix, factorize, factorize_target, Embedding, EmbeddingParams,
};
use crate::privacy::{privacy_leakage, PogState};
use crate::report::TradeoffRecord;
use crate::scalar::Scalar;
use crate::synth::unrank_pair;
use crate::utility::{approx_embedding_loss, generalized_eigs, procrustes_distance};

/// Node-count guard for exact mode.
const EXACT_NODE_LIMIT: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Exact,
    Fast,
}

#[derive(Debug, Clone)]
pub struct OptimizerConfig {
    pub mode: Mode,
    /// Iteration budget N.
    pub iterations: usize,
    /// Candidates sampled per iteration (fast mode).
    pub sample_size: usize,
    /// Flips applied per iteration (fast mode).
    pub batch_size: usize,
    /// Tradeoff exponent k in the score PG / UL^k.
    pub k_exponent: f64,
    /// Stop once the cumulative estimated privacy gain reaches this value.
    pub stop_privacy_gain: Option<f64>,
    pub seed: u64,
    /// Generalized eigenpairs kept for the utility estimate; 0 picks
    /// min(|V|, 4K).
    pub eigen_pairs: usize,
    /// Gradient window of the privacy estimator; 0 picks min(T, 2).
    pub t_grad: usize,
    /// Recompute the eigenbasis once this many flips have been applied
    /// since the last refresh (<= batch size means every iteration).
    pub refresh_threshold: usize,
    /// Dense target-matrix cap forwarded to the embedding builder.
    pub dense_cap: usize,
    /// Sparse walk-expansion prune tolerance.
    pub prune_tol: f64,
    /// Eigensolver tolerance.
    pub eigen_tol: f64,
}

impl OptimizerConfig {
    pub fn fast(iterations: usize, sample_size: usize, batch_size: usize, seed: u64) -> Self {
        Self {
            mode: Mode::Fast,
            iterations,
            sample_size,
            batch_size,
            k_exponent: 1.0,
            stop_privacy_gain: None,
            seed,
            eigen_pairs: 0,
            t_grad: 0,
            refresh_threshold: 1,
            dense_cap: 5_000,
            prune_tol: 1e-9,
            eigen_tol: 1e-8,
        }
    }

    pub fn exact(iterations: usize, seed: u64) -> Self {
        let mut cfg = Self::fast(iterations, 0, 1, seed);
        cfg.mode = Mode::Exact;
        cfg
    }

    fn resolved_t_grad(&self, params: &EmbeddingParams) -> usize {
        if self.t_grad == 0 {
            params.window().min(2)
        } else {
            self.t_grad
        }
    }

    fn resolved_eigen_pairs(&self, nodes: usize, params: &EmbeddingParams) -> usize {
        if self.eigen_pairs == 0 {
            nodes.min(4 * params.dimension().max(1))
        } else {
            self.eigen_pairs.min(nodes)
        }
    }
}

/// One applied flip with the estimates that selected it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlanEntry<S> {
    pub iteration: usize,
    pub flip: FlipDelta,
    pub est_pg: S,
    pub est_ul: S,
    pub score: S,
}

/// Result of an optimization run.
#[derive(Debug, Clone)]
pub struct PerturbationPlan<S> {
    pub entries: Vec<PlanEntry<S>>,
    pub final_graph: Graph,
    pub records: Vec<TradeoffRecord>,
    /// Set when the run ended before the iteration budget (no scorable
    /// candidates, or the privacy-gain target was reached).
    pub stopped_early: bool,
    /// Set when the candidate universe could not fill the sample size.
    pub universe_exhausted: bool,
}

/// Scores candidates as PG / UL^k; candidates with UL <= 0 are excluded
/// (None).
pub fn score_candidates<S: Scalar>(
    pg_estimates: &[S],
    ul_estimates: &[S],
    k: f64,
) -> Result<Vec<Option<S>>> {
    if pg_estimates.len() != ul_estimates.len() {
        return Err(Error::ShapeMismatch {
            left: pg_estimates.len().to_string(),
            right: ul_estimates.len().to_string(),
        });
    }
    let k_s = S::of(k);
    Ok(pg_estimates
        .iter()
        .zip(ul_estimates)
        .map(|(&pg, &ul)| {
            if ul > S::zero() {
                Some(pg / ul.powf(k_s))
            } else {
                None
            }
        })
        .collect())
}

fn child_rng(seed: u64, iteration: usize) -> ChaCha8Rng {
    let salt = (iteration as u64 + 1).wrapping_mul(0x9e37_79b9_7f4a_7c15);
    ChaCha8Rng::seed_from_u64(seed ^ salt)
}

/// A removal that would zero out an endpoint's degree.
pub(crate) fn isolating(graph: &Graph, flip: FlipDelta) -> bool {
    flip.delta == -1
        && (graph.degree(flip.pair.i()) == 1 || graph.degree(flip.pair.j()) == 1)
}

pub(crate) fn exclusion_set(
    graph: &Graph,
    pairs: &PrivatePairSet,
    flipped: &BTreeSet<NodePair>,
) -> BTreeSet<NodePair> {
    let mut excluded: BTreeSet<NodePair> = flipped.clone();
    excluded.extend(pairs.p_pos().iter().copied());
    excluded.extend(pairs.p_neg().iter().copied());
    for e in graph.edges() {
        if graph.degree(e.i()) == 1 || graph.degree(e.j()) == 1 {
            excluded.insert(e);
        }
    }
    excluded
}

/// Up to `s` distinct candidate flips drawn uniformly without replacement
/// from all node pairs, excluding self-pairs, already-flipped pairs, the
/// private pairs, and removals that would isolate a node. Returns the full
/// universe (with a flag) when it holds fewer than `s` pairs.
pub fn sample_candidates(
    graph: &Graph,
    pairs: &PrivatePairSet,
    flipped: &BTreeSet<NodePair>,
    s: usize,
    seed: u64,
    iteration: usize,
) -> (Vec<FlipDelta>, bool) {
    let n = graph.node_count();
    let total = n as u64 * (n as u64 - 1) / 2;
    let excluded = exclusion_set(graph, pairs, flipped);
    let universe = total - excluded.len() as u64;
    if universe <= s as u64 {
        let mut out = Vec::with_capacity(universe as usize);
        for i in 0..n {
            for j in (i + 1)..n {
                let p = NodePair::new(i, j).unwrap();
                if !excluded.contains(&p) {
                    out.push(FlipDelta::toggling(graph, p));
                }
            }
        }
        return (out, (universe as usize) < s);
    }
    let mut rng = child_rng(seed, iteration);
    let mut chosen = BTreeSet::new();
    let mut out = Vec::with_capacity(s);
    while out.len() < s {
        let p = rng.random_range(0..total);
        if !chosen.insert(p) {
            continue;
        }
        let (i, j) = unrank_pair(n as u64, p);
        let pair = NodePair::new(i, j).unwrap();
        if excluded.contains(&pair) {
            continue;
        }
        out.push(FlipDelta::toggling(graph, pair));
    }
    (out, false)
}

/// Estimator override used by oracle tests: maps (current graph, current
/// embedding, candidates) to per-candidate values.
pub type EstimatorFn<'a, S> =
    &'a (dyn Fn(&Graph, &Embedding<S>, &[FlipDelta]) -> Result<Vec<S>> + Sync);

struct IterationState<S> {
    embedding: Embedding<S>,
    target: crate::netmf::TargetRepr<S>,
    pl: S,
}

fn refresh_state<S: Scalar>(
    graph: &Graph,
    pairs: &PrivatePairSet,
    params: &EmbeddingParams,
    cfg: &OptimizerConfig,
) -> Result<IterationState<S>> {
    let target = build_target(graph, params, cfg.dense_cap, cfg.prune_tol)?;
    let embedding = factorize_target(&target, params.dimension(), 0, cfg.eigen_tol, cfg.seed)?;
    let pl = privacy_leakage(&embedding.x, pairs)?;
    Ok(IterationState {
        embedding,
        target,
        pl,
    })
}

/// Tradeoff record for an embedding snapshot: privacy leakage plus the
/// similarity attack's 1 - AP on the private pairs. `wall_seconds` is zero;
/// callers that track time fill it in.
pub fn snapshot_record<S: Scalar>(
    iteration: usize,
    flips: usize,
    pl: S,
    x: &nalgebra::DMatrix<S>,
    pairs: &PrivatePairSet,
) -> TradeoffRecord {
    let one_minus_ap = if pairs.p_pos().is_empty() {
        0.0
    } else {
        let mut eval_pairs: Vec<NodePair> = pairs.p_pos().to_vec();
        let mut labels = vec![1u8; eval_pairs.len()];
        eval_pairs.extend(pairs.p_neg().iter().copied());
        labels.resize(eval_pairs.len(), 0);
        let scores = similarity_attack(x, &eval_pairs).unwrap_or_default();
        match average_precision(&scores, &labels) {
            Ok(ap) => 1.0 - ap.as_f64(),
            Err(_) => 0.0,
        }
    };
    TradeoffRecord {
        iteration,
        cumulative_flips: flips,
        pl: pl.as_f64(),
        one_minus_ap,
        one_minus_f1: None,
        one_minus_nmi: None,
        wall_seconds: 0.0,
    }
}

fn attack_record<S: Scalar>(
    iteration: usize,
    flips: usize,
    pl: S,
    embedding: &Embedding<S>,
    pairs: &PrivatePairSet,
    started: Instant,
) -> TradeoffRecord {
    let mut rec = snapshot_record(iteration, flips, pl, &embedding.x, pairs);
    rec.wall_seconds = started.elapsed().as_secs_f64();
    rec
}

/// Order candidate indices by descending score, ties by lowest canonical
/// pair; unscored candidates are dropped.
fn ranked_indices<S: Scalar>(
    scores: &[Option<S>],
    candidates: &[FlipDelta],
) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).filter(|&i| scores[i].is_some()).collect();
    idx.sort_by(|&a, &b| {
        let (sa, sb) = (scores[a].unwrap(), scores[b].unwrap());
        sb.partial_cmp(&sa)
            .unwrap()
            .then(candidates[a].pair.cmp(&candidates[b].pair))
    });
    idx
}

/// Fast mode with injectable privacy/utility estimators (pass None for the
/// built-in training-free estimators).
pub fn run_fast_with_estimators<S: Scalar>(
    graph: &Graph,
    pairs: &PrivatePairSet,
    params: &EmbeddingParams,
    cfg: &OptimizerConfig,
    pg_override: Option<EstimatorFn<'_, S>>,
    ul_override: Option<EstimatorFn<'_, S>>,
) -> Result<PerturbationPlan<S>> {
    if cfg.mode != Mode::Fast {
        return Err(Error::InvalidConfigValue {
            key: "mode".into(),
            value: "expected fast".into(),
        });
    }
    if cfg.sample_size < cfg.batch_size {
        return Err(Error::InvalidConfigValue {
            key: "batch_size".into(),
            value: format!("{} exceeds sample_size {}", cfg.batch_size, cfg.sample_size),
        });
    }
    let started = Instant::now();
    let mut current = graph.clone();
    let mut flipped: BTreeSet<NodePair> = BTreeSet::new();
    let mut entries: Vec<PlanEntry<S>> = Vec::new();
    let mut records = Vec::new();
    let mut stopped_early = false;
    let mut universe_exhausted = false;
    let mut cum_pg = 0.0f64;
    let mut basis = None;
    let mut flips_since_refresh = usize::MAX / 2;
    let t_grad = cfg.resolved_t_grad(params);
    let eigen_m = cfg.resolved_eigen_pairs(graph.node_count(), params);

    for iteration in 0..cfg.iterations {
        let state = refresh_state::<S>(&current, pairs, params, cfg)?;
        records.push(attack_record(
            iteration,
            flipped.len(),
            state.pl,
            &state.embedding,
            pairs,
            started,
        ));
        if basis.is_none() || flips_since_refresh >= cfg.refresh_threshold.max(1) {
            basis = Some(generalized_eigs::<S>(
                &current,
                eigen_m,
                cfg.eigen_tol,
                cfg.seed,
            )?);
            flips_since_refresh = 0;
        }
        let basis_ref = basis.as_ref().unwrap();

        let (candidates, exhausted) = sample_candidates(
            &current,
            pairs,
            &flipped,
            cfg.sample_size,
            cfg.seed,
            iteration,
        );
        universe_exhausted |= exhausted;
        if candidates.is_empty() {
            stopped_early = true;
            break;
        }

        let pg = match pg_override {
            Some(f) => f(&current, &state.embedding, &candidates)?,
            None => {
                let pog = PogState::new(
                    &current,
                    params,
                    &state.target,
                    &state.embedding,
                    pairs,
                    t_grad,
                )?;
                pog.estimate_privacy_gain(&current, &candidates)?
            }
        };
        let ul = match ul_override {
            Some(f) => f(&current, &state.embedding, &candidates)?,
            None => candidates
                .par_iter()
                .map(|&c| approx_embedding_loss(basis_ref, c, &current, params).map(|e| e.value))
                .collect::<Result<Vec<S>>>()?,
        };
        let scores = score_candidates(&pg, &ul, cfg.k_exponent)?;
        let ranked = ranked_indices(&scores, &candidates);
        if ranked.is_empty() || ranked.iter().all(|&i| scores[i].unwrap() == S::zero()) {
            stopped_early = true;
            break;
        }

        let mut applied = 0usize;
        for &i in ranked.iter() {
            if applied == cfg.batch_size {
                break;
            }
            // Zero score means the flip sits in the clamp region and the
            // estimator carries no signal for it; applying it would be an
            // arbitrary perturbation, so it never enters a batch.
            if scores[i].unwrap() == S::zero() {
                continue;
            }
            let flip = candidates[i];
            if isolating(&current, flip) {
                continue;
            }
            current = current.apply_flip(flip)?;
            flipped.insert(flip.pair);
            entries.push(PlanEntry {
                iteration,
                flip,
                est_pg: pg[i],
                est_ul: ul[i],
                score: scores[i].unwrap(),
            });
            cum_pg += pg[i].as_f64();
            applied += 1;
        }
        flips_since_refresh += applied;
        if applied == 0 {
            stopped_early = true;
            break;
        }
        if let Some(target_pg) = cfg.stop_privacy_gain {
            if cum_pg >= target_pg {
                stopped_early = true;
                break;
            }
        }
    }

    let final_state = refresh_state::<S>(&current, pairs, params, cfg)?;
    let done = entries.last().map(|e| e.iteration + 1).unwrap_or(0);
    records.push(attack_record(
        done.max(records.len()),
        flipped.len(),
        final_state.pl,
        &final_state.embedding,
        pairs,
        started,
    ));
    Ok(PerturbationPlan {
        entries,
        final_graph: current,
        records,
        stopped_early,
        universe_exhausted,
    })
}

/// Fast mode with the built-in training-free estimators.
pub fn run_fast<S: Scalar>(
    graph: &Graph,
    pairs: &PrivatePairSet,
    params: &EmbeddingParams,
    cfg: &OptimizerConfig,
) -> Result<PerturbationPlan<S>> {
    run_fast_with_estimators(graph, pairs, params, cfg, None, None)
}

/// Exact mode: every candidate is evaluated by re-factorizing the flipped
/// graph; PG and UL are measured against the original embedding.
pub fn run_exact<S: Scalar>(
    graph: &Graph,
    pairs: &PrivatePairSet,
    params: &EmbeddingParams,
    cfg: &OptimizerConfig,
) -> Result<PerturbationPlan<S>> {
    if cfg.mode != Mode::Exact {
        return Err(Error::InvalidConfigValue {
            key: "mode".into(),
            value: "expected exact".into(),
        });
    }
    let n = graph.node_count();
    if n > EXACT_NODE_LIMIT {
        return Err(Error::SizeGuard {
            op: "run_exact",
            nodes: n,
            limit: EXACT_NODE_LIMIT,
        });
    }
    let started = Instant::now();
    let mut current = graph.clone();
    let mut flipped: BTreeSet<NodePair> = BTreeSet::new();
    let mut entries: Vec<PlanEntry<S>> = Vec::new();
    let mut records = Vec::new();
    let mut stopped_early = false;
    let mut cum_pg = 0.0f64;

    for iteration in 0..cfg.iterations {
        let state = refresh_state::<S>(&current, pairs, params, cfg)?;
        records.push(attack_record(
            iteration,
            flipped.len(),
            state.pl,
            &state.embedding,
            pairs,
            started,
        ));

        let excluded = exclusion_set(&current, pairs, &flipped);
        let mut candidates = Vec::new();
        for i in 0..n {
            for j in (i + 1)..n {
                let p = NodePair::new(i, j).unwrap();
                if !excluded.contains(&p) {
                    candidates.push(FlipDelta::toggling(&current, p));
                }
            }
        }
        if candidates.is_empty() {
            stopped_early = true;
            break;
        }
        let evals: Vec<Result<(S, S)>> = candidates
            .par_iter()
            .map(|&c| {
                let g2 = current.apply_flip(c)?;
                let m = build_target_matrix::<S>(&g2, params)?;
                let emb = factorize(&m, params.dimension())?;
                let pg = state.pl - privacy_leakage(&emb.x, pairs)?;
                let ul = procrustes_distance(&emb.x, &state.embedding.x)?;
                Ok((pg, ul))
            })
            .collect();
        let mut pg = Vec::with_capacity(candidates.len());
        let mut ul = Vec::with_capacity(candidates.len());
        for e in evals {
            let (p, u) = e?;
            pg.push(p);
            ul.push(u);
        }
        let scores = score_candidates(&pg, &ul, cfg.k_exponent)?;
        let ranked = ranked_indices(&scores, &candidates);
        let Some(&best) = ranked.first() else {
            stopped_early = true;
            break;
        };
        let flip = candidates[best];
        current = current.apply_flip(flip)?;
        flipped.insert(flip.pair);
        entries.push(PlanEntry {
            iteration,
            flip,
            est_pg: pg[best],
            est_ul: ul[best],
            score: scores[best].unwrap(),
        });
        cum_pg += pg[best].as_f64();
        if let Some(target_pg) = cfg.stop_privacy_gain {
            if cum_pg >= target_pg {
                stopped_early = true;
                break;
            }
        }
    }

    let final_state = refresh_state::<S>(&current, pairs, params, cfg)?;
    records.push(attack_record(
        entries.last().map(|e| e.iteration + 1).unwrap_or(0).max(records.len()),
        flipped.len(),
        final_state.pl,
        &final_state.embedding,
        pairs,
        started,
    ));
    Ok(PerturbationPlan {
        entries,
        final_graph: current,
        records,
        stopped_early,
        universe_exhausted: false,
    })
}

/// Plan persistence: one line per flip,
/// `iteration i j delta est_pg est_ul score`.
pub fn plan_to_text<S: Scalar>(plan: &PerturbationPlan<S>) -> String {
    let mut out = String::new();
    for e in &plan.entries {
        out.push_str(&format!(
            "{} {} {} {} {:.6} {:.6} {:.6}\n",
            e.iteration,
            e.flip.pair.i(),
            e.flip.pair.j(),
            e.flip.delta,
            e.est_pg.as_f64(),
            e.est_ul.as_f64(),
            e.score.as_f64()
        ));
    }
    out
}

/// Parse the text emitted by [`plan_to_text`] back into entries.
pub fn parse_plan_text(text: &str) -> Result<Vec<PlanEntry<f64>>> {
    let mut entries = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        if line.is_empty() {
            continue;
        }
        let bad = || Error::MalformedEdgeLine { line: idx + 1 };
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 7 {
            return Err(bad());
        }
        let i: usize = fields[1].parse().map_err(|_| bad())?;
        let j: usize = fields[2].parse().map_err(|_| bad())?;
        let delta: i8 = fields[3].parse().map_err(|_| bad())?;
        let pair = NodePair::new(i, j)?;
        let flip = if delta == 1 {
            FlipDelta::add(pair)
        } else if delta == -1 {
            FlipDelta::remove(pair)
        } else {
            return Err(Error::InconsistentFlip { i, j, delta });
        };
        entries.push(PlanEntry {
            iteration: fields[0].parse().map_err(|_| bad())?,
            flip,
            est_pg: fields[4].parse().map_err(|_| bad())?,
            est_ul: fields[5].parse().map_err(|_| bad())?,
            score: fields[6].parse().map_err(|_| bad())?,
        });
    }
    Ok(entries)
}
