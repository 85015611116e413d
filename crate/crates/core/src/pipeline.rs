//! End-to-end orchestration: config parsing, dataset loading, method
//! dispatch, checkpoint evaluation, and artifact persistence.

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;

use crate::attack::{clustering_nmi, node_classification_f1};
use crate::error::{Error, Result};
use crate::graph::{load_edge_list, sample_private_pairs, Graph, NodePair, PrivatePairSet};
use crate::netmf::{build_target, factorize_target, write_embedding_text, EmbeddingParams};
use crate::optimizer::{plan_to_text, run_exact, run_fast, OptimizerConfig, PerturbationPlan};
use crate::report::{emit_tradeoff_csv, TradeoffRecord};
use crate::{baselines, Error as E};

/// Perturbation method selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MethodKind {
    PpneFast,
    PpneExact,
    Random,
    Degree,
    Betweenness,
    Dice,
}

impl MethodKind {
    fn parse(s: &str) -> Result<Self> {
        Ok(match s {
            "ppne-fast" => Self::PpneFast,
            "ppne-exact" => Self::PpneExact,
            "random" => Self::Random,
            "degree" => Self::Degree,
            "betweenness" => Self::Betweenness,
            "dice" => Self::Dice,
            _ => {
                return Err(E::InvalidConfigValue {
                    key: "method".into(),
                    value: s.into(),
                })
            }
        })
    }
}

/// Flat key=value run configuration. CLI flags override file keys.
#[derive(Debug, Clone)]
pub struct Config {
    pub method: Option<MethodKind>,
    pub embedding: String,
    pub window: usize,
    pub negatives: f64,
    pub dim: usize,
    pub iterations: usize,
    pub sample_size: usize,
    pub batch_size: usize,
    pub k_exponent: f64,
    pub seed: u64,
    pub ppos_fraction: f64,
    pub eval_every: usize,
    pub labels_path: Option<String>,
    pub edges_path: Option<String>,
    pub pairs_path: Option<String>,
    pub out_dir: Option<String>,
    /// Worker thread count; 0 uses the global pool.
    pub workers: usize,
    /// When false, wall_seconds is written as 0 so artifacts are
    /// byte-reproducible across machines and worker counts.
    pub record_timing: bool,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            method: None,
            embedding: "deepwalk".into(),
            window: 10,
            negatives: 1.0,
            dim: 128,
            iterations: 0,
            sample_size: 10_000,
            batch_size: 1,
            k_exponent: 1.0,
            seed: 0,
            ppos_fraction: 0.1,
            eval_every: 100,
            labels_path: None,
            edges_path: None,
            pairs_path: None,
            out_dir: None,
            workers: 0,
            record_timing: false,
        }
    }
}

impl Config {
    /// Apply a single `key=value` assignment.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let bad = || E::InvalidConfigValue {
            key: key.into(),
            value: value.into(),
        };
        match key {
            "method" => self.method = Some(MethodKind::parse(value)?),
            "embedding" => {
                if value != "deepwalk" && value != "line" {
                    return Err(bad());
                }
                self.embedding = value.into();
            }
            "window" => self.window = value.parse().map_err(|_| bad())?,
            "negatives" => self.negatives = value.parse().map_err(|_| bad())?,
            "dim" => self.dim = value.parse().map_err(|_| bad())?,
            "iterations" => self.iterations = value.parse().map_err(|_| bad())?,
            "sample_size" => self.sample_size = value.parse().map_err(|_| bad())?,
            "batch_size" => self.batch_size = value.parse().map_err(|_| bad())?,
            "k_exponent" => self.k_exponent = value.parse().map_err(|_| bad())?,
            "seed" => self.seed = value.parse().map_err(|_| bad())?,
            "ppos_fraction" => self.ppos_fraction = value.parse().map_err(|_| bad())?,
            "eval_every" => self.eval_every = value.parse().map_err(|_| bad())?,
            "labels_path" => self.labels_path = Some(value.into()),
            "edges_path" => self.edges_path = Some(value.into()),
            "pairs_path" => self.pairs_path = Some(value.into()),
            "out_dir" => self.out_dir = Some(value.into()),
            "workers" => self.workers = value.parse().map_err(|_| bad())?,
            "record_timing" => self.record_timing = value.parse().map_err(|_| bad())?,
            _ => return Err(E::InvalidConfigKey { key: key.into() }),
        }
        Ok(())
    }

    /// Parse a config file: one `key = value` per line, `#` comments.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for line in text.lines() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or(E::InvalidConfigKey {
                key: line.to_string(),
            })?;
            cfg.set(key.trim(), value.trim())?;
        }
        Ok(cfg)
    }

    fn embedding_params(&self) -> EmbeddingParams {
        if self.embedding == "line" {
            EmbeddingParams::line(self.negatives, self.dim)
        } else {
            EmbeddingParams::deepwalk(self.window, self.negatives, self.dim)
        }
    }

    fn required<'a, T>(field: &'a Option<T>, key: &str) -> Result<&'a T> {
        field.as_ref().ok_or(E::MissingConfigKey { key: key.into() })
    }
}

fn read_file(path: &str) -> Result<String> {
    std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.into(),
        source,
    })
}

fn write_file(path: &Path, content: &str) -> Result<()> {
    std::fs::write(path, content).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Parse the word2vec-style text format written by `write_embedding_text`.
pub fn parse_embedding_text(text: &str) -> Result<(DMatrix<f64>, Vec<String>)> {
    let bad = |line: usize| Error::MalformedEdgeLine { line };
    let mut lines = text.lines();
    let header = lines.next().ok_or(bad(1))?;
    let mut hp = header.split_whitespace();
    let n: usize = hp
        .next()
        .and_then(|v| v.parse().ok())
        .ok_or(bad(1))?;
    let k: usize = hp
        .next()
        .and_then(|v| v.parse().ok())
        .ok_or(bad(1))?;
    let mut x = DMatrix::zeros(n, k);
    let mut tokens = Vec::with_capacity(n);
    for (i, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        if i >= n {
            return Err(bad(i + 2));
        }
        let mut parts = line.split_whitespace();
        tokens.push(parts.next().ok_or(bad(i + 2))?.to_string());
        for j in 0..k {
            x[(i, j)] = parts
                .next()
                .and_then(|v| v.parse().ok())
                .ok_or(bad(i + 2))?;
        }
    }
    if tokens.len() != n {
        return Err(bad(tokens.len() + 2));
    }
    Ok((x, tokens))
}

/// Parse `token_a<TAB>token_b<TAB>{1|0}` private-pair lines against a token
/// table. Label 1 marks a hidden true link, 0 a true non-link.
pub fn parse_pairs(text: &str, tokens: &[String]) -> Result<PrivatePairSet> {
    let index: HashMap<&str, usize> = tokens
        .iter()
        .enumerate()
        .map(|(i, t)| (t.as_str(), i))
        .collect();
    let mut p_pos = Vec::new();
    let mut p_neg = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let bad = || Error::MalformedEdgeLine { line: lineno + 1 };
        let mut parts = line.split_whitespace();
        let (a, b, l) = match (parts.next(), parts.next(), parts.next(), parts.next()) {
            (Some(a), Some(b), Some(l), None) => (a, b, l),
            _ => return Err(bad()),
        };
        let resolve = |tok: &str| {
            index.get(tok).copied().ok_or(E::InvalidConfigValue {
                key: "pairs_path".into(),
                value: format!("unknown node token `{tok}`"),
            })
        };
        let pair = NodePair::new(resolve(a)?, resolve(b)?)?;
        match l {
            "1" => p_pos.push(pair),
            "0" => p_neg.push(pair),
            _ => return Err(bad()),
        }
    }
    PrivatePairSet::new(p_pos, p_neg)
}

/// Parse `node_token<TAB>label` lines into per-node class ids (classes
/// numbered by sorted label text). Every graph node must be labeled.
pub fn parse_labels(text: &str, tokens: &[String]) -> Result<Vec<usize>> {
    let index: HashMap<&str, usize> = tokens
        .iter()
        .enumerate()
        .map(|(i, t)| (t.as_str(), i))
        .collect();
    let mut raw: Vec<Option<String>> = vec![None; tokens.len()];
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let bad = || Error::MalformedEdgeLine { line: lineno + 1 };
        let mut parts = line.split_whitespace();
        let (tok, label) = match (parts.next(), parts.next(), parts.next()) {
            (Some(a), Some(b), None) => (a, b),
            _ => return Err(bad()),
        };
        if let Some(&i) = index.get(tok) {
            raw[i] = Some(label.to_string());
        }
    }
    let mut classes: Vec<String> = raw.iter().flatten().cloned().collect();
    classes.sort();
    classes.dedup();
    raw.iter()
        .enumerate()
        .map(|(i, l)| match l {
            Some(l) => Ok(classes.binary_search(l).unwrap()),
            None => Err(E::InvalidConfigValue {
                key: "labels_path".into(),
                value: format!("node `{}` has no label", tokens[i]),
            }),
        })
        .collect()
}

/// Everything run_pipeline produces besides the on-disk artifacts.
#[derive(Debug)]
pub struct PipelineOutput {
    pub records: Vec<TradeoffRecord>,
    pub plan: PerturbationPlan<f64>,
    pub out_dir: PathBuf,
}

fn embed_graph(graph: &Graph, params: &EmbeddingParams, seed: u64) -> Result<DMatrix<f64>> {
    let target = build_target::<f64>(graph, params, 5_000, 1e-9)?;
    Ok(factorize_target(&target, params.dimension(), 0, 1e-8, seed)?.x)
}

fn run_method(
    cfg: &Config,
    observed: &Graph,
    pairs: &PrivatePairSet,
    params: &EmbeddingParams,
) -> Result<PerturbationPlan<f64>> {
    let method = *Config::required(&cfg.method, "method")?;
    match method {
        MethodKind::PpneFast => {
            let mut oc = OptimizerConfig::fast(
                cfg.iterations,
                cfg.sample_size,
                cfg.batch_size,
                cfg.seed,
            );
            oc.k_exponent = cfg.k_exponent;
            run_fast(observed, pairs, params, &oc)
        }
        MethodKind::PpneExact => {
            let oc = OptimizerConfig::exact(cfg.iterations, cfg.seed);
            run_exact(observed, pairs, params, &oc)
        }
        MethodKind::Random => baselines::random_perturb(observed, pairs, cfg.iterations, cfg.seed),
        MethodKind::Degree => baselines::degree_perturb(observed, pairs, cfg.iterations, cfg.seed),
        MethodKind::Betweenness => baselines::betweenness_perturb(observed, cfg.iterations),
        MethodKind::Dice => baselines::dice_perturb(observed, pairs, cfg.iterations, cfg.seed),
    }
}

/// Rebuild the intermediate graph after the first `flips` plan entries.
fn graph_at(observed: &Graph, plan: &PerturbationPlan<f64>, flips: usize) -> Result<Graph> {
    let mut g = observed.clone();
    for e in plan.entries.iter().take(flips) {
        g = g.apply_flip(e.flip)?;
    }
    Ok(g)
}

/// Full run: load inputs, perturb, evaluate checkpoints, write artifacts
/// (`embedding.txt`, `plan.txt`, `tradeoff.csv`, `nodemap.tsv`) under
/// `out_dir`.
pub fn run_pipeline(cfg: &Config) -> Result<PipelineOutput> {
    if cfg.workers > 0 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.workers)
            .build()
            .map_err(|e| E::InvalidConfigValue {
                key: "workers".into(),
                value: e.to_string(),
            })?;
        return pool.install(|| run_pipeline_inner(cfg));
    }
    run_pipeline_inner(cfg)
}

fn run_pipeline_inner(cfg: &Config) -> Result<PipelineOutput> {
    let edges_path = Config::required(&cfg.edges_path, "edges_path")?;
    let out_dir = PathBuf::from(Config::required(&cfg.out_dir, "out_dir")?);
    let (loaded, tokens) = load_edge_list(&read_file(edges_path)?)?;

    // With explicit pairs the edge list is already the observed graph;
    // otherwise hide a fraction of its links.
    let (observed, pairs) = match &cfg.pairs_path {
        Some(path) => (loaded, parse_pairs(&read_file(path)?, &tokens)?),
        None => sample_private_pairs(&loaded, cfg.ppos_fraction, cfg.seed)?,
    };
    let labels = match &cfg.labels_path {
        Some(path) => Some(parse_labels(&read_file(path)?, &tokens)?),
        None => None,
    };
    let params = cfg.embedding_params();

    let plan = run_method(cfg, &observed, &pairs, &params)?;

    // Baselines carry no records; synthesize start and end points.
    let mut records = if plan.records.is_empty() {
        let mut recs = Vec::new();
        for (iteration, graph) in [(0usize, &observed), (plan.entries.len(), &plan.final_graph)] {
            let x = embed_graph(graph, &params, cfg.seed)?;
            let pl = crate::privacy::privacy_leakage(&x, &pairs)?;
            let flips = if iteration == 0 { 0 } else { plan.entries.len() };
            recs.push(crate::optimizer::snapshot_record(
                iteration, flips, pl, &x, &pairs,
            ));
        }
        recs
    } else {
        plan.records.clone()
    };

    // Checkpoint metrics: classification F1 and clustering NMI against the
    // original embedding, every eval_every iterations plus the final point.
    if let Some(labels) = &labels {
        let classes = labels.iter().copied().max().unwrap_or(0) + 1;
        let x0 = embed_graph(&observed, &params, cfg.seed)?;
        let every = cfg.eval_every.max(1);
        let last = records.len().saturating_sub(1);
        for (idx, rec) in records.iter_mut().enumerate() {
            if idx != last && rec.iteration % every != 0 {
                continue;
            }
            let g = graph_at(&observed, &plan, rec.cumulative_flips)?;
            let x = embed_graph(&g, &params, cfg.seed)?;
            if classes >= 2 {
                let f1 = node_classification_f1(&x, labels, 0.7, cfg.seed)?;
                rec.one_minus_f1 = Some(1.0 - f1);
                let nmi = clustering_nmi(&x, &x0, classes, cfg.seed)?;
                rec.one_minus_nmi = Some(1.0 - nmi);
            }
        }
    }
    if !cfg.record_timing {
        for rec in &mut records {
            rec.wall_seconds = 0.0;
        }
    }

    std::fs::create_dir_all(&out_dir).map_err(|source| Error::Io {
        path: out_dir.display().to_string(),
        source,
    })?;
    let x_final = embed_graph(&plan.final_graph, &params, cfg.seed)?;
    write_file(
        &out_dir.join("embedding.txt"),
        &write_embedding_text(&x_final, &tokens),
    )?;
    write_file(&out_dir.join("plan.txt"), &plan_to_text(&plan))?;
    write_file(&out_dir.join("tradeoff.csv"), &emit_tradeoff_csv(&records))?;
    let nodemap: String = tokens
        .iter()
        .enumerate()
        .map(|(i, t)| format!("{i}\t{t}\n"))
        .collect();
    write_file(&out_dir.join("nodemap.tsv"), &nodemap)?;

    Ok(PipelineOutput {
        records,
        plan,
        out_dir,
    })
}

/// Exit code mapping for the CLI: distinct codes per failure family.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Io { .. } => 2,
        Error::InvalidConfigKey { .. }
        | Error::InvalidConfigValue { .. }
        | Error::MissingConfigKey { .. } => 3,
        Error::SizeGuard { .. } | Error::BudgetExceedsEdges { .. } => 4,
        _ => 1,
    }
}
