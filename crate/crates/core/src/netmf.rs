//! Closed-form skip-gram target matrix and its rank-K factorization.
//!
//! The target is vol(A) * (1/T * sum_{r=1..T} (D^-1 A)^r) * D^-1 / b with an
//! elementwise log(max(., 1)) clamp. The window-T form covers DeepWalk; the
//! T = 1 special case covers LINE. Factorization goes through the symmetric
//! eigendecomposition, which for a symmetric target coincides with the
//! truncated SVD.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::linalg::{dense_sym_eigen, lanczos_sym};
use crate::scalar::Scalar;
use crate::sparse::CsrMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    DeepWalk,
    Line,
}

/// Hyperparameters of the factorization target.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EmbeddingParams {
    method: Method,
    window: usize,
    negatives: f64,
    dimension: usize,
}

impl EmbeddingParams {
    pub fn deepwalk(window: usize, negatives: f64, dimension: usize) -> Self {
        assert!(window >= 1 && negatives >= 1.0 && dimension >= 1);
        Self {
            method: Method::DeepWalk,
            window,
            negatives,
            dimension,
        }
    }

    /// LINE is the window-1 special case; the window is forced to 1.
    pub fn line(negatives: f64, dimension: usize) -> Self {
        assert!(negatives >= 1.0 && dimension >= 1);
        Self {
            method: Method::Line,
            window: 1,
            negatives,
            dimension,
        }
    }

    pub fn method(&self) -> Method {
        self.method
    }

    pub fn window(&self) -> usize {
        self.window
    }

    pub fn negatives(&self) -> f64 {
        self.negatives
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn with_dimension(mut self, dimension: usize) -> Self {
        assert!(dimension >= 1);
        self.dimension = dimension;
        self
    }
}

/// Dense symmetric factorization target.
pub type TargetMatrix<S> = DMatrix<S>;

/// Inverse-degree vector with zeros for isolated nodes.
fn inv_degrees<S: Scalar>(graph: &Graph) -> DVector<S> {
    DVector::from_iterator(
        graph.node_count(),
        (0..graph.node_count()).map(|i| {
            let d = graph.degree(i);
            if d == 0 {
                S::zero()
            } else {
                S::one() / S::of_usize(d)
            }
        }),
    )
}

/// Dense target matrix: log-clamped proximity.
pub fn build_target_matrix<S: Scalar>(
    graph: &Graph,
    params: &EmbeddingParams,
) -> Result<TargetMatrix<S>> {
    if graph.volume() == 0 {
        return Err(Error::ZeroVolume);
    }
    let n = graph.node_count();
    let dinv = inv_degrees::<S>(graph);
    // B = D^-1 A, built row by row from adjacency.
    let mut b = DMatrix::zeros(n, n);
    for i in 0..n {
        for &j in graph.neighbors(i) {
            b[(i, j)] = dinv[i];
        }
    }
    let t = params.window();
    let mut sum = b.clone();
    let mut power = b.clone();
    for _ in 1..t {
        power = &power * &b;
        sum += &power;
    }
    let scale = S::of_usize(graph.volume()) / (S::of_usize(t) * S::of(params.negatives()));
    let mut raw = sum;
    for j in 0..n {
        let dj = dinv[j];
        for i in 0..n {
            raw[(i, j)] *= scale * dj;
        }
    }
    // Symmetrize before the clamp to absorb floating-point accumulation noise.
    let raw = (&raw + raw.transpose()) * S::of(0.5);
    Ok(raw.map(|v| if v > S::one() { v.ln() } else { S::zero() }))
}

/// Scratch buffers for one row of the sparse expansion.
struct RowWorkspace<S> {
    cur: Vec<S>,
    cur_touched: Vec<usize>,
    next: Vec<S>,
    next_touched: Vec<usize>,
    acc: Vec<S>,
    acc_touched: Vec<usize>,
}

impl<S: Scalar> RowWorkspace<S> {
    fn new(n: usize) -> Self {
        Self {
            cur: vec![S::zero(); n],
            cur_touched: Vec::new(),
            next: vec![S::zero(); n],
            next_touched: Vec::new(),
            acc: vec![S::zero(); n],
            acc_touched: Vec::new(),
        }
    }

    fn reset(&mut self) {
        for &t in &self.cur_touched {
            self.cur[t] = S::zero();
        }
        for &t in &self.next_touched {
            self.next[t] = S::zero();
        }
        for &t in &self.acc_touched {
            self.acc[t] = S::zero();
        }
        self.cur_touched.clear();
        self.next_touched.clear();
        self.acc_touched.clear();
    }
}

/// Sparse target: the log clamp zeroes most entries on sparse graphs, so
/// only the surviving entries are materialized. Walk mass below `prune_tol`
/// is dropped during expansion, which bounds per-row work for larger
/// windows.
pub fn build_sparse_target<S: Scalar>(
    graph: &Graph,
    params: &EmbeddingParams,
    prune_tol: f64,
) -> Result<CsrMatrix<S>> {
    if graph.volume() == 0 {
        return Err(Error::ZeroVolume);
    }
    let n = graph.node_count();
    let t = params.window();
    let dinv = inv_degrees::<S>(graph);
    let scale = S::of_usize(graph.volume()) / (S::of_usize(t) * S::of(params.negatives()));
    let prune = S::of(prune_tol);

    let rows: Vec<Vec<(usize, S)>> = (0..n)
        .into_par_iter()
        .map_init(
            || RowWorkspace::<S>::new(n),
            |ws, i| {
                ws.reset();
                if graph.degree(i) == 0 {
                    return Vec::new();
                }
                ws.cur[i] = S::one();
                ws.cur_touched.push(i);
                for _ in 0..t {
                    for &c in &ws.cur_touched {
                        let mass = ws.cur[c] * dinv[c];
                        if mass <= prune {
                            continue;
                        }
                        for &nb in graph.neighbors(c) {
                            if ws.next[nb] == S::zero() {
                                ws.next_touched.push(nb);
                            }
                            ws.next[nb] += mass;
                        }
                    }
                    ws.next_touched.sort_unstable();
                    for &j in &ws.next_touched {
                        if ws.acc[j] == S::zero() {
                            ws.acc_touched.push(j);
                        }
                        ws.acc[j] += ws.next[j];
                    }
                    // next becomes the current frontier
                    for &c in &ws.cur_touched {
                        ws.cur[c] = S::zero();
                    }
                    std::mem::swap(&mut ws.cur, &mut ws.next);
                    std::mem::swap(&mut ws.cur_touched, &mut ws.next_touched);
                    ws.next_touched.clear();
                }
                ws.acc_touched.sort_unstable();
                let mut row = Vec::new();
                for &j in &ws.acc_touched {
                    let raw = scale * ws.acc[j] * dinv[j];
                    if raw > S::one() {
                        row.push((j, raw.ln()));
                    }
                }
                row
            },
        )
        .collect();

    Ok(CsrMatrix::from_rows(rows).symmetrized())
}

/// Dense or sparse target, chosen by the size cap.
#[derive(Debug, Clone)]
pub enum TargetRepr<S> {
    Dense(TargetMatrix<S>),
    Sparse(CsrMatrix<S>),
}

impl<S: Scalar> TargetRepr<S> {
    /// Unclamped entries as a CSR over log values (used by the gradient path).
    pub fn support_csr(&self) -> CsrMatrix<S> {
        match self {
            TargetRepr::Sparse(m) => m.clone(),
            TargetRepr::Dense(m) => {
                let n = m.nrows();
                let rows = (0..n)
                    .map(|i| {
                        (0..n)
                            .filter_map(|j| {
                                let v = m[(i, j)];
                                if v > S::zero() {
                                    Some((j, v))
                                } else {
                                    None
                                }
                            })
                            .collect()
                    })
                    .collect();
                CsrMatrix::from_rows(rows)
            }
        }
    }
}

pub fn build_target<S: Scalar>(
    graph: &Graph,
    params: &EmbeddingParams,
    dense_cap: usize,
    prune_tol: f64,
) -> Result<TargetRepr<S>> {
    if graph.node_count() <= dense_cap {
        Ok(TargetRepr::Dense(build_target_matrix(graph, params)?))
    } else {
        Ok(TargetRepr::Sparse(build_sparse_target(
            graph, params, prune_tol,
        )?))
    }
}

/// Rank-K factorization of the target: X Y^T is the best rank-K
/// approximation, `singular_values` holds the computed spectrum sorted
/// non-increasing (all of it on the dense path).
#[derive(Debug, Clone)]
pub struct Embedding<S> {
    pub x: DMatrix<S>,
    pub y: DMatrix<S>,
    pub singular_values: Vec<S>,
}

fn factors_from_pairs<S: Scalar>(
    values: &[S],
    vectors: &DMatrix<S>,
    k: usize,
) -> (DMatrix<S>, DMatrix<S>) {
    let n = vectors.nrows();
    let mut x = DMatrix::zeros(n, k);
    let mut y = DMatrix::zeros(n, k);
    for p in 0..k {
        let lambda = values[p];
        let root = lambda.abs().sqrt();
        let sign = if lambda < S::zero() {
            -S::one()
        } else {
            S::one()
        };
        for i in 0..n {
            let q = vectors[(i, p)];
            x[(i, p)] = q * root;
            y[(i, p)] = q * root * sign;
        }
    }
    (x, y)
}

/// Optimal rank-K factors of a dense symmetric target.
pub fn factorize<S: Scalar>(target: &TargetMatrix<S>, k: usize) -> Result<Embedding<S>> {
    let n = target.nrows();
    if k == 0 || k > n {
        return Err(Error::InvalidDimension { k, nodes: n });
    }
    let (values, vectors) = dense_sym_eigen(target);
    let (x, y) = factors_from_pairs(&values, &vectors, k);
    Ok(Embedding {
        x,
        y,
        singular_values: values.iter().map(|v| v.abs()).collect(),
    })
}

/// Partial factorization through seeded Lanczos. Computes
/// `max(k + extra, k)` pairs so the loss tail has some mass to sum.
pub fn factorize_sparse<S: Scalar>(
    target: &CsrMatrix<S>,
    k: usize,
    extra: usize,
    tol: f64,
    seed: u64,
) -> Result<Embedding<S>> {
    let n = target.dim();
    if k == 0 || k > n {
        return Err(Error::InvalidDimension { k, nodes: n });
    }
    let m = (k + extra).min(n);
    let (values, vectors) = lanczos_sym(target, m, tol, seed)?;
    let (x, y) = factors_from_pairs(&values, &vectors, k);
    Ok(Embedding {
        x,
        y,
        singular_values: values.iter().map(|v| v.abs()).collect(),
    })
}

pub fn factorize_target<S: Scalar>(
    target: &TargetRepr<S>,
    k: usize,
    extra: usize,
    tol: f64,
    seed: u64,
) -> Result<Embedding<S>> {
    match target {
        TargetRepr::Dense(m) => factorize(m, k),
        TargetRepr::Sparse(m) => factorize_sparse(m, k, extra, tol, seed),
    }
}

/// Residual Frobenius norm of the optimal rank-K factorization:
/// sqrt(sum of squared singular values past K).
pub fn optimal_loss<S: Scalar>(singular_values: &[S], k: usize) -> Result<S> {
    if let Some(v) = singular_values.iter().find(|v| **v < S::zero()) {
        return Err(Error::NegativeSingularValue { value: v.as_f64() });
    }
    if k >= singular_values.len() {
        return Ok(S::zero());
    }
    let tail: S = singular_values[k..].iter().map(|v| *v * *v).sum();
    Ok(tail.sqrt())
}

/// word2vec-style text output: header `|V| K`, then one row per node.
pub fn write_embedding_text<S: Scalar>(x: &DMatrix<S>, tokens: &[String]) -> String {
    let mut out = String::new();
    out.push_str(&format!("{} {}\n", x.nrows(), x.ncols()));
    for i in 0..x.nrows() {
        out.push_str(&tokens[i]);
        for j in 0..x.ncols() {
            out.push_str(&format!(" {:.6}", x[(i, j)].as_f64()));
        }
        out.push('\n');
    }
    out
}
