//! Training-free per-flip embedding-loss approximation via generalized
//! eigenvalue perturbation, plus exact oracles.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::graph::{FlipDelta, Graph};
use crate::linalg::{dense_sym_eigen, lanczos_sym};
use crate::netmf::{build_target_matrix, optimal_loss, EmbeddingParams};
use crate::scalar::Scalar;
use crate::sparse::CsrMatrix;

/// Guard for the dense exact-loss oracle.
const EXACT_LOSS_NODE_LIMIT: usize = 2_000;

/// Node count below which the generalized eigenproblem is solved densely.
const DENSE_EIGEN_LIMIT: usize = 64;

/// Partial generalized eigenbasis of A u = lambda D u, D-normalized
/// (u^T D u = 1), sorted by descending |lambda|.
pub struct EigenBasis<S> {
    pub eigenvalues: Vec<S>,
    /// One column per pair, |V| rows.
    pub eigenvectors: DMatrix<S>,
    /// Smallest positive degree of the graph the basis was computed on.
    pub d_min: usize,
}

impl<S: Scalar> EigenBasis<S> {
    pub fn pair_count(&self) -> usize {
        self.eigenvalues.len()
    }
}

/// Result of the per-flip loss approximation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossEstimate<S> {
    pub value: S,
    /// True when the flip would isolate a node and d_min was clamped to 1.
    pub d_min_clamped: bool,
}

/// The `m` generalized eigenpairs of largest |lambda| of A u = lambda D u.
///
/// Solved through the symmetric form C = D^-1/2 A D^-1/2 with u = D^-1/2 w;
/// a unit w gives u^T D u = 1. Deterministic given the seed.
pub fn generalized_eigs<S: Scalar>(
    graph: &Graph,
    m: usize,
    tol: f64,
    seed: u64,
) -> Result<EigenBasis<S>> {
    let n = graph.node_count();
    if graph.volume() == 0 {
        return Err(Error::ZeroVolume);
    }
    if m > n {
        return Err(Error::TooManyEigenpairs {
            requested: m,
            nodes: n,
        });
    }
    let dinv_sqrt: Vec<S> = (0..n)
        .map(|i| {
            let d = graph.degree(i);
            if d == 0 {
                S::zero()
            } else {
                S::one() / S::of_usize(d).sqrt()
            }
        })
        .collect();
    let (values, w) = if n <= DENSE_EIGEN_LIMIT || m == n {
        let c = DMatrix::from_fn(n, n, |i, j| {
            if graph.has_edge(i, j) {
                dinv_sqrt[i] * dinv_sqrt[j]
            } else {
                S::zero()
            }
        });
        let (vals, vecs) = dense_sym_eigen(&c);
        (vals[..m].to_vec(), vecs.columns(0, m).into_owned())
    } else {
        let rows = (0..n)
            .map(|i| {
                graph
                    .neighbors(i)
                    .iter()
                    .map(|&j| (j, dinv_sqrt[i] * dinv_sqrt[j]))
                    .collect()
            })
            .collect();
        let c = CsrMatrix::from_rows(rows);
        lanczos_sym(&c, m, tol, seed)?
    };
    let mut vectors = DMatrix::zeros(n, m);
    for p in 0..m {
        for i in 0..n {
            vectors[(i, p)] = dinv_sqrt[i] * w[(i, p)];
        }
    }
    Ok(EigenBasis {
        eigenvalues: values,
        eigenvectors: vectors,
        d_min: graph.min_positive_degree().unwrap_or(1),
    })
}

/// First-order update of every computed eigenvalue under a weighted flip of
/// entry (i, j): d lambda = dw * (2 u_i u_j - lambda (u_i^2 + u_j^2)).
fn approx_flip_eigenvalues_weighted<S: Scalar>(
    basis: &EigenBasis<S>,
    i: usize,
    j: usize,
    dw: S,
) -> Vec<S> {
    (0..basis.pair_count())
        .map(|p| {
            let (ui, uj) = (basis.eigenvectors[(i, p)], basis.eigenvectors[(j, p)]);
            let lam = basis.eigenvalues[p];
            lam + dw * (ui * uj * S::of(2.0) - lam * (ui * ui + uj * uj))
        })
        .collect()
}

/// First-order generalized-eigenvalue estimates after applying `flip`.
pub fn approx_flip_eigenvalues<S: Scalar>(basis: &EigenBasis<S>, flip: FlipDelta) -> Vec<S> {
    approx_flip_eigenvalues_weighted(
        basis,
        flip.pair.i(),
        flip.pair.j(),
        S::of(flip.delta as f64),
    )
}

/// Training-free estimate of the optimal-factorization loss of the flipped
/// graph: sigma_p = (1/d_min) |sum_{r=1..T} lambda_p^r| sorted descending,
/// tail beyond K summed in quadrature and scaled by (vol + 2 dw)/(T b).
/// d_min comes from the flipped graph; a flip that would isolate a node
/// clamps d_min to 1 and sets the flag.
pub fn approx_embedding_loss<S: Scalar>(
    basis: &EigenBasis<S>,
    flip: FlipDelta,
    graph: &Graph,
    params: &EmbeddingParams,
) -> Result<LossEstimate<S>> {
    let n = graph.node_count();
    if flip.pair.j() >= n {
        return Err(Error::IndexOutOfRange {
            index: flip.pair.j(),
            nodes: n,
        });
    }
    let (i, j) = (flip.pair.i(), flip.pair.j());
    let delta = flip.delta as i64;
    let mut clamped = false;
    let mut d_min = usize::MAX;
    for v in 0..n {
        let mut d = graph.degree(v) as i64;
        if v == i || v == j {
            d += delta;
        }
        if d == 0 && (v == i || v == j) && graph.degree(v) > 0 {
            clamped = true;
        }
        if d > 0 {
            d_min = d_min.min(d as usize);
        }
    }
    let d_min = if clamped || d_min == usize::MAX {
        clamped = true;
        1
    } else {
        d_min
    };

    let lam = approx_flip_eigenvalues(basis, flip);
    let t = params.window();
    let inv_dmin = S::one() / S::of_usize(d_min);
    let mut sigma: Vec<S> = lam
        .iter()
        .map(|&l| {
            let mut power = S::one();
            let mut sum = S::zero();
            for _ in 0..t {
                power *= l;
                sum += power;
            }
            sum.abs() * inv_dmin
        })
        .collect();
    sigma.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let k = params.dimension();
    let tail: S = sigma.iter().skip(k).map(|&s| s * s).sum();
    let coef = (S::of_usize(graph.volume()) + S::of(2.0 * delta as f64))
        / (S::of_usize(t) * S::of(params.negatives()));
    Ok(LossEstimate {
        value: coef * tail.sqrt(),
        d_min_clamped: clamped,
    })
}

/// Exact optimal-factorization loss via the dense target spectrum.
pub fn exact_embedding_loss<S: Scalar>(graph: &Graph, params: &EmbeddingParams) -> Result<S> {
    let n = graph.node_count();
    if n > EXACT_LOSS_NODE_LIMIT {
        return Err(Error::SizeGuard {
            op: "exact_embedding_loss",
            nodes: n,
            limit: EXACT_LOSS_NODE_LIMIT,
        });
    }
    let target = build_target_matrix::<S>(graph, params)?;
    let (values, _) = dense_sym_eigen(&target);
    let sv: Vec<S> = values.iter().map(|v| v.abs()).collect();
    optimal_loss(&sv, params.dimension().min(n))
}

/// Rotation-invariant RMS distance between two embeddings:
/// min over orthogonal Q of ||X' - X Q||_F / sqrt(n K).
pub fn procrustes_distance<S: Scalar>(x: &DMatrix<S>, x_prime: &DMatrix<S>) -> Result<S> {
    if x.shape() != x_prime.shape() {
        return Err(Error::ShapeMismatch {
            left: format!("{}x{}", x.nrows(), x.ncols()),
            right: format!("{}x{}", x_prime.nrows(), x_prime.ncols()),
        });
    }
    let (n, k) = x.shape();
    if n == 0 || k == 0 {
        return Ok(S::zero());
    }
    let m = x.transpose() * x_prime;
    let svd = m.svd(false, false);
    let trace: S = svd.singular_values.iter().copied().sum();
    let sq = x.norm_squared() + x_prime.norm_squared() - trace * S::of(2.0);
    let sq = if sq > S::zero() { sq } else { S::zero() };
    Ok(sq.sqrt() / S::of_usize(n * k).sqrt())
}
