//! Symmetric eigensolvers: dense full-spectrum and seeded Lanczos.
//!
//! Everything here is deterministic: the Lanczos start vector comes from a
//! seeded RNG and all reductions run in a fixed order.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::sparse::CsrMatrix;

/// Symmetric linear operator.
pub trait SymOp<S>: Sync {
    fn dim(&self) -> usize;
    fn apply(&self, x: &DVector<S>, y: &mut DVector<S>);
}

impl<S: Scalar> SymOp<S> for DMatrix<S> {
    fn dim(&self) -> usize {
        self.nrows()
    }

    fn apply(&self, x: &DVector<S>, y: &mut DVector<S>) {
        y.gemv(S::one(), self, x, S::zero());
    }
}

impl<S: Scalar> SymOp<S> for CsrMatrix<S> {
    fn dim(&self) -> usize {
        CsrMatrix::dim(self)
    }

    fn apply(&self, x: &DVector<S>, y: &mut DVector<S>) {
        self.matvec(x, y);
    }
}

/// Sort order used everywhere: descending |lambda|, ties by descending
/// lambda, then by original position.
fn magnitude_order<S: Scalar>(values: &[S]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| {
        let (ma, mb) = (values[a].abs(), values[b].abs());
        mb.partial_cmp(&ma)
            .unwrap()
            .then(values[b].partial_cmp(&values[a]).unwrap())
            .then(a.cmp(&b))
    });
    idx
}

/// Full symmetric eigendecomposition, pairs sorted by descending |lambda|.
pub fn dense_sym_eigen<S: Scalar>(mat: &DMatrix<S>) -> (Vec<S>, DMatrix<S>) {
    let eig = mat.clone().symmetric_eigen();
    let values: Vec<S> = eig.eigenvalues.iter().copied().collect();
    let order = magnitude_order(&values);
    let n = mat.nrows();
    let mut vecs = DMatrix::zeros(n, n);
    let mut vals = Vec::with_capacity(n);
    for (out, &src) in order.iter().enumerate() {
        vals.push(values[src]);
        let mut col = eig.eigenvectors.column(src).clone_owned();
        canonical_sign(&mut col);
        vecs.set_column(out, &col);
    }
    (vals, vecs)
}

/// Fix the sign ambiguity of an eigenvector: first entry of largest
/// magnitude is made positive.
fn canonical_sign<S: Scalar>(v: &mut DVector<S>) {
    let mut best = 0usize;
    let mut best_mag = S::zero();
    for (i, x) in v.iter().enumerate() {
        if x.abs() > best_mag {
            best_mag = x.abs();
            best = i;
        }
    }
    if v[best] < S::zero() {
        v.neg_mut();
    }
}

fn seeded_unit_vector<S: Scalar>(n: usize, seed: u64) -> DVector<S> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut v = DVector::from_fn(n, |_, _| S::of(rng.random_range(-1.0..1.0)));
    let norm = v.norm();
    if norm > S::zero() {
        v /= norm;
    } else {
        v[0] = S::one();
    }
    v
}

/// Lanczos with full reorthogonalization for the `m` eigenpairs of largest
/// magnitude of a symmetric operator.
///
/// Returns eigenvalues (descending |lambda|) and the matching eigenvector
/// columns. Errors with the worst achieved residual if the requested pairs
/// do not converge within the subspace cap.
pub fn lanczos_sym<S: Scalar>(
    op: &dyn SymOp<S>,
    m: usize,
    tol: f64,
    seed: u64,
) -> Result<(Vec<S>, DMatrix<S>)> {
    let n = op.dim();
    if m > n {
        return Err(Error::TooManyEigenpairs {
            requested: m,
            nodes: n,
        });
    }
    if m == 0 {
        return Ok((Vec::new(), DMatrix::zeros(n, 0)));
    }
    let tol_s = S::of(tol);
    let mut max_dim = (2 * m + 30).min(n);
    loop {
        match lanczos_run(op, m, tol_s, seed, max_dim)? {
            LanczosOutcome::Converged(vals, vecs) => return Ok((vals, vecs)),
            LanczosOutcome::NotConverged(residual) => {
                if max_dim >= n {
                    return Err(Error::EigenNoConvergence {
                        residual: residual.as_f64(),
                    });
                }
                max_dim = (max_dim * 2).min(n);
            }
        }
    }
}

enum LanczosOutcome<S> {
    Converged(Vec<S>, DMatrix<S>),
    NotConverged(S),
}

fn lanczos_run<S: Scalar>(
    op: &dyn SymOp<S>,
    m: usize,
    tol: S,
    seed: u64,
    max_dim: usize,
) -> Result<LanczosOutcome<S>> {
    let n = op.dim();
    let mut basis: Vec<DVector<S>> = Vec::with_capacity(max_dim);
    let mut alphas: Vec<S> = Vec::with_capacity(max_dim);
    let mut betas: Vec<S> = Vec::with_capacity(max_dim);
    let breakdown = S::of(1e-14);

    basis.push(seeded_unit_vector(n, seed));
    let mut w = DVector::zeros(n);
    let mut restart = 0u64;
    for j in 0..max_dim {
        op.apply(&basis[j], &mut w);
        let alpha = w.dot(&basis[j]);
        alphas.push(alpha);
        // Two passes of explicit orthogonalization against the whole basis.
        for _ in 0..2 {
            for q in &basis {
                let c = w.dot(q);
                w.axpy(-c, q, S::one());
            }
        }
        let beta = w.norm();
        if j + 1 == max_dim {
            betas.push(beta);
            break;
        }
        if beta <= breakdown {
            // Invariant subspace found; continue from a fresh direction.
            restart += 1;
            let mut v = seeded_unit_vector(n, seed ^ (0x9e37_79b9_7f4a_7c15u64.wrapping_mul(restart)));
            for _ in 0..2 {
                for q in &basis {
                    let c = v.dot(q);
                    v.axpy(-c, q, S::one());
                }
            }
            let norm = v.norm();
            if norm <= breakdown {
                // Basis already spans the space.
                betas.push(S::zero());
                break;
            }
            betas.push(S::zero());
            basis.push(v / norm);
        } else {
            betas.push(beta);
            basis.push(&w / beta);
        }
    }

    let k = alphas.len();
    let mut tri = DMatrix::zeros(k, k);
    for i in 0..k {
        tri[(i, i)] = alphas[i];
        if i + 1 < k {
            tri[(i, i + 1)] = betas[i];
            tri[(i + 1, i)] = betas[i];
        }
    }
    let eig = tri.symmetric_eigen();
    let theta: Vec<S> = eig.eigenvalues.iter().copied().collect();
    let order = magnitude_order(&theta);
    let beta_last = betas[k - 1];

    let wanted = m.min(k);
    let mut worst_res = S::zero();
    for &src in order.iter().take(wanted) {
        let res = (beta_last * eig.eigenvectors[(k - 1, src)]).abs();
        if res > worst_res {
            worst_res = res;
        }
    }
    // When the basis spans the whole space the Ritz pairs are exact.
    if k < n && worst_res > tol * (S::one() + theta[order[0]].abs()) {
        return Ok(LanczosOutcome::NotConverged(worst_res));
    }

    let mut vals = Vec::with_capacity(wanted);
    let mut vecs = DMatrix::zeros(n, wanted);
    for (out, &src) in order.iter().take(wanted).enumerate() {
        vals.push(theta[src]);
        let mut v = DVector::zeros(n);
        for (i, q) in basis.iter().enumerate().take(k) {
            v.axpy(eig.eigenvectors[(i, src)], q, S::one());
        }
        let norm = v.norm();
        if norm > S::zero() {
            v /= norm;
        }
        canonical_sign(&mut v);
        vecs.set_column(out, &v);
    }
    Ok(LanczosOutcome::Converged(vals, vecs))
}
