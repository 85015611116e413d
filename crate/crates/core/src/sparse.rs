//! Minimal CSR storage for symmetric matrices.

use nalgebra::DVector;

use crate::scalar::Scalar;

/// Compressed sparse row matrix. Both triangles of a symmetric matrix are
/// stored so matvec is a plain row sweep.
#[derive(Debug, Clone)]
pub struct CsrMatrix<S> {
    n: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<S>,
}

impl<S: Scalar> CsrMatrix<S> {
    /// Build from per-row (col, value) lists; each list must be sorted by column.
    pub fn from_rows(rows: Vec<Vec<(usize, S)>>) -> Self {
        let n = rows.len();
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        row_ptr.push(0);
        for row in rows {
            debug_assert!(row.windows(2).all(|w| w[0].0 < w[1].0));
            for (c, v) in row {
                cols.push(c);
                vals.push(v);
            }
            row_ptr.push(cols.len());
        }
        Self {
            n,
            row_ptr,
            cols,
            vals,
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.cols.len()
    }

    pub fn row(&self, i: usize) -> (&[usize], &[S]) {
        let (a, b) = (self.row_ptr[i], self.row_ptr[i + 1]);
        (&self.cols[a..b], &self.vals[a..b])
    }

    pub fn get(&self, i: usize, j: usize) -> S {
        let (cols, vals) = self.row(i);
        match cols.binary_search(&j) {
            Ok(p) => vals[p],
            Err(_) => S::zero(),
        }
    }

    pub fn matvec(&self, x: &DVector<S>, y: &mut DVector<S>) {
        debug_assert_eq!(x.len(), self.n);
        for i in 0..self.n {
            let (cols, vals) = self.row(i);
            let mut acc = S::zero();
            for (c, v) in cols.iter().zip(vals) {
                acc += *v * x[*c];
            }
            y[i] = acc;
        }
    }

    /// (self + self^T) / 2, merging the two supports.
    pub fn symmetrized(&self) -> Self {
        let mut transposed: Vec<Vec<(usize, S)>> = vec![Vec::new(); self.n];
        for i in 0..self.n {
            let (cols, vals) = self.row(i);
            for (c, v) in cols.iter().zip(vals) {
                transposed[*c].push((i, *v));
            }
        }
        // Transpose rows come out in ascending column order already.
        let half = S::of(0.5);
        let mut rows: Vec<Vec<(usize, S)>> = Vec::with_capacity(self.n);
        for i in 0..self.n {
            let (cols, vals) = self.row(i);
            let mut merged = Vec::with_capacity(cols.len().max(transposed[i].len()));
            let (mut a, mut b) = (0usize, 0usize);
            while a < cols.len() || b < transposed[i].len() {
                let ca = cols.get(a).copied().unwrap_or(usize::MAX);
                let cb = transposed[i].get(b).map(|e| e.0).unwrap_or(usize::MAX);
                if ca == cb {
                    merged.push((ca, (vals[a] + transposed[i][b].1) * half));
                    a += 1;
                    b += 1;
                } else if ca < cb {
                    merged.push((ca, vals[a] * half));
                    a += 1;
                } else {
                    merged.push((cb, transposed[i][b].1 * half));
                    b += 1;
                }
            }
            rows.push(merged);
        }
        Self::from_rows(rows)
    }
}
