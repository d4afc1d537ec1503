//! Dense factorizations and triangular solves on [`CovMatrix`].
//!
//! Everything here is deterministic: parallel sections split work by
//! column with a fixed per-column summation order, so results are
//! bit-identical regardless of thread scheduling.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::kernel::CovMatrix;

const PANEL: usize = 96;
// Trailing updates go parallel only past this size; small factorizations
// stay on one thread to avoid rayon overhead in the batched per-block path.
const PAR_THRESHOLD: usize = 256;

impl CovMatrix {
    /// In-place lower Cholesky: on success the lower triangle holds `L`
    /// (the strict upper triangle is left stale). Fails with the index of
    /// the first non-positive pivot.
    pub fn cholesky_lower_in_place(&mut self) -> Result<()> {
        self.cholesky_impl(None)
            .map_err(|pivot| Error::NotPositiveDefinite { pivot })
    }

    /// Positive semi-definite tolerant variant for simulation of
    /// degenerate Gaussians: pivots within `rel_tol * max_diag` of zero
    /// zero out their column instead of failing.
    pub fn cholesky_psd_lower_in_place(&mut self, rel_tol: f64) -> Result<()> {
        let scale = (0..self.rows)
            .map(|i| self.at(i, i).abs())
            .fold(0.0f64, f64::max);
        self.cholesky_impl(Some(rel_tol * scale.max(f64::MIN_POSITIVE)))
            .map_err(|pivot| Error::NotPositiveDefinite { pivot })
    }

    /// Blocked right-looking factorization. `psd_tol`: None = strict.
    fn cholesky_impl(&mut self, psd_tol: Option<f64>) -> std::result::Result<(), usize> {
        assert_eq!(self.rows, self.cols, "cholesky needs a square matrix");
        let n = self.rows;
        let mut k0 = 0;
        while k0 < n {
            let kb = PANEL.min(n - k0);
            // Panel factorization: columns k0..k0+kb, rows down to n.
            for j in k0..k0 + kb {
                for k in k0..j {
                    let (head, tail) = self.values.split_at_mut(j * n);
                    let lcol_k = &head[k * n..(k + 1) * n];
                    let coef = lcol_k[j];
                    let col_j = &mut tail[..n];
                    for i in j..n {
                        col_j[i] -= lcol_k[i] * coef;
                    }
                }
                let d = self.at(j, j);
                if let Some(tol) = psd_tol {
                    if d.is_finite() && d.abs() <= tol {
                        // Degenerate direction: zero the column.
                        for i in j..n {
                            self.set(i, j, 0.0);
                        }
                        continue;
                    }
                }
                if !(d > 0.0) || !d.is_finite() {
                    return Err(j);
                }
                let l = d.sqrt();
                self.set(j, j, l);
                let col_j = &mut self.values[j * n..(j + 1) * n];
                for v in &mut col_j[j + 1..n] {
                    *v /= l;
                }
            }
            // Trailing update: A[j2.., j2] -= sum_k panel_k[j2..] * panel_k[j2].
            let trail0 = k0 + kb;
            if trail0 < n {
                let (head, tail) = self.values.split_at_mut(trail0 * n);
                let panel = &head[k0 * n..];
                let update = |(jj, col): (usize, &mut [f64])| {
                    let j2 = trail0 + jj;
                    for k in 0..kb {
                        let lcol = &panel[k * n..(k + 1) * n];
                        let coef = lcol[j2];
                        if coef != 0.0 {
                            for i in j2..n {
                                col[i] -= lcol[i] * coef;
                            }
                        }
                    }
                };
                if n - trail0 >= PAR_THRESHOLD {
                    tail.par_chunks_mut(n).enumerate().for_each(update);
                } else {
                    tail.chunks_mut(n).enumerate().for_each(update);
                }
            }
            k0 += kb;
        }
        Ok(())
    }

    /// `2 * sum(log L_ii)` of a factored matrix.
    pub fn log_det_from_cholesky(&self) -> f64 {
        (0..self.rows).map(|i| 2.0 * self.at(i, i).ln()).sum()
    }

    /// Forward substitution `L x = b`, overwriting `b`.
    pub fn solve_lower_in_place(&self, b: &mut [f64]) {
        let n = self.rows;
        assert_eq!(b.len(), n);
        for k in 0..n {
            let col = self.col(k);
            b[k] /= col[k];
            let bk = b[k];
            for i in k + 1..n {
                b[i] -= col[i] * bk;
            }
        }
    }

    /// Back substitution `L^T x = b`, overwriting `b`.
    pub fn solve_lower_transpose_in_place(&self, b: &mut [f64]) {
        let n = self.rows;
        assert_eq!(b.len(), n);
        for k in (0..n).rev() {
            let col = self.col(k);
            let mut s = b[k];
            for i in k + 1..n {
                s -= col[i] * b[i];
            }
            b[k] = s / col[k];
        }
    }

    /// Forward substitution on every column of `b`: `B := L^{-1} B`.
    pub fn solve_lower_matrix_in_place(&self, b: &mut CovMatrix) {
        assert_eq!(self.rows, b.rows);
        for j in 0..b.cols {
            self.solve_lower_in_place(b.col_mut(j));
        }
    }

    /// Lower-triangular matrix-vector product `y = L z` (reads the lower
    /// triangle only).
    pub fn lower_triangular_matvec(&self, z: &[f64]) -> Vec<f64> {
        let n = self.rows;
        assert_eq!(z.len(), n);
        let mut y = vec![0.0; n];
        for k in 0..n {
            let col = self.col(k);
            let zk = z[k];
            if zk != 0.0 {
                for i in k..n {
                    y[i] += col[i] * zk;
                }
            }
        }
        y
    }
}

/// `dot(a, b)` with a plain fixed-order loop.
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut s = 0.0;
    for i in 0..a.len() {
        s += a[i] * b[i];
    }
    s
}
