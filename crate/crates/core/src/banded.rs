//! Banded LU factorization with partial pivoting.
//!
//! Rows are stored as dense windows of width `2*kl + ku + 1` starting at
//! column `row - kl`; row interchanges during elimination can push the upper
//! bandwidth of `U` up to `kl + ku`, which the window accommodates.

use nalgebra_sparse::CsrMatrix;

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct BandedLu {
    n: usize,
    kl: usize,
    ku: usize,
    width: usize,
    // row-major windows holding U after factorization
    rows: Vec<f64>,
    // multipliers, `kl` per column
    lower: Vec<f64>,
    pivots: Vec<usize>,
}

impl BandedLu {
    /// Factorizes a square sparse matrix whose nonzeros lie within the given bands.
    ///
    /// A pivot whose magnitude is at most `rel_pivot_tol * max|a_ij|` is reported
    /// as [`Error::SingularOperator`].
    pub fn factorize(a: &CsrMatrix<f64>, kl: usize, ku: usize, rel_pivot_tol: f64) -> Result<Self> {
        let n = a.nrows();
        if a.ncols() != n {
            return Err(Error::DimensionMismatch { expected: n, actual: a.ncols() });
        }
        let width = 2 * kl + ku + 1;
        let mut rows = vec![0.0; n * width];
        let mut scale = 0.0f64;
        for (i, row) in a.row_iter().enumerate() {
            for (&j, &v) in row.col_indices().iter().zip(row.values()) {
                if j + kl < i || j > i + ku {
                    return Err(Error::InvalidInput(format!(
                        "entry ({i}, {j}) lies outside the declared band"
                    )));
                }
                rows[i * width + (j + kl - i)] += v;
                scale = scale.max(v.abs());
            }
        }
        let tol = rel_pivot_tol * scale;
        let mut lower = vec![0.0; n * kl.max(1)];
        let mut pivots = vec![0; n];

        for k in 0..n {
            let last = (k + kl).min(n - 1);
            // pivot search in column k
            let mut p = k;
            let mut best = rows[k * width + kl].abs();
            for r in k + 1..=last {
                let v = rows[r * width + (k + kl - r)].abs();
                if v > best {
                    best = v;
                    p = r;
                }
            }
            if best <= tol || !best.is_finite() {
                return Err(Error::SingularOperator { row: k, pivot: best });
            }
            pivots[k] = p;
            let hi = (k + kl + ku).min(n - 1);
            if p != k {
                // swap rows k and p over columns k..=hi; the two windows are offset
                for c in k..=hi {
                    let ik = k * width + (c + kl - k);
                    let ip = p * width + (c + kl - p);
                    rows.swap(ik, ip);
                }
            }
            let pivot = rows[k * width + kl];
            for r in k + 1..=last {
                let ir = r * width + (k + kl - r);
                let m = rows[ir] / pivot;
                lower[k * kl + (r - k - 1)] = m;
                rows[ir] = 0.0;
                if m == 0.0 {
                    continue;
                }
                let (head, tail) = rows.split_at_mut(r * width);
                let urow = &head[k * width..(k + 1) * width];
                let trow = &mut tail[..width];
                for c in k + 1..=hi {
                    trow[c + kl - r] -= m * urow[c + kl - k];
                }
            }
        }
        Ok(Self { n, kl, ku, width, rows, lower, pivots })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Solves `A x = b` in place.
    pub fn solve_in_place(&self, b: &mut [f64]) {
        let (n, kl, ku, width) = (self.n, self.kl, self.ku, self.width);
        assert_eq!(b.len(), n);
        for k in 0..n {
            let p = self.pivots[k];
            if p != k {
                b.swap(k, p);
            }
            let bk = b[k];
            if bk != 0.0 {
                let last = (k + kl).min(n - 1);
                for r in k + 1..=last {
                    b[r] -= self.lower[k * kl + (r - k - 1)] * bk;
                }
            }
        }
        for k in (0..n).rev() {
            let hi = (k + kl + ku).min(n - 1);
            let row = &self.rows[k * width..(k + 1) * width];
            let mut s = b[k];
            for c in k + 1..=hi {
                s -= row[c + kl - k] * b[c];
            }
            b[k] = s / row[kl];
        }
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut x = b.to_vec();
        self.solve_in_place(&mut x);
        x
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{DMatrix, DVector};
    use nalgebra_sparse::CooMatrix;

    fn banded_fixture(n: usize, kl: usize, ku: usize, seed: u64) -> (CsrMatrix<f64>, DMatrix<f64>) {
        // deterministic pseudo-random entries, small diagonal to force pivoting
        let mut state = seed;
        let mut next = || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((state >> 11) as f64 / (1u64 << 53) as f64) - 0.5
        };
        let mut coo = CooMatrix::new(n, n);
        let mut dense = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in i.saturating_sub(kl)..=(i + ku).min(n - 1) {
                let v = if i == j { 0.01 * next() } else { next() };
                coo.push(i, j, v);
                dense[(i, j)] = v;
            }
        }
        (CsrMatrix::from(&coo), dense)
    }

    #[test]
    fn matches_dense_lu_with_pivoting() {
        let (a, dense) = banded_fixture(40, 3, 2, 7);
        let lu = BandedLu::factorize(&a, 3, 2, 1e-14).unwrap();
        let b: Vec<f64> = (0..40).map(|i| (i as f64 * 0.37).sin()).collect();
        let x = lu.solve(&b);
        let reference = dense.lu().solve(&DVector::from_vec(b)).unwrap();
        let err = (DVector::from_vec(x) - reference).amax();
        assert!(err < 1e-9, "err = {err}");
    }

    #[test]
    fn detects_singular_matrix() {
        let mut coo = CooMatrix::new(3, 3);
        for &(i, j, v) in &[(0, 0, 1.0), (0, 1, -1.0), (1, 0, -1.0), (1, 1, 2.0), (1, 2, -1.0), (2, 1, -1.0), (2, 2, 1.0)] {
            coo.push(i, j, v);
        }
        let a = CsrMatrix::from(&coo);
        assert!(matches!(BandedLu::factorize(&a, 1, 1, 1e-12), Err(Error::SingularOperator { .. })));
    }

    #[test]
    fn rejects_entries_outside_band() {
        let mut coo = CooMatrix::new(3, 3);
        coo.push(0, 2, 1.0);
        coo.push(0, 0, 1.0);
        let a = CsrMatrix::from(&coo);
        assert!(BandedLu::factorize(&a, 1, 1, 1e-12).is_err());
    }
}
