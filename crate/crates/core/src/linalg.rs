//! Small dense symmetric helpers.
//!
//! All matrices handled here are p×p with p at most a handful, so a plain
//! Cholesky factorization is both the fastest and the most transparent route.
//! A pivot at or below [`PIVOT_THRESHOLD`] times the largest diagonal entry
//! declares the matrix singular.

use nalgebra::{DMatrix, DVector};

/// Relative pivot threshold for declaring a symmetric matrix singular.
pub const PIVOT_THRESHOLD: f64 = 1e-12;

/// Lower-triangular Cholesky factor `L` with `A = L Lᵀ`.
#[derive(Debug, Clone)]
pub struct Cholesky {
    l: DMatrix<f64>,
}

impl Cholesky {
    /// Factorizes a symmetric matrix, reading only its lower triangle.
    /// Returns `None` when a pivot falls below the singularity threshold.
    pub fn new(a: &DMatrix<f64>) -> Option<Self> {
        let n = a.nrows();
        debug_assert_eq!(n, a.ncols());
        let scale = (0..n).map(|i| a[(i, i)].abs()).fold(0.0, f64::max);
        if n > 0 && !(scale > 0.0 && scale.is_finite()) {
            return None;
        }
        let tol = PIVOT_THRESHOLD * scale;
        let mut l = DMatrix::<f64>::zeros(n, n);
        for j in 0..n {
            let mut d = a[(j, j)];
            for k in 0..j {
                d -= l[(j, k)] * l[(j, k)];
            }
            if !(d > tol) {
                return None;
            }
            let d = d.sqrt();
            l[(j, j)] = d;
            for i in (j + 1)..n {
                let mut s = a[(i, j)];
                for k in 0..j {
                    s -= l[(i, k)] * l[(j, k)];
                }
                l[(i, j)] = s / d;
            }
        }
        Some(Cholesky { l })
    }

    pub fn logdet(&self) -> f64 {
        2.0 * self.l.diagonal().iter().map(|d| d.ln()).sum::<f64>()
    }

    pub fn solve(&self, b: &DVector<f64>) -> DVector<f64> {
        let n = self.l.nrows();
        let mut y = b.clone();
        for i in 0..n {
            let mut s = y[i];
            for k in 0..i {
                s -= self.l[(i, k)] * y[k];
            }
            y[i] = s / self.l[(i, i)];
        }
        for i in (0..n).rev() {
            let mut s = y[i];
            for k in (i + 1)..n {
                s -= self.l[(k, i)] * y[k];
            }
            y[i] = s / self.l[(i, i)];
        }
        y
    }

    pub fn inverse(&self) -> DMatrix<f64> {
        let n = self.l.nrows();
        let mut inv = DMatrix::<f64>::zeros(n, n);
        for j in 0..n {
            let mut e = DVector::<f64>::zeros(n);
            e[j] = 1.0;
            inv.set_column(j, &self.solve(&e));
        }
        symmetrize(&mut inv);
        inv
    }
}

/// log det of a symmetric nonnegative-definite matrix; `-inf` when singular.
pub fn sym_logdet(a: &DMatrix<f64>) -> f64 {
    Cholesky::new(a).map_or(f64::NEG_INFINITY, |c| c.logdet())
}

/// Replaces `a` by `(a + aᵀ)/2`.
pub fn symmetrize(a: &mut DMatrix<f64>) {
    let n = a.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let m = 0.5 * (a[(i, j)] + a[(j, i)]);
            a[(i, j)] = m;
            a[(j, i)] = m;
        }
    }
}

pub fn min_eigenvalue(a: &DMatrix<f64>) -> f64 {
    let mut s = a.clone();
    symmetrize(&mut s);
    s.symmetric_eigenvalues().iter().copied().fold(f64::INFINITY, f64::min)
}

/// Largest entrywise deviation relative to the largest entry of `reference`.
pub fn max_relative_deviation(a: &DMatrix<f64>, reference: &DMatrix<f64>) -> f64 {
    let scale = reference.iter().map(|x| x.abs()).fold(0.0, f64::max);
    let diff = (a - reference).iter().map(|x| x.abs()).fold(0.0, f64::max);
    if scale == 0.0 {
        diff
    } else {
        diff / scale
    }
}
