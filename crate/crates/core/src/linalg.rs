//! Small dense kernels shared by the recursion: Gram products and a
//! pivot-checked Cholesky factorization for symmetric positive-definite
//! systems.

use nalgebra::{DMatrix, DVector};

/// Smallest pivot must exceed this fraction of the largest pivot.
pub const PIVOT_RATIO: f64 = 1e-12;

/// `XᵗX`, filled from the upper triangle so the result is exactly symmetric.
pub fn gram(x: &DMatrix<f64>) -> DMatrix<f64> {
    let q = x.ncols();
    let mut g = DMatrix::zeros(q, q);
    for i in 0..q {
        let ci = x.column(i);
        for j in i..q {
            let v = ci.dot(&x.column(j));
            g[(i, j)] = v;
            g[(j, i)] = v;
        }
    }
    g
}

/// `Xᵗy`.
pub fn cross(x: &DMatrix<f64>, y: &DVector<f64>) -> DVector<f64> {
    x.tr_mul(y)
}

/// Lower-triangular Cholesky factor `L` with `A = L Lᵗ`.
#[derive(Debug, Clone)]
pub struct SpdFactor {
    l: DMatrix<f64>,
}

impl SpdFactor {
    /// Factorizes `a`, reading only its lower triangle.
    ///
    /// Returns `None` when a pivot is non-positive or when the smallest
    /// pivot is at most [`PIVOT_RATIO`] times the largest one.
    pub fn new(a: &DMatrix<f64>) -> Option<Self> {
        let n = a.nrows();
        debug_assert_eq!(n, a.ncols());
        let mut l = DMatrix::<f64>::zeros(n, n);
        let mut min_pivot = f64::INFINITY;
        let mut max_pivot = 0.0_f64;
        for j in 0..n {
            let mut d = a[(j, j)];
            for k in 0..j {
                d -= l[(j, k)] * l[(j, k)];
            }
            if !(d > 0.0) {
                return None;
            }
            min_pivot = min_pivot.min(d);
            max_pivot = max_pivot.max(d);
            let ljj = d.sqrt();
            l[(j, j)] = ljj;
            for i in (j + 1)..n {
                let mut s = a[(i, j)];
                for k in 0..j {
                    s -= l[(i, k)] * l[(j, k)];
                }
                l[(i, j)] = s / ljj;
            }
        }
        if n == 0 || min_pivot <= PIVOT_RATIO * max_pivot {
            return None;
        }
        Some(Self { l })
    }

    /// Solves `A x = b` by forward then backward substitution.
    pub fn solve(&self, b: &DVector<f64>) -> DVector<f64> {
        let n = self.l.nrows();
        let mut x = b.clone();
        for i in 0..n {
            let mut s = x[i];
            for k in 0..i {
                s -= self.l[(i, k)] * x[k];
            }
            x[i] = s / self.l[(i, i)];
        }
        for i in (0..n).rev() {
            let mut s = x[i];
            for k in (i + 1)..n {
                s -= self.l[(k, i)] * x[k];
            }
            x[i] = s / self.l[(i, i)];
        }
        x
    }

    pub fn lower(&self) -> &DMatrix<f64> {
        &self.l
    }
}
