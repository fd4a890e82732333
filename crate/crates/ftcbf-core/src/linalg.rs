//! Small dense linear algebra for the tiny systems that show up in barrier
//! and QP computations. Row-major storage, partial-pivot elimination, and a
//! cyclic Jacobi eigensolver for symmetric matrices.

use alloc::vec;
use alloc::vec::Vec;

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Mat {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.set(i, i, 1.0);
        }
        m
    }

    /// Builds a matrix from a row-major slice. Panics if the length is not
    /// `rows * cols`.
    pub fn from_row_major(rows: usize, cols: usize, data: &[f64]) -> Self {
        assert_eq!(
            data.len(),
            rows * cols,
            "row-major data length {} does not match {}x{}",
            data.len(),
            rows,
            cols
        );
        Self {
            rows,
            cols,
            data: data.to_vec(),
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    /// `A * v` for a column vector `v`.
    pub fn matvec(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(v.len(), self.cols, "matvec dimension mismatch");
        let mut out = vec![0.0; self.rows];
        for r in 0..self.rows {
            out[r] = dot(&self.data[r * self.cols..(r + 1) * self.cols], v);
        }
        out
    }

    /// `w^T A` for a row vector `w`, returned as a plain vector of length
    /// `cols`. This is the shape of a Lie-derivative row `grad(h)^T g(x)`.
    pub fn left_mul(&self, w: &[f64]) -> Vec<f64> {
        assert_eq!(w.len(), self.rows, "left_mul dimension mismatch");
        let mut out = vec![0.0; self.cols];
        for r in 0..self.rows {
            let wr = w[r];
            if wr == 0.0 {
                continue;
            }
            let row = &self.data[r * self.cols..(r + 1) * self.cols];
            for c in 0..self.cols {
                out[c] += wr * row[c];
            }
        }
        out
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    /// Largest absolute asymmetry `max |a_ij - a_ji|`; zero for non-square.
    pub fn max_asymmetry(&self) -> f64 {
        if !self.is_square() {
            return 0.0;
        }
        let mut worst = 0.0_f64;
        for i in 0..self.rows {
            for j in (i + 1)..self.cols {
                let d = libm::fabs(self.get(i, j) - self.get(j, i));
                if d > worst {
                    worst = d;
                }
            }
        }
        worst
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut s = 0.0;
    for (x, y) in a.iter().zip(b) {
        s += x * y;
    }
    s
}

#[inline]
pub fn norm2(a: &[f64]) -> f64 {
    libm::sqrt(dot(a, a))
}

/// `y += alpha * x`
#[inline]
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// Solves `A x = b` by Gaussian elimination with partial pivoting.
/// Returns `None` when a pivot falls below `1e-12` times the largest
/// absolute entry of `A` (treated as singular).
pub fn solve_linear(a: &Mat, b: &[f64]) -> Option<Vec<f64>> {
    assert!(a.is_square(), "solve_linear requires a square matrix");
    let n = a.rows();
    assert_eq!(b.len(), n);
    if n == 0 {
        return Some(Vec::new());
    }

    let mut m = a.clone();
    let mut rhs = b.to_vec();
    let scale = m
        .data
        .iter()
        .fold(0.0_f64, |acc, v| if libm::fabs(*v) > acc { libm::fabs(*v) } else { acc });
    let tol = 1e-12 * if scale > 1.0 { scale } else { 1.0 };

    for col in 0..n {
        let mut pivot_row = col;
        let mut pivot_mag = libm::fabs(m.get(col, col));
        for r in (col + 1)..n {
            let mag = libm::fabs(m.get(r, col));
            if mag > pivot_mag {
                pivot_mag = mag;
                pivot_row = r;
            }
        }
        if pivot_mag <= tol {
            return None;
        }
        if pivot_row != col {
            for c in 0..n {
                let tmp = m.get(col, c);
                m.set(col, c, m.get(pivot_row, c));
                m.set(pivot_row, c, tmp);
            }
            rhs.swap(col, pivot_row);
        }
        let pivot = m.get(col, col);
        for r in (col + 1)..n {
            let factor = m.get(r, col) / pivot;
            if factor == 0.0 {
                continue;
            }
            for c in col..n {
                let v = m.get(r, c) - factor * m.get(col, c);
                m.set(r, c, v);
            }
            rhs[r] -= factor * rhs[col];
        }
    }

    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let mut s = rhs[r];
        for c in (r + 1)..n {
            s -= m.get(r, c) * x[c];
        }
        x[r] = s / m.get(r, r);
    }
    Some(x)
}

/// Eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.
/// Returns eigenvalues in ascending order and the matching eigenvectors as
/// matrix columns. The input is assumed symmetric; only the given entries
/// are read.
pub fn sym_eigen(a: &Mat) -> (Vec<f64>, Mat) {
    assert!(a.is_square(), "sym_eigen requires a square matrix");
    let n = a.rows();
    let mut m = a.clone();
    let mut v = Mat::identity(n);
    if n <= 1 {
        return (m.data.clone(), v);
    }

    let frob = norm2(&m.data);
    let stop = 1e-14 * if frob > 1.0 { frob } else { 1.0 };

    for _sweep in 0..64 {
        let mut off = 0.0;
        for i in 0..n {
            for j in (i + 1)..n {
                off += m.get(i, j) * m.get(i, j);
            }
        }
        if libm::sqrt(off) <= stop {
            break;
        }
        for p in 0..(n - 1) {
            for q in (p + 1)..n {
                let apq = m.get(p, q);
                if libm::fabs(apq) <= stop * 1e-2 {
                    continue;
                }
                let theta = (m.get(q, q) - m.get(p, p)) / (2.0 * apq);
                let t = if libm::fabs(theta) > 1e12 {
                    1.0 / (2.0 * theta)
                } else {
                    let sign = if theta >= 0.0 { 1.0 } else { -1.0 };
                    sign / (libm::fabs(theta) + libm::sqrt(theta * theta + 1.0))
                };
                let c = 1.0 / libm::sqrt(t * t + 1.0);
                let s = t * c;

                for k in 0..n {
                    let mkp = m.get(k, p);
                    let mkq = m.get(k, q);
                    m.set(k, p, c * mkp - s * mkq);
                    m.set(k, q, s * mkp + c * mkq);
                }
                for k in 0..n {
                    let mpk = m.get(p, k);
                    let mqk = m.get(q, k);
                    m.set(p, k, c * mpk - s * mqk);
                    m.set(q, k, s * mpk + c * mqk);
                }
                for k in 0..n {
                    let vkp = v.get(k, p);
                    let vkq = v.get(k, q);
                    v.set(k, p, c * vkp - s * vkq);
                    v.set(k, q, s * vkp + c * vkq);
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| {
        m.get(i, i)
            .partial_cmp(&m.get(j, j))
            .unwrap_or(core::cmp::Ordering::Equal)
    });
    let vals: Vec<f64> = order.iter().map(|&i| m.get(i, i)).collect();
    let mut vecs = Mat::zeros(n, n);
    for (newcol, &oldcol) in order.iter().enumerate() {
        for k in 0..n {
            vecs.set(k, newcol, v.get(k, oldcol));
        }
    }
    (vals, vecs)
}
