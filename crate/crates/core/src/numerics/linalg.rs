//! Small dense linear algebra: a row-major matrix, Cholesky factorisations
//! and the solves the model fits need. Problem sizes here are tiny (a dozen
//! columns at most) so everything is plain loops.

use crate::error::{Error, Result};

/// Collinearity threshold for pivots, relative to the original diagonal.
const PIVOT_REL_TOL: f64 = 1e-11;
/// Diagonal entries this small relative to the largest one count as zero.
const DIAG_FLOOR_REL: f64 = 1e-14;
/// Jitter tolerance for positive semi-definite factorisation.
pub const PSD_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
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
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn from_row_major(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch {
                context: "matrix storage",
                expected: rows * cols,
                found: data.len(),
            });
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            if r.len() != cols {
                return Err(Error::DimensionMismatch {
                    context: "matrix row",
                    expected: cols,
                    found: r.len(),
                });
            }
            data.extend_from_slice(r);
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            data,
        })
    }

    /// Builds an `n x columns.len()` matrix from column vectors of length `n`.
    pub fn from_columns(n: usize, columns: &[&[f64]]) -> Result<Self> {
        let cols = columns.len();
        let mut data = vec![0.0; n * cols];
        for (j, c) in columns.iter().enumerate() {
            if c.len() != n {
                return Err(Error::DimensionMismatch {
                    context: "matrix column",
                    expected: n,
                    found: c.len(),
                });
            }
            for (i, v) in c.iter().enumerate() {
                data[i * cols + j] = *v;
            }
        }
        Ok(Self { rows: n, cols, data })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self.get(i, j)).collect()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn transpose(&self) -> Matrix {
        let mut t = Matrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t.set(j, i, self.get(i, j));
            }
        }
        t
    }

    pub fn matmul(&self, other: &Matrix) -> Result<Matrix> {
        if self.cols != other.rows {
            return Err(Error::DimensionMismatch {
                context: "matrix product",
                expected: self.cols,
                found: other.rows,
            });
        }
        let mut out = Matrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self.get(i, k);
                if a == 0.0 {
                    continue;
                }
                for j in 0..other.cols {
                    out.data[i * other.cols + j] += a * other.get(k, j);
                }
            }
        }
        Ok(out)
    }

    pub fn mul_vec(&self, v: &[f64]) -> Result<Vec<f64>> {
        if v.len() != self.cols {
            return Err(Error::DimensionMismatch {
                context: "matrix-vector product",
                expected: self.cols,
                found: v.len(),
            });
        }
        Ok((0..self.rows).map(|i| dot(self.row(i), v)).collect())
    }

    /// `Xᵀ diag(w) X`.
    pub fn weighted_gram(&self, w: &[f64]) -> Matrix {
        debug_assert_eq!(w.len(), self.rows);
        let p = self.cols;
        let mut g = Matrix::zeros(p, p);
        for (i, &wi) in w.iter().enumerate() {
            if wi == 0.0 {
                continue;
            }
            let r = self.row(i);
            for a in 0..p {
                let ra = wi * r[a];
                for b in 0..=a {
                    g.data[a * p + b] += ra * r[b];
                }
            }
        }
        for a in 0..p {
            for b in 0..a {
                g.data[b * p + a] = g.data[a * p + b];
            }
        }
        g
    }

    /// `Xᵀ diag(w) y`.
    pub fn weighted_cross(&self, w: &[f64], y: &[f64]) -> Vec<f64> {
        let p = self.cols;
        let mut out = vec![0.0; p];
        for i in 0..self.rows {
            let wy = w[i] * y[i];
            if wy == 0.0 {
                continue;
            }
            for (o, x) in out.iter_mut().zip(self.row(i)) {
                *o += wy * x;
            }
        }
        out
    }

    pub fn select_columns(&self, keep: &[usize]) -> Matrix {
        let mut out = Matrix::zeros(self.rows, keep.len());
        for i in 0..self.rows {
            for (jj, &j) in keep.iter().enumerate() {
                out.set(i, jj, self.get(i, j));
            }
        }
        out
    }

    pub fn select_rows(&self, idx: &[usize]) -> Matrix {
        let mut data = Vec::with_capacity(idx.len() * self.cols);
        for &i in idx {
            data.extend_from_slice(self.row(i));
        }
        Matrix {
            rows: idx.len(),
            cols: self.cols,
            data,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Quadratic form `dᵀ A d`.
    pub fn quad_form(&self, d: &[f64]) -> f64 {
        let mut s = 0.0;
        for i in 0..self.rows {
            s += d[i] * dot(self.row(i), d);
        }
        s
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(v: &[f64]) -> f64 {
    dot(v, v).sqrt()
}

/// Cholesky factor `A = L Lᵀ` of a symmetric positive definite matrix.
#[derive(Debug, Clone)]
pub struct Cholesky {
    l: Matrix,
}

impl Cholesky {
    pub fn new(a: &Matrix) -> Result<Self> {
        let n = a.rows();
        if a.cols() != n {
            return Err(Error::DimensionMismatch {
                context: "cholesky (square matrix)",
                expected: n,
                found: a.cols(),
            });
        }
        let max_diag = (0..n).fold(0.0_f64, |m, i| m.max(a.get(i, i).abs()));
        let mut l = Matrix::zeros(n, n);
        for j in 0..n {
            let mut d = a.get(j, j);
            for k in 0..j {
                d -= l.get(j, k) * l.get(j, k);
            }
            let threshold = PIVOT_REL_TOL * a.get(j, j).max(DIAG_FLOOR_REL * max_diag);
            if !(d > threshold) || !d.is_finite() {
                return Err(Error::SingularMatrix { pivot: j, value: d });
            }
            let ljj = d.sqrt();
            l.set(j, j, ljj);
            for i in (j + 1)..n {
                let mut s = a.get(i, j);
                for k in 0..j {
                    s -= l.get(i, k) * l.get(j, k);
                }
                l.set(i, j, s / ljj);
            }
        }
        Ok(Self { l })
    }

    pub fn factor(&self) -> &Matrix {
        &self.l
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.l.rows();
        let mut x = b.to_vec();
        for i in 0..n {
            let mut s = x[i];
            for k in 0..i {
                s -= self.l.get(i, k) * x[k];
            }
            x[i] = s / self.l.get(i, i);
        }
        for i in (0..n).rev() {
            let mut s = x[i];
            for k in (i + 1)..n {
                s -= self.l.get(k, i) * x[k];
            }
            x[i] = s / self.l.get(i, i);
        }
        x
    }

    pub fn inverse(&self) -> Matrix {
        let n = self.l.rows();
        let mut inv = Matrix::zeros(n, n);
        let mut e = vec![0.0; n];
        for j in 0..n {
            e.iter_mut().for_each(|v| *v = 0.0);
            e[j] = 1.0;
            let col = self.solve(&e);
            for i in 0..n {
                inv.set(i, j, col[i]);
            }
        }
        // symmetrise
        for i in 0..n {
            for j in 0..i {
                let v = 0.5 * (inv.get(i, j) + inv.get(j, i));
                inv.set(i, j, v);
                inv.set(j, i, v);
            }
        }
        inv
    }
}

/// Solves `A x = b` for symmetric positive definite `A`.
pub fn cholesky_solve(a: &Matrix, b: &[f64]) -> Result<Vec<f64>> {
    if b.len() != a.rows() {
        return Err(Error::DimensionMismatch {
            context: "cholesky_solve right-hand side",
            expected: a.rows(),
            found: b.len(),
        });
    }
    Ok(Cholesky::new(a)?.solve(b))
}

/// Diagonally pivoted Cholesky of a positive semi-definite matrix. Returns
/// `L` (rows in the original order) with `A = L Lᵀ`; rank-deficient trailing
/// columns are zero. Fails if a Schur-complement pivot is below `-PSD_TOL`
/// (scaled by the largest diagonal entry).
pub fn psd_factor(a: &Matrix) -> Result<Matrix> {
    let n = a.rows();
    if a.cols() != n {
        return Err(Error::DimensionMismatch {
            context: "psd_factor (square matrix)",
            expected: n,
            found: a.cols(),
        });
    }
    let max_diag = (0..n).fold(0.0_f64, |m, i| m.max(a.get(i, i).abs()));
    let tol = PSD_TOL * max_diag.max(1.0);
    let mut work = a.clone();
    let mut perm: Vec<usize> = (0..n).collect();
    let mut l = Matrix::zeros(n, n);
    for k in 0..n {
        let mut p = k;
        for i in (k + 1)..n {
            if work.get(i, i) > work.get(p, p) {
                p = i;
            }
        }
        if p != k {
            swap_sym(&mut work, k, p);
            for c in 0..k {
                let t = l.get(k, c);
                l.set(k, c, l.get(p, c));
                l.set(p, c, t);
            }
            perm.swap(k, p);
        }
        let d = work.get(k, k);
        if !d.is_finite() {
            return Err(Error::NotPositiveSemidefinite { pivot: perm[k], value: d });
        }
        if d <= tol {
            // remaining Schur block must vanish
            for i in k..n {
                let v = work.get(i, i);
                if v < -tol {
                    return Err(Error::NotPositiveSemidefinite { pivot: perm[i], value: v });
                }
                for j in k..i {
                    // a PSD block with diagonal <= tol has |off-diagonal| <= tol
                    let off = work.get(i, j);
                    if off.abs() > 1e3 * tol {
                        return Err(Error::NotPositiveSemidefinite { pivot: perm[i], value: off });
                    }
                }
            }
            break;
        }
        let lkk = d.sqrt();
        l.set(k, k, lkk);
        for i in (k + 1)..n {
            l.set(i, k, work.get(i, k) / lkk);
        }
        for i in (k + 1)..n {
            for j in (k + 1)..=i {
                let v = work.get(i, j) - l.get(i, k) * l.get(j, k);
                work.set(i, j, v);
                work.set(j, i, v);
            }
        }
    }
    let mut out = Matrix::zeros(n, n);
    for (i, &orig) in perm.iter().enumerate() {
        for c in 0..n {
            out.set(orig, c, l.get(i, c));
        }
    }
    Ok(out)
}

fn swap_sym(m: &mut Matrix, a: usize, b: usize) {
    let n = m.rows();
    for j in 0..n {
        let t = m.get(a, j);
        m.set(a, j, m.get(b, j));
        m.set(b, j, t);
    }
    for i in 0..n {
        let t = m.get(i, a);
        m.set(i, a, m.get(i, b));
        m.set(i, b, t);
    }
}
