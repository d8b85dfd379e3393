//! Minimal dense row-major matrix used for moment and loss algebra.

use crate::error::{Error, Result};
use crate::num::Scalar;

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Mat<F> {
    rows: usize,
    cols: usize,
    data: Vec<F>,
}

impl<F: Scalar> Mat<F> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Mat {
            rows,
            cols,
            data: vec![F::zero(); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = F::one();
        }
        m
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<F>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Shape(format!(
                "{}x{} matrix needs {} entries, got {}",
                rows,
                cols,
                rows * cols,
                data.len()
            )));
        }
        Ok(Mat { rows, cols, data })
    }

    /// Builds a matrix from a closure over (row, col).
    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> F) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Mat { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[F] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [F] {
        &mut self.data
    }

    pub fn row(&self, i: usize) -> &[F] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [F] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn transpose(&self) -> Mat<F> {
        Mat::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    /// Matrix-vector product.
    pub fn matvec(&self, v: &[F]) -> Result<Vec<F>> {
        if v.len() != self.cols {
            return Err(Error::Shape(format!(
                "matvec: matrix has {} cols, vector has {}",
                self.cols,
                v.len()
            )));
        }
        Ok((0..self.rows)
            .map(|i| dot(self.row(i), v))
            .collect())
    }

    /// Matrix product self * other.
    pub fn matmul(&self, other: &Mat<F>) -> Result<Mat<F>> {
        if self.cols != other.rows {
            return Err(Error::Shape(format!(
                "matmul: {}x{} * {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = Mat::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == F::zero() {
                    continue;
                }
                let orow = other.row(k);
                let out_row = out.row_mut(i);
                for j in 0..other.cols {
                    out_row[j] = out_row[j] + a * orow[j];
                }
            }
        }
        Ok(out)
    }

    /// Rank-one update: self += w * v vᵀ.
    pub fn add_outer(&mut self, w: F, v: &[F]) {
        debug_assert_eq!(self.rows, v.len());
        debug_assert_eq!(self.cols, v.len());
        for i in 0..self.rows {
            let wi = w * v[i];
            if wi == F::zero() {
                continue;
            }
            let row = self.row_mut(i);
            for j in 0..v.len() {
                row[j] = row[j] + wi * v[j];
            }
        }
    }

    /// self += w * other, entrywise.
    pub fn add_scaled(&mut self, w: F, other: &Mat<F>) {
        debug_assert_eq!(self.rows, other.rows);
        debug_assert_eq!(self.cols, other.cols);
        for (a, b) in self.data.iter_mut().zip(other.data.iter()) {
            *a = *a + w * *b;
        }
    }

    pub fn scale(&mut self, w: F) {
        for a in self.data.iter_mut() {
            *a = *a * w;
        }
    }

    pub fn max_abs(&self) -> F {
        self.data
            .iter()
            .fold(F::zero(), |m, &x| m.max(x.abs()))
    }

    pub fn max_abs_diff(&self, other: &Mat<F>) -> F {
        debug_assert_eq!(self.data.len(), other.data.len());
        self.data
            .iter()
            .zip(other.data.iter())
            .fold(F::zero(), |m, (&a, &b)| m.max((a - b).abs()))
    }

    pub fn trace(&self) -> F {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).sum()
    }

    pub fn frobenius_norm(&self) -> F {
        self.data
            .iter()
            .map(|&x| x * x)
            .sum::<F>()
            .sqrt()
    }

    /// Largest |a_ij - a_ji| over all pairs.
    pub fn asymmetry(&self) -> F {
        debug_assert_eq!(self.rows, self.cols);
        let mut m = F::zero();
        for i in 0..self.rows {
            for j in (i + 1)..self.cols {
                m = m.max((self[(i, j)] - self[(j, i)]).abs());
            }
        }
        m
    }

    /// Forces exact symmetry by averaging with the transpose.
    pub fn symmetrize(&mut self) {
        debug_assert_eq!(self.rows, self.cols);
        let half = F::of(0.5);
        for i in 0..self.rows {
            for j in (i + 1)..self.cols {
                let v = (self[(i, j)] + self[(j, i)]) * half;
                self[(i, j)] = v;
                self[(j, i)] = v;
            }
        }
    }
}

impl<F: Scalar> std::ops::Index<(usize, usize)> for Mat<F> {
    type Output = F;
    fn index(&self, (i, j): (usize, usize)) -> &F {
        &self.data[i * self.cols + j]
    }
}

impl<F: Scalar> std::ops::IndexMut<(usize, usize)> for Mat<F> {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut F {
        &mut self.data[i * self.cols + j]
    }
}

pub fn dot<F: Scalar>(a: &[F], b: &[F]) -> F {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b.iter()).map(|(&x, &y)| x * y).sum()
}

pub fn norm2<F: Scalar>(a: &[F]) -> F {
    dot(a, a).sqrt()
}

/// Solution of an SPD system together with a cheap conditioning probe.
#[derive(Debug, Clone)]
pub struct CholeskySolution<F> {
    pub solutions: Vec<Vec<F>>,
    /// Smallest and largest squared Cholesky diagonal; their ratio is a
    /// lower bound on the condition number.
    pub pivot_range: (F, F),
}

impl<F: Scalar> CholeskySolution<F> {
    pub fn condition_estimate(&self) -> F {
        let (lo, hi) = self.pivot_range;
        hi / lo
    }
}

/// Solves A x = b for symmetric positive-definite A via Cholesky.
///
/// Returns the factor's smallest and largest squared diagonal so callers can
/// report conditioning. Fails if a pivot is not strictly positive.
pub fn cholesky_solve<F: Scalar>(a: &Mat<F>, rhs: &[Vec<F>]) -> Result<CholeskySolution<F>> {
    let n = a.rows();
    if a.cols() != n {
        return Err(Error::Shape("cholesky: matrix not square".into()));
    }
    let mut l = Mat::<F>::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            let mut s = a[(i, j)];
            for k in 0..j {
                s = s - l[(i, k)] * l[(j, k)];
            }
            if i == j {
                if s <= F::zero() {
                    return Err(Error::Numerical(format!(
                        "cholesky: non-positive pivot at {} ({})",
                        i, s
                    )));
                }
                l[(i, j)] = s.sqrt();
            } else {
                l[(i, j)] = s / l[(j, j)];
            }
        }
    }
    let mut pivot_lo = F::infinity();
    let mut pivot_hi = F::zero();
    for i in 0..n {
        let p = l[(i, i)] * l[(i, i)];
        pivot_lo = pivot_lo.min(p);
        pivot_hi = pivot_hi.max(p);
    }
    let mut out = Vec::with_capacity(rhs.len());
    for b in rhs {
        if b.len() != n {
            return Err(Error::Shape("cholesky: rhs length mismatch".into()));
        }
        // forward then backward substitution
        let mut y = vec![F::zero(); n];
        for i in 0..n {
            let mut s = b[i];
            for k in 0..i {
                s = s - l[(i, k)] * y[k];
            }
            y[i] = s / l[(i, i)];
        }
        let mut x = vec![F::zero(); n];
        for i in (0..n).rev() {
            let mut s = y[i];
            for k in (i + 1)..n {
                s = s - l[(k, i)] * x[k];
            }
            x[i] = s / l[(i, i)];
        }
        out.push(x);
    }
    Ok(CholeskySolution {
        solutions: out,
        pivot_range: (pivot_lo, pivot_hi),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matmul_identity() {
        let a = Mat::from_fn(3, 3, |i, j| (i * 3 + j) as f64);
        let id = Mat::identity(3);
        assert_eq!(a.matmul(&id).unwrap(), a);
    }

    #[test]
    fn cholesky_solves_spd_system() {
        // A = Bᵀ B + I is SPD
        let b = Mat::from_fn(3, 3, |i, j| ((i + 2 * j) % 5) as f64 * 0.3);
        let mut a = b.transpose().matmul(&b).unwrap();
        for i in 0..3 {
            a[(i, i)] += 1.0;
        }
        let x_true = vec![1.0, -2.0, 0.5];
        let rhs = a.matvec(&x_true).unwrap();
        let sol = cholesky_solve(&a, &[rhs]).unwrap();
        let x = &sol.solutions[0];
        for (xi, ti) in x.iter().zip(x_true.iter()) {
            assert!((xi - ti).abs() < 1e-12);
        }
        assert!(sol.condition_estimate() >= 1.0);
    }

    #[test]
    fn cholesky_rejects_indefinite() {
        let mut a = Mat::<f64>::identity(2);
        a[(1, 1)] = -1.0;
        assert!(cholesky_solve(&a, &[vec![1.0, 1.0]]).is_err());
    }

    #[test]
    fn outer_accumulation_matches_matmul() {
        let v = vec![1.0, 2.0, 3.0];
        let mut m = Mat::zeros(3, 3);
        m.add_outer(2.0, &v);
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(m[(i, j)], 2.0 * v[i] * v[j]);
            }
        }
    }
}
