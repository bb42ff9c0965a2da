//! Small dense row-major matrix type and the factorizations the solvers need.

use std::ops::{Index, IndexMut};

use thiserror::Error;

use crate::scalar::{axpy, dot, Scalar};

#[derive(Debug, Error, Clone, Copy, PartialEq, Eq)]
#[error("matrix is not positive definite (pivot {pivot})")]
pub struct NotPositiveDefinite {
    pub pivot: usize,
}

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Scalar> Matrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![T::zero(); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = T::one();
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    /// Builds a matrix from equally long rows. `cols` is needed for the zero-row case.
    pub fn from_rows(rows: &[Vec<T>], cols: usize) -> Option<Self> {
        if rows.iter().any(|r| r.len() != cols) {
            return None;
        }
        Some(Self {
            rows: rows.len(),
            cols,
            data: rows.iter().flatten().copied().collect(),
        })
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<T>) -> Option<Self> {
        (data.len() == rows * cols).then_some(Self { rows, cols, data })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [T] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    /// `self * x`
    pub fn mul_vec(&self, x: &[T]) -> Vec<T> {
        assert_eq!(x.len(), self.cols, "mul_vec dimension mismatch");
        (0..self.rows).map(|i| dot(self.row(i), x)).collect()
    }

    /// `selfᵀ * y`
    pub fn tr_mul_vec(&self, y: &[T]) -> Vec<T> {
        assert_eq!(y.len(), self.rows, "tr_mul_vec dimension mismatch");
        let mut out = vec![T::zero(); self.cols];
        for (i, &yi) in y.iter().enumerate() {
            if yi != T::zero() {
                axpy(yi, self.row(i), &mut out);
            }
        }
        out
    }

    /// `self * selfᵀ`, the Gram matrix of the rows.
    pub fn gram_rows(&self) -> Self {
        let n = self.rows;
        let mut g = Self::zeros(n, n);
        for i in 0..n {
            for j in 0..=i {
                let v = dot(self.row(i), self.row(j));
                g[(i, j)] = v;
                g[(j, i)] = v;
            }
        }
        g
    }

    /// `selfᵀ * diag(d) * self`
    pub fn weighted_gram_cols(&self, d: &[T]) -> Self {
        assert_eq!(d.len(), self.rows);
        let n = self.cols;
        let mut g = Self::zeros(n, n);
        for (k, &dk) in d.iter().enumerate() {
            if dk == T::zero() {
                continue;
            }
            let r = self.row(k);
            for i in 0..n {
                let s = dk * r[i];
                if s == T::zero() {
                    continue;
                }
                let gi = &mut g.data[i * n..i * n + i + 1];
                axpy(s, &r[..=i], gi);
            }
        }
        for i in 0..n {
            for j in 0..i {
                g.data[j * n + i] = g.data[i * n + j];
            }
        }
        g
    }

    pub fn max_abs_asymmetry(&self) -> T {
        let mut worst = T::zero();
        for i in 0..self.rows {
            for j in 0..i {
                worst = worst.max((self[(i, j)] - self[(j, i)]).abs());
            }
        }
        worst
    }

    pub fn frobenius_norm(&self) -> T {
        dot(&self.data, &self.data).sqrt()
    }

    pub fn add_to_diagonal(&mut self, d: T) {
        for i in 0..self.rows.min(self.cols) {
            self[(i, i)] = self[(i, i)] + d;
        }
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }
}

impl<T> Index<(usize, usize)> for Matrix<T> {
    type Output = T;

    fn index(&self, (i, j): (usize, usize)) -> &T {
        &self.data[i * self.cols + j]
    }
}

impl<T> IndexMut<(usize, usize)> for Matrix<T> {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut T {
        &mut self.data[i * self.cols + j]
    }
}

/// Lower-triangular Cholesky factor `A = L Lᵀ`.
#[derive(Debug, Clone)]
pub struct Cholesky<T> {
    l: Matrix<T>,
}

impl<T: Scalar> Cholesky<T> {
    /// Factors a symmetric matrix, reading only its lower triangle.
    ///
    /// A pivot at or below `pivot_floor` is treated as a failure; pass zero
    /// for the plain positive-definiteness test.
    pub fn factor(mut a: Matrix<T>, pivot_floor: T) -> Result<Self, NotPositiveDefinite> {
        assert!(a.is_square(), "Cholesky of a non-square matrix");
        let n = a.rows;
        for i in 0..n {
            for j in 0..=i {
                let (head, tail) = a.data.split_at_mut(i * n);
                let row_i = &tail[..n];
                let s = if i == j {
                    row_i[j] - dot(&row_i[..j], &row_i[..j])
                } else {
                    row_i[j] - dot(&row_i[..j], &head[j * n..j * n + j])
                };
                if i == j {
                    if !(s > pivot_floor) || !s.is_finite() {
                        return Err(NotPositiveDefinite { pivot: i });
                    }
                    tail[j] = s.sqrt();
                } else {
                    let ljj = head[j * n + j];
                    tail[j] = s / ljj;
                }
            }
            for j in i + 1..n {
                a.data[i * n + j] = T::zero();
            }
        }
        Ok(Self { l: a })
    }

    pub fn dim(&self) -> usize {
        self.l.rows
    }

    pub fn factor_matrix(&self) -> &Matrix<T> {
        &self.l
    }

    pub fn solve_in_place(&self, b: &mut [T]) {
        let n = self.l.rows;
        assert_eq!(b.len(), n);
        for i in 0..n {
            let row = self.l.row(i);
            b[i] = (b[i] - dot(&row[..i], &b[..i])) / row[i];
        }
        for i in (0..n).rev() {
            let bi = b[i] / self.l[(i, i)];
            b[i] = bi;
            // column i of L above the diagonal is row i of Lᵀ
            let row = self.l.row(i);
            for k in 0..i {
                b[k] = b[k] - row[k] * bi;
            }
        }
    }

    pub fn solve(&self, b: &[T]) -> Vec<T> {
        let mut x = b.to_vec();
        self.solve_in_place(&mut x);
        x
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spd(n: usize) -> Matrix<f64> {
        let b = Matrix::from_fn(n, n, |i, j| ((i * 7 + j * 3) % 5) as f64 - 2.0 + if i == j { 0.5 } else { 0.0 });
        let mut a = b.gram_rows();
        a.add_to_diagonal(0.1);
        a
    }

    #[test]
    fn cholesky_solves_spd_system() {
        let a = spd(7);
        let x: Vec<f64> = (0..7).map(|i| i as f64 - 3.0).collect();
        let b = a.mul_vec(&x);
        let chol = Cholesky::factor(a, 0.0).unwrap();
        let got = chol.solve(&b);
        for (g, e) in got.iter().zip(&x) {
            assert!((g - e).abs() < 1e-9, "{g} vs {e}");
        }
    }

    #[test]
    fn cholesky_rejects_indefinite() {
        let a = Matrix::from_rows(&[vec![1.0, 2.0], vec![2.0, 1.0]], 2).unwrap();
        assert_eq!(Cholesky::factor(a, 0.0).unwrap_err().pivot, 1);
    }

    #[test]
    fn weighted_gram_matches_explicit_product() {
        let g = Matrix::from_fn(4, 3, |i, j| (i as f64 + 1.0) * (j as f64 - 1.0) + 0.5);
        let d = [1.0, 2.0, 0.0, 3.0];
        let w = g.weighted_gram_cols(&d);
        for i in 0..3 {
            for j in 0..3 {
                let e: f64 = (0..4).map(|k| g[(k, i)] * d[k] * g[(k, j)]).sum();
                assert!((w[(i, j)] - e).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn transpose_products_agree() {
        let g = Matrix::from_fn(3, 2, |i, j| (i * 2 + j) as f64);
        let y = [1.0, -1.0, 2.0];
        assert_eq!(g.tr_mul_vec(&y), g.transpose().mul_vec(&y));
    }
}
