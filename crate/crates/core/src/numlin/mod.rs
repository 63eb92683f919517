//! Dense small-matrix linear algebra for controller design and certification.
//!
//! Everything here targets systems with at most a handful of states: plain
//! row-major storage, explicit QR iteration for eigenvalues, a Kronecker
//! vectorization solve for the continuous Lyapunov equation, and an
//! impulse-response quadrature for transfer-function L1 norms. No external
//! solver is used.

mod eig;
mod l1norm;
mod lyap;
mod ode;

pub use eig::{eig_extremes, eigenvalues, is_hurwitz, HURWITZ_TOL};
pub use l1norm::{cascade, l1_norm, l1_norm_auto, LtiSystem};
pub use lyap::solve_lyapunov;
pub use ode::{rk4_step, rk4_step4, rk4_step_into};

use std::fmt;
use std::ops::{Index, IndexMut};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NumlinError {
    #[error("matrix is not square ({rows}x{cols})")]
    NonSquare { rows: usize, cols: usize },
    #[error("matrix is not symmetric")]
    NotSymmetric,
    #[error("matrix is not Hurwitz")]
    NotHurwitz,
    #[error("matrix is not symmetric positive definite")]
    NotSpd,
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("non-finite value encountered in {0}")]
    NonFinite(&'static str),
    #[error("impulse response failed to decay within 10x the requested horizon")]
    NonConvergent,
    #[error("eigenvalue iteration failed to converge")]
    EigNonConvergent,
    #[error("singular linear system")]
    Singular,
}

/// Dense row-major matrix of `f64`.
#[derive(Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl fmt::Debug for Matrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "Matrix {}x{} [", self.rows, self.cols)?;
        for i in 0..self.rows {
            write!(f, "  ")?;
            for j in 0..self.cols {
                write!(f, "{:>12.6} ", self[(i, j)])?;
            }
            writeln!(f)?;
        }
        write!(f, "]")
    }
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self, NumlinError> {
        if data.len() != rows * cols {
            return Err(NumlinError::DimensionMismatch(format!(
                "{}x{} needs {} entries, got {}",
                rows,
                cols,
                rows * cols,
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(NumlinError::NonFinite("matrix entries"));
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn diag(entries: &[f64]) -> Self {
        let mut m = Matrix::zeros(entries.len(), entries.len());
        for (i, &v) in entries.iter().enumerate() {
            m[(i, i)] = v;
        }
        m
    }

    pub fn from_rows(rows: &[&[f64]]) -> Self {
        let r = rows.len();
        let c = if r > 0 { rows[0].len() } else { 0 };
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            assert_eq!(row.len(), c, "ragged rows");
            data.extend_from_slice(row);
        }
        Matrix { rows: r, cols: c, data }
    }

    pub fn column(col: &[f64]) -> Self {
        Matrix {
            rows: col.len(),
            cols: 1,
            data: col.to_vec(),
        }
    }

    pub fn row(row: &[f64]) -> Self {
        Matrix {
            rows: 1,
            cols: row.len(),
            data: row.to_vec(),
        }
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

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn transpose(&self) -> Matrix {
        let mut out = Matrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out[(j, i)] = self[(i, j)];
            }
        }
        out
    }

    pub fn scale(&self, k: f64) -> Matrix {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|v| v * k).collect(),
        }
    }

    pub fn add(&self, other: &Matrix) -> Matrix {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| a + b)
                .collect(),
        }
    }

    pub fn sub(&self, other: &Matrix) -> Matrix {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| a - b)
                .collect(),
        }
    }

    pub fn matmul(&self, other: &Matrix) -> Matrix {
        assert_eq!(self.cols, other.rows, "matmul dimension mismatch");
        let mut out = Matrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == 0.0 {
                    continue;
                }
                for j in 0..other.cols {
                    out[(i, j)] += a * other[(k, j)];
                }
            }
        }
        out
    }

    pub fn matvec(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(self.cols, v.len(), "matvec dimension mismatch");
        let mut out = vec![0.0; self.rows];
        for i in 0..self.rows {
            let mut acc = 0.0;
            for j in 0..self.cols {
                acc += self[(i, j)] * v[j];
            }
            out[i] = acc;
        }
        out
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        if !self.is_square() {
            return false;
        }
        let scale = self.max_abs().max(1.0);
        for i in 0..self.rows {
            for j in (i + 1)..self.cols {
                if (self[(i, j)] - self[(j, i)]).abs() > tol * scale {
                    return false;
                }
            }
        }
        true
    }

    /// Solve `self * x = rhs` for each column of `rhs` by LU with partial
    /// pivoting.
    pub fn solve(&self, rhs: &Matrix) -> Result<Matrix, NumlinError> {
        if !self.is_square() {
            return Err(NumlinError::NonSquare {
                rows: self.rows,
                cols: self.cols,
            });
        }
        if rhs.rows != self.rows {
            return Err(NumlinError::DimensionMismatch(
                "solve rhs row count".to_string(),
            ));
        }
        let n = self.rows;
        let mut lu = self.data.clone();
        let mut piv: Vec<usize> = (0..n).collect();
        for k in 0..n {
            let mut p = k;
            let mut best = lu[k * n + k].abs();
            for i in (k + 1)..n {
                let v = lu[i * n + k].abs();
                if v > best {
                    best = v;
                    p = i;
                }
            }
            if best == 0.0 {
                return Err(NumlinError::Singular);
            }
            if p != k {
                for j in 0..n {
                    lu.swap(k * n + j, p * n + j);
                }
                piv.swap(k, p);
            }
            let pivot = lu[k * n + k];
            for i in (k + 1)..n {
                let f = lu[i * n + k] / pivot;
                lu[i * n + k] = f;
                for j in (k + 1)..n {
                    lu[i * n + j] -= f * lu[k * n + j];
                }
            }
        }
        let mut out = Matrix::zeros(n, rhs.cols);
        let mut col = vec![0.0; n];
        for c in 0..rhs.cols {
            for i in 0..n {
                col[i] = rhs[(piv[i], c)];
            }
            for i in 1..n {
                for j in 0..i {
                    col[i] -= lu[i * n + j] * col[j];
                }
            }
            for i in (0..n).rev() {
                for j in (i + 1)..n {
                    col[i] -= lu[i * n + j] * col[j];
                }
                col[i] /= lu[i * n + i];
            }
            for i in 0..n {
                out[(i, c)] = col[i];
            }
        }
        Ok(out)
    }

    pub fn solve_vec(&self, rhs: &[f64]) -> Result<Vec<f64>, NumlinError> {
        let out = self.solve(&Matrix::column(rhs))?;
        Ok(out.data)
    }

    pub fn inverse(&self) -> Result<Matrix, NumlinError> {
        self.solve(&Matrix::identity(self.rows))
    }

    /// Numerical rank by Gaussian elimination with full pivoting.
    pub fn rank(&self, tol: f64) -> usize {
        let mut a = self.clone();
        let scale = a.max_abs();
        if scale == 0.0 {
            return 0;
        }
        let (r, c) = (a.rows, a.cols);
        let mut rank = 0;
        let mut used_rows = vec![false; r];
        let mut used_cols = vec![false; c];
        loop {
            let mut best = 0.0;
            let mut bi = 0;
            let mut bj = 0;
            for i in 0..r {
                if used_rows[i] {
                    continue;
                }
                for j in 0..c {
                    if used_cols[j] {
                        continue;
                    }
                    if a[(i, j)].abs() > best {
                        best = a[(i, j)].abs();
                        bi = i;
                        bj = j;
                    }
                }
            }
            if best <= tol * scale {
                break;
            }
            rank += 1;
            used_rows[bi] = true;
            used_cols[bj] = true;
            let pivot = a[(bi, bj)];
            for i in 0..r {
                if used_rows[i] {
                    continue;
                }
                let f = a[(i, bj)] / pivot;
                if f == 0.0 {
                    continue;
                }
                for j in 0..c {
                    if !used_cols[j] {
                        a[(i, j)] -= f * a[(bi, j)];
                    }
                }
            }
        }
        rank
    }
}

impl Index<(usize, usize)> for Matrix {
    type Output = f64;
    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for Matrix {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.cols + j]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn new_rejects_bad_length_and_nonfinite() {
        assert!(Matrix::new(2, 2, vec![1.0; 3]).is_err());
        assert!(Matrix::new(1, 2, vec![1.0, f64::NAN]).is_err());
    }

    #[test]
    fn matmul_matches_hand_example() {
        let a = Matrix::from_rows(&[&[1.0, 2.0], &[3.0, 4.0]]);
        let b = Matrix::from_rows(&[&[5.0, 6.0], &[7.0, 8.0]]);
        let c = a.matmul(&b);
        assert_eq!(c.data(), &[19.0, 22.0, 43.0, 50.0]);
    }

    #[test]
    fn solve_recovers_known_solution() {
        let a = Matrix::from_rows(&[&[2.0, 1.0, 0.0], &[1.0, 3.0, 1.0], &[0.0, 1.0, 4.0]]);
        let x = vec![1.0, -2.0, 0.5];
        let b = a.matvec(&x);
        let got = a.solve_vec(&b).unwrap();
        for (g, e) in got.iter().zip(&x) {
            assert_relative_eq!(g, e, epsilon = 1e-12);
        }
    }

    #[test]
    fn solve_flags_singular() {
        let a = Matrix::from_rows(&[&[1.0, 2.0], &[2.0, 4.0]]);
        assert_eq!(a.solve_vec(&[1.0, 1.0]), Err(NumlinError::Singular));
    }

    #[test]
    fn inverse_round_trip() {
        let a = Matrix::from_rows(&[&[4.0, 1.0], &[2.0, 3.0]]);
        let inv = a.inverse().unwrap();
        let id = a.matmul(&inv);
        for i in 0..2 {
            for j in 0..2 {
                assert_relative_eq!(id[(i, j)], if i == j { 1.0 } else { 0.0 }, epsilon = 1e-13);
            }
        }
    }

    #[test]
    fn rank_detects_deficiency() {
        let full = Matrix::from_rows(&[&[1.0, 0.0], &[0.0, 2.0]]);
        let deficient = Matrix::from_rows(&[&[1.0, 2.0], &[2.0, 4.0]]);
        assert_eq!(full.rank(1e-12), 2);
        assert_eq!(deficient.rank(1e-12), 1);
    }
}
