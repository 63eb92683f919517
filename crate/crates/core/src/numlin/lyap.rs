//! Continuous algebraic Lyapunov equation.

use super::eig::{eig_extremes, is_hurwitz, symmetric_eigenvalues};
use super::{Matrix, NumlinError};

/// Solve `A^T P + P A = -Q` for symmetric positive definite `P`.
///
/// Kronecker vectorization turns the equation into an `n^2 x n^2` dense
/// linear system; at the sizes used here that is exact enough to hold the
/// residual below `1e-10 * ||Q||_F`.
pub fn solve_lyapunov(a_m: &Matrix, q: &Matrix) -> Result<Matrix, NumlinError> {
    if !a_m.is_square() {
        return Err(NumlinError::NonSquare {
            rows: a_m.rows(),
            cols: a_m.cols(),
        });
    }
    let n = a_m.rows();
    if q.rows() != n || q.cols() != n {
        return Err(NumlinError::DimensionMismatch(
            "Q must match A_m".to_string(),
        ));
    }
    if !is_hurwitz(a_m)? {
        return Err(NumlinError::NotHurwitz);
    }
    if !q.is_symmetric(1e-9) {
        return Err(NumlinError::NotSpd);
    }
    let q_eigs = symmetric_eigenvalues(q)?;
    if q_eigs.iter().any(|&v| v <= 0.0) {
        return Err(NumlinError::NotSpd);
    }

    // vec stacks columns: vec(P)[j*n + i] = P[i][j].
    // (I (x) A^T + A^T (x) I) vec(P) = -vec(Q)
    let nn = n * n;
    let mut system = Matrix::zeros(nn, nn);
    for j in 0..n {
        for i in 0..n {
            let row = j * n + i;
            for k in 0..n {
                // I (x) A^T: delta_{jl} * A[k][i], column l = j
                system[(row, j * n + k)] += a_m[(k, i)];
                // A^T (x) I: A[l][j] * delta_{ik}, row index k = i
                system[(row, k * n + i)] += a_m[(k, j)];
            }
        }
    }
    let mut rhs = vec![0.0; nn];
    for j in 0..n {
        for i in 0..n {
            rhs[j * n + i] = -q[(i, j)];
        }
    }
    let sol = system.solve_vec(&rhs)?;
    let mut p = Matrix::zeros(n, n);
    for j in 0..n {
        for i in 0..n {
            p[(i, j)] = sol[j * n + i];
        }
    }
    // exact symmetrization; asymmetry is pure roundoff
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (p[(i, j)] + p[(j, i)]);
            p[(i, j)] = v;
            p[(j, i)] = v;
        }
    }
    let (min_eig, _) = eig_extremes(&p)?;
    if min_eig <= 0.0 {
        return Err(NumlinError::NotSpd);
    }
    Ok(p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn residual(a_m: &Matrix, p: &Matrix, q: &Matrix) -> f64 {
        a_m.transpose()
            .matmul(p)
            .add(&p.matmul(a_m))
            .add(q)
            .frobenius_norm()
    }

    #[test]
    fn negative_identity_gives_identity() {
        let a = Matrix::identity(2).scale(-1.0);
        let q = Matrix::identity(2).scale(2.0);
        let p = solve_lyapunov(&a, &q).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                assert_relative_eq!(p[(i, j)], if i == j { 1.0 } else { 0.0 }, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn matches_independent_kronecker_oracle() {
        // Oracle: direct 4x4 dense assembly solved by elimination written out
        // here by hand for n = 2 (independent of the production assembly).
        let a = Matrix::from_rows(&[&[0.0, 1.0], &[-2.0, -3.0]]);
        let q = Matrix::identity(2);
        let p = solve_lyapunov(&a, &q).unwrap();
        // A^T P + P A = -Q expands to three independent scalar equations for
        // (p11, p12, p22):
        //   2*(a11 p11 + a21 p12)                  = -q11
        //   a12 p11 + (a11+a22) p12 + a21 p22      = -q12
        //   2*(a12 p12 + a22 p22)                  = -q22
        let (a11, a12, a21, a22) = (a[(0, 0)], a[(0, 1)], a[(1, 0)], a[(1, 1)]);
        let m = Matrix::from_rows(&[
            &[2.0 * a11, 2.0 * a21, 0.0],
            &[a12, a11 + a22, a21],
            &[0.0, 2.0 * a12, 2.0 * a22],
        ]);
        let rhs = [-1.0, 0.0, -1.0];
        let sol = m.solve_vec(&rhs).unwrap();
        assert_relative_eq!(p[(0, 0)], sol[0], epsilon = 1e-12);
        assert_relative_eq!(p[(0, 1)], sol[1], epsilon = 1e-12);
        assert_relative_eq!(p[(1, 1)], sol[2], epsilon = 1e-12);
        assert!(residual(&a, &p, &q) < 1e-10 * q.frobenius_norm());
    }

    #[test]
    fn rejects_non_hurwitz() {
        let a = Matrix::from_rows(&[&[0.0, 1.0], &[0.0, 0.0]]);
        assert_eq!(
            solve_lyapunov(&a, &Matrix::identity(2)),
            Err(NumlinError::NotHurwitz)
        );
    }

    #[test]
    fn rejects_non_spd_q() {
        let a = Matrix::identity(2).scale(-1.0);
        let q_indef = Matrix::diag(&[1.0, -1.0]);
        assert_eq!(solve_lyapunov(&a, &q_indef), Err(NumlinError::NotSpd));
        let q_asym = Matrix::from_rows(&[&[1.0, 1.0], &[0.0, 1.0]]);
        assert_eq!(solve_lyapunov(&a, &q_asym), Err(NumlinError::NotSpd));
    }

    #[test]
    fn output_symmetric_and_positive_definite() {
        let rng = crate::rng::CounterRng::new(2024);
        for case in 0..30u64 {
            let n = 2 + (case as usize % 3);
            // A = skew - M M^T - eps I has negative definite symmetric part,
            // hence is Hurwitz by construction.
            let mut mm = Matrix::zeros(n, n);
            let mut skew = Matrix::zeros(n, n);
            for i in 0..n {
                for j in 0..n {
                    mm[(i, j)] = rng.uniform_at(case * 1000 + (i * n + j) as u64, -1.0, 1.0);
                    if j > i {
                        let v = rng.uniform_at(case * 1000 + 100 + (i * n + j) as u64, -1.0, 1.0);
                        skew[(i, j)] = v;
                        skew[(j, i)] = -v;
                    }
                }
            }
            let a = skew
                .sub(&mm.matmul(&mm.transpose()))
                .sub(&Matrix::identity(n).scale(0.1));
            let q = Matrix::identity(n);
            let p = solve_lyapunov(&a, &q).unwrap();
            assert!(p.is_symmetric(1e-12));
            let (min_eig, _) = eig_extremes(&p).unwrap();
            assert!(min_eig > 0.0);
            assert!(residual(&a, &p, &q) < 1e-10 * q.frobenius_norm());
        }
    }
}
