//! Eigenvalues of small dense matrices.
//!
//! General matrices go through Householder Hessenberg reduction followed by
//! Francis double-shift QR iteration with deflation; symmetric matrices use
//! cyclic Jacobi sweeps, which give near machine-precision extremes.

use super::{Matrix, NumlinError};

/// Margin below zero a real part must clear for a system to count as
/// Hurwitz; marginal systems are rejected.
pub const HURWITZ_TOL: f64 = 1e-9;

const DEFLATE_EPS: f64 = 1e-13;
const MAX_ITERS_PER_EIG: usize = 60;

/// Householder reflector for a 3-vector, normalized so `v[0] = 1`.
/// Returns `(v1, v2, beta)` with `P = I - beta * v v^T`.
fn house3(x: f64, y: f64, z: f64) -> Option<(f64, f64, f64)> {
    let sigma = y * y + z * z;
    if sigma == 0.0 {
        return None;
    }
    let mu = (x * x + sigma).sqrt();
    let v0 = if x <= 0.0 { x - mu } else { -sigma / (x + mu) };
    let beta = 2.0 * v0 * v0 / (sigma + v0 * v0);
    Some((y / v0, z / v0, beta))
}

fn house2(x: f64, y: f64) -> Option<(f64, f64)> {
    if y == 0.0 {
        return None;
    }
    let mu = (x * x + y * y).sqrt();
    let v0 = if x <= 0.0 { x - mu } else { -(y * y) / (x + mu) };
    let beta = 2.0 * v0 * v0 / (y * y + v0 * v0);
    Some((y / v0, beta))
}

/// In-place Householder reduction to upper Hessenberg form.
fn hessenberg(h: &mut Matrix) {
    let n = h.rows();
    if n < 3 {
        return;
    }
    for k in 0..n - 2 {
        let mut sigma = 0.0;
        for i in k + 2..n {
            sigma += h[(i, k)] * h[(i, k)];
        }
        let x = h[(k + 1, k)];
        if sigma == 0.0 {
            continue;
        }
        let mu = (x * x + sigma).sqrt();
        let v0 = if x <= 0.0 { x - mu } else { -sigma / (x + mu) };
        let beta = 2.0 * v0 * v0 / (sigma + v0 * v0);
        let mut v = vec![0.0; n];
        v[k + 1] = 1.0;
        for i in k + 2..n {
            v[i] = h[(i, k)] / v0;
        }
        // rows: H <- (I - beta v v^T) H
        for j in 0..n {
            let mut dot = 0.0;
            for i in k + 1..n {
                dot += v[i] * h[(i, j)];
            }
            let dot = beta * dot;
            for i in k + 1..n {
                h[(i, j)] -= dot * v[i];
            }
        }
        // cols: H <- H (I - beta v v^T)
        for i in 0..n {
            let mut dot = 0.0;
            for j in k + 1..n {
                dot += h[(i, j)] * v[j];
            }
            let dot = beta * dot;
            for j in k + 1..n {
                h[(i, j)] -= dot * v[j];
            }
        }
        for i in k + 2..n {
            h[(i, k)] = 0.0;
        }
    }
}

/// Apply `P = I - beta v v^T` (3-point reflector at rows `k..k+3`) from the
/// left and right. Full-width application keeps the similarity exact.
fn apply_reflector3(h: &mut Matrix, k: usize, v1: f64, v2: f64, beta: f64) {
    let n = h.rows();
    for j in 0..n {
        let dot = beta * (h[(k, j)] + v1 * h[(k + 1, j)] + v2 * h[(k + 2, j)]);
        h[(k, j)] -= dot;
        h[(k + 1, j)] -= dot * v1;
        h[(k + 2, j)] -= dot * v2;
    }
    for i in 0..n {
        let dot = beta * (h[(i, k)] + v1 * h[(i, k + 1)] + v2 * h[(i, k + 2)]);
        h[(i, k)] -= dot;
        h[(i, k + 1)] -= dot * v1;
        h[(i, k + 2)] -= dot * v2;
    }
}

fn apply_reflector2(h: &mut Matrix, k: usize, v1: f64, beta: f64) {
    let n = h.rows();
    for j in 0..n {
        let dot = beta * (h[(k, j)] + v1 * h[(k + 1, j)]);
        h[(k, j)] -= dot;
        h[(k + 1, j)] -= dot * v1;
    }
    for i in 0..n {
        let dot = beta * (h[(i, k)] + v1 * h[(i, k + 1)]);
        h[(i, k)] -= dot;
        h[(i, k + 1)] -= dot * v1;
    }
}

/// One Francis double-shift sweep over the irreducible block `[lo, hi]`.
/// `shift` overrides the trailing-2x2 (sum, product) when set.
fn francis_step(h: &mut Matrix, lo: usize, hi: usize, shift: Option<(f64, f64)>) {
    let m = hi - 1;
    let (s, t) = match shift {
        Some(st) => st,
        None => (
            h[(m, m)] + h[(hi, hi)],
            h[(m, m)] * h[(hi, hi)] - h[(m, hi)] * h[(hi, m)],
        ),
    };
    let mut x = h[(lo, lo)] * h[(lo, lo)] + h[(lo, lo + 1)] * h[(lo + 1, lo)] - s * h[(lo, lo)] + t;
    let mut y = h[(lo + 1, lo)] * (h[(lo, lo)] + h[(lo + 1, lo + 1)] - s);
    let mut z = if lo + 2 <= hi {
        h[(lo + 2, lo + 1)] * h[(lo + 1, lo)]
    } else {
        0.0
    };
    let mut k = lo;
    while k + 2 <= hi {
        if let Some((v1, v2, beta)) = house3(x, y, z) {
            apply_reflector3(h, k, v1, v2, beta);
        }
        x = h[(k + 1, k)];
        y = h[(k + 2, k)];
        z = if k + 3 <= hi { h[(k + 3, k)] } else { 0.0 };
        k += 1;
    }
    if let Some((v1, beta)) = house2(x, y) {
        apply_reflector2(h, hi - 1, v1, beta);
    }
}

fn eig2x2(a: f64, b: f64, c: f64, d: f64) -> [(f64, f64); 2] {
    let tr = a + d;
    let det = a * d - b * c;
    let disc = tr * tr / 4.0 - det;
    if disc >= 0.0 {
        let root = disc.sqrt();
        let l1 = tr / 2.0 + root;
        let l2 = tr / 2.0 - root;
        [(l1, 0.0), (l2, 0.0)]
    } else {
        let im = (-disc).sqrt();
        [(tr / 2.0, im), (tr / 2.0, -im)]
    }
}

/// Eigenvalues of a general square matrix as `(re, im)` pairs.
pub fn eigenvalues(m: &Matrix) -> Result<Vec<(f64, f64)>, NumlinError> {
    if !m.is_square() {
        return Err(NumlinError::NonSquare {
            rows: m.rows(),
            cols: m.cols(),
        });
    }
    let n = m.rows();
    if n == 0 {
        return Ok(Vec::new());
    }
    if n == 1 {
        return Ok(vec![(m[(0, 0)], 0.0)]);
    }
    let mut h = m.clone();
    hessenberg(&mut h);
    let mut eigs = Vec::with_capacity(n);
    let mut hi = n - 1;
    let mut iters = 0usize;
    loop {
        // zero negligible subdiagonals
        for i in 0..hi {
            let t = DEFLATE_EPS * (h[(i, i)].abs() + h[(i + 1, i + 1)].abs()).max(1e-300);
            if h[(i + 1, i)].abs() <= t {
                h[(i + 1, i)] = 0.0;
            }
        }
        // peel converged eigenvalues off the bottom
        loop {
            if hi == 0 {
                eigs.push((h[(0, 0)], 0.0));
                return Ok(eigs);
            }
            if h[(hi, hi - 1)] == 0.0 {
                eigs.push((h[(hi, hi)], 0.0));
                hi -= 1;
                iters = 0;
            } else if hi == 1 || h[(hi - 1, hi - 2)] == 0.0 {
                let block = eig2x2(
                    h[(hi - 1, hi - 1)],
                    h[(hi - 1, hi)],
                    h[(hi, hi - 1)],
                    h[(hi, hi)],
                );
                eigs.extend_from_slice(&block);
                if hi == 1 {
                    return Ok(eigs);
                }
                hi -= 2;
                iters = 0;
            } else {
                break;
            }
        }
        // locate the irreducible block ending at hi
        let mut lo = hi - 1;
        while lo > 0 && h[(lo, lo - 1)] != 0.0 {
            lo -= 1;
        }
        iters += 1;
        if iters > MAX_ITERS_PER_EIG {
            return Err(NumlinError::EigNonConvergent);
        }
        // exceptional shifts kick stalled iterations loose
        let shift = if iters.is_multiple_of(20) {
            let e = h[(hi, hi - 1)].abs() + h[(hi - 1, hi - 2)].abs();
            Some((1.5 * e, -0.4375 * e * e))
        } else {
            None
        };
        francis_step(&mut h, lo, hi, shift);
    }
}

/// True iff every eigenvalue satisfies `Re(lambda) < -HURWITZ_TOL`.
pub fn is_hurwitz(m: &Matrix) -> Result<bool, NumlinError> {
    let eigs = eigenvalues(m)?;
    Ok(eigs.iter().all(|&(re, _)| re < -HURWITZ_TOL))
}

/// Smallest and largest eigenvalue of a symmetric matrix via cyclic Jacobi.
pub fn eig_extremes(m: &Matrix) -> Result<(f64, f64), NumlinError> {
    let eigs = symmetric_eigenvalues(m)?;
    let mut min = f64::INFINITY;
    let mut max = f64::NEG_INFINITY;
    for v in eigs {
        min = min.min(v);
        max = max.max(v);
    }
    Ok((min, max))
}

pub(crate) fn symmetric_eigenvalues(m: &Matrix) -> Result<Vec<f64>, NumlinError> {
    if !m.is_square() {
        return Err(NumlinError::NonSquare {
            rows: m.rows(),
            cols: m.cols(),
        });
    }
    if !m.is_symmetric(1e-9) {
        return Err(NumlinError::NotSymmetric);
    }
    let n = m.rows();
    let mut a = m.clone();
    // symmetrize exactly so sweeps preserve symmetry
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (a[(i, j)] + a[(j, i)]);
            a[(i, j)] = v;
            a[(j, i)] = v;
        }
    }
    let scale = a.max_abs().max(1e-300);
    for _sweep in 0..30 {
        let mut off = 0.0_f64;
        for i in 0..n {
            for j in (i + 1)..n {
                off = off.max(a[(i, j)].abs());
            }
        }
        if off <= 1e-15 * scale {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[(p, q)];
                if apq.abs() <= 1e-300 {
                    continue;
                }
                let tau = (a[(q, q)] - a[(p, p)]) / (2.0 * apq);
                let t = if tau >= 0.0 {
                    1.0 / (tau + (1.0 + tau * tau).sqrt())
                } else {
                    -1.0 / (-tau + (1.0 + tau * tau).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    a[(k, p)] = c * akp - s * akq;
                    a[(k, q)] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[(p, k)];
                    let aqk = a[(q, k)];
                    a[(p, k)] = c * apk - s * aqk;
                    a[(q, k)] = s * apk + c * aqk;
                }
            }
        }
    }
    Ok((0..n).map(|i| a[(i, i)]).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn sorted_re(mut eigs: Vec<(f64, f64)>) -> Vec<(f64, f64)> {
        eigs.sort_by(|a, b| (a.0, a.1).partial_cmp(&(b.0, b.1)).unwrap());
        eigs
    }

    #[test]
    fn diagonal_matrix() {
        let m = Matrix::diag(&[-1.0, -2.0]);
        let eigs = sorted_re(eigenvalues(&m).unwrap());
        assert_relative_eq!(eigs[0].0, -2.0, epsilon = 1e-12);
        assert_relative_eq!(eigs[1].0, -1.0, epsilon = 1e-12);
        assert!(is_hurwitz(&m).unwrap());
    }

    #[test]
    fn double_integrator_is_not_hurwitz() {
        let m = Matrix::from_rows(&[&[0.0, 1.0], &[0.0, 0.0]]);
        assert!(!is_hurwitz(&m).unwrap());
    }

    #[test]
    fn complex_pair_from_characteristic_roots() {
        // roots of s^2 + s + 1: (-1 +- i sqrt(3)) / 2
        let m = Matrix::from_rows(&[&[0.0, 1.0], &[-1.0, -1.0]]);
        let eigs = eigenvalues(&m).unwrap();
        for (re, im) in &eigs {
            assert_relative_eq!(*re, -0.5, epsilon = 1e-12);
            assert_relative_eq!(im.abs(), 3.0_f64.sqrt() / 2.0, epsilon = 1e-12);
        }
        assert!(is_hurwitz(&m).unwrap());
    }

    #[test]
    fn companion_matrix_of_known_polynomial() {
        // p(s) = (s+1)(s+2)(s+3)(s+4) = s^4 + 10s^3 + 35s^2 + 50s + 24
        let m = Matrix::from_rows(&[
            &[0.0, 1.0, 0.0, 0.0],
            &[0.0, 0.0, 1.0, 0.0],
            &[0.0, 0.0, 0.0, 1.0],
            &[-24.0, -50.0, -35.0, -10.0],
        ]);
        let mut eigs: Vec<f64> = eigenvalues(&m).unwrap().iter().map(|e| e.0).collect();
        eigs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        for (got, expect) in eigs.iter().zip(&[-4.0, -3.0, -2.0, -1.0]) {
            assert_relative_eq!(got, expect, epsilon = 1e-9);
        }
    }

    #[test]
    fn trace_and_determinant_identities_on_random_matrices() {
        let rng = crate::rng::CounterRng::new(77);
        for case in 0..50 {
            let n = 2 + (case % 7);
            let data: Vec<f64> = (0..n * n)
                .map(|i| rng.uniform_at((case * 100 + i) as u64, -2.0, 2.0))
                .collect();
            let m = Matrix::new(n, n, data).unwrap();
            let eigs = eigenvalues(&m).unwrap();
            let tr: f64 = (0..n).map(|i| m[(i, i)]).sum();
            let eig_sum: f64 = eigs.iter().map(|e| e.0).sum();
            assert_relative_eq!(tr, eig_sum, epsilon = 1e-8, max_relative = 1e-8);
            // sum of squares = trace(M^2), checks imaginary parts too
            let m2 = m.matmul(&m);
            let tr2: f64 = (0..n).map(|i| m2[(i, i)]).sum();
            let eig_sq: f64 = eigs.iter().map(|e| e.0 * e.0 - e.1 * e.1).sum();
            assert_relative_eq!(tr2, eig_sq, epsilon = 1e-7, max_relative = 1e-7);
        }
    }

    #[test]
    fn symmetric_extremes_closed_form() {
        let m = Matrix::from_rows(&[&[2.0, 1.0], &[1.0, 2.0]]);
        let (min, max) = eig_extremes(&m).unwrap();
        assert_relative_eq!(min, 1.0, epsilon = 1e-12);
        assert_relative_eq!(max, 3.0, epsilon = 1e-12);
    }

    #[test]
    fn symmetric_extremes_trivial() {
        assert_eq!(eig_extremes(&Matrix::identity(2)).unwrap(), (1.0, 1.0));
        let (min, max) = eig_extremes(&Matrix::diag(&[2.0, 5.0])).unwrap();
        assert_relative_eq!(min, 2.0, epsilon = 1e-14);
        assert_relative_eq!(max, 5.0, epsilon = 1e-14);
    }

    #[test]
    fn eig_extremes_rejects_nonsymmetric() {
        let m = Matrix::from_rows(&[&[1.0, 2.0], &[0.0, 1.0]]);
        assert_eq!(eig_extremes(&m), Err(NumlinError::NotSymmetric));
    }

    #[test]
    fn is_hurwitz_rejects_nonsquare() {
        let m = Matrix::zeros(2, 3);
        assert!(matches!(
            is_hurwitz(&m),
            Err(NumlinError::NonSquare { .. })
        ));
    }

    #[test]
    fn jacobi_matches_qr_on_random_symmetric() {
        let rng = crate::rng::CounterRng::new(5150);
        for case in 0..20 {
            let n = 2 + (case % 5);
            let mut m = Matrix::zeros(n, n);
            for i in 0..n {
                for j in 0..=i {
                    let v = rng.uniform_at((case * 100 + i * 10 + j) as u64, -3.0, 3.0);
                    m[(i, j)] = v;
                    m[(j, i)] = v;
                }
            }
            let mut jac = symmetric_eigenvalues(&m).unwrap();
            let mut qr: Vec<f64> = eigenvalues(&m).unwrap().iter().map(|e| e.0).collect();
            jac.sort_by(|a, b| a.partial_cmp(b).unwrap());
            qr.sort_by(|a, b| a.partial_cmp(b).unwrap());
            for (a, b) in jac.iter().zip(&qr) {
                assert_relative_eq!(a, b, epsilon = 1e-7, max_relative = 1e-7);
            }
        }
    }
}
