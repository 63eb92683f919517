//! Transfer-function L1 norms by impulse-response quadrature.

use super::eig::{eigenvalues, HURWITZ_TOL};
use super::ode::rk4_step_into;
use super::{Matrix, NumlinError};

/// State-space realization `(A, B, C, D)` of a proper LTI system.
#[derive(Debug, Clone)]
pub struct LtiSystem {
    pub a: Matrix,
    pub b: Matrix,
    pub c: Matrix,
    pub d: Matrix,
}

impl LtiSystem {
    pub fn new(a: Matrix, b: Matrix, c: Matrix, d: Matrix) -> Result<Self, NumlinError> {
        if !a.is_square() {
            return Err(NumlinError::NonSquare {
                rows: a.rows(),
                cols: a.cols(),
            });
        }
        let n = a.rows();
        if b.rows() != n || c.cols() != n || d.rows() != c.rows() || d.cols() != b.cols() {
            return Err(NumlinError::DimensionMismatch(
                "LTI system dimensions".to_string(),
            ));
        }
        Ok(LtiSystem { a, b, c, d })
    }

    pub fn n_states(&self) -> usize {
        self.a.rows()
    }

    pub fn n_inputs(&self) -> usize {
        self.b.cols()
    }

    pub fn n_outputs(&self) -> usize {
        self.c.rows()
    }
}

const DECAY_RATIO: f64 = 1e-9;
const HORIZON_EXTEND_LIMIT: f64 = 10.0;

/// `max_i sum_j integral |g_ij(t)| dt` plus the feedthrough contribution
/// `sum_j |d_ij|`: the peak row gain of the impulse-response matrix.
///
/// The impulse response is propagated by RK4 from `x(0) = B e_j` and
/// integrated with the trapezoid rule. Integration continues past `horizon`
/// until the response envelope has decayed below `1e-9` of its running peak,
/// up to `10 * horizon`.
pub fn l1_norm(sys: &LtiSystem, dt: f64, horizon: f64) -> Result<f64, NumlinError> {
    if dt <= 0.0 || horizon <= 0.0 {
        return Err(NumlinError::DimensionMismatch(
            "dt and horizon must be positive".to_string(),
        ));
    }
    let eigs = eigenvalues(&sys.a)?;
    if !eigs.iter().all(|&(re, _)| re < -HURWITZ_TOL) {
        return Err(NumlinError::NotHurwitz);
    }
    let n = sys.n_states();
    let p = sys.n_outputs();
    let a = &sys.a;
    let field = |x: &[f64], dx: &mut [f64]| {
        for i in 0..n {
            let mut acc = 0.0;
            for j in 0..n {
                acc += a[(i, j)] * x[j];
            }
            dx[i] = acc;
        }
    };

    let chunk_steps = ((horizon / 8.0 / dt).ceil() as usize).max(16);
    let max_steps = ((horizon * HORIZON_EXTEND_LIMIT / dt).ceil() as usize).max(chunk_steps);

    let mut row_sums = vec![0.0; p];
    for j in 0..sys.n_inputs() {
        let mut x: Vec<f64> = (0..n).map(|i| sys.b[(i, j)]).collect();
        let mut y_prev: Vec<f64> = sys.c.matvec(&x);
        let mut integrals = vec![0.0; p];
        let mut peak = y_prev.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        let mut chunk_peak = peak;
        let mut k1 = vec![0.0; n];
        let mut k2 = vec![0.0; n];
        let mut k3 = vec![0.0; n];
        let mut k4 = vec![0.0; n];
        let mut tmp = vec![0.0; n];
        let mut next = vec![0.0; n];
        let mut converged = false;
        let mut step = 0usize;
        while step < max_steps {
            rk4_step_into(&field, &x, dt, &mut k1, &mut k2, &mut k3, &mut k4, &mut tmp, &mut next)?;
            std::mem::swap(&mut x, &mut next);
            let y = sys.c.matvec(&x);
            for i in 0..p {
                integrals[i] += 0.5 * (y_prev[i].abs() + y[i].abs()) * dt;
                let mag = y[i].abs();
                peak = peak.max(mag);
                chunk_peak = chunk_peak.max(mag);
            }
            y_prev = y;
            step += 1;
            if step.is_multiple_of(chunk_steps) {
                if chunk_peak <= DECAY_RATIO * peak {
                    converged = true;
                    break;
                }
                chunk_peak = 0.0;
            }
        }
        if !converged && peak > 0.0 {
            return Err(NumlinError::NonConvergent);
        }
        for (acc, integral) in row_sums.iter_mut().zip(&integrals) {
            *acc += integral;
        }
    }
    for (i, acc) in row_sums.iter_mut().enumerate() {
        for j in 0..sys.n_inputs() {
            *acc += sys.d[(i, j)].abs();
        }
    }
    Ok(row_sums.iter().fold(0.0_f64, |m, v| m.max(*v)))
}

/// [`l1_norm`] with step and horizon picked from the eigenvalues of `A`:
/// `dt` resolves the slowest mode to 1e-4 of its time constant but stays
/// inside the RK4 stability region of the fastest mode; the horizon covers
/// 25 slow time constants.
pub fn l1_norm_auto(sys: &LtiSystem) -> Result<f64, NumlinError> {
    let eigs = eigenvalues(&sys.a)?;
    if !eigs.iter().all(|&(re, _)| re < -HURWITZ_TOL) {
        return Err(NumlinError::NotHurwitz);
    }
    let re_min = eigs.iter().map(|e| e.0.abs()).fold(f64::INFINITY, f64::min);
    let re_max = eigs.iter().map(|e| e.0.abs()).fold(0.0_f64, f64::max);
    let tau_slow = 1.0 / re_min;
    let dt = (1e-4 * tau_slow).min(0.5 / re_max);
    let horizon = 25.0 * tau_slow;
    l1_norm(sys, dt, horizon)
}

/// Series interconnection `second(s) * first(s)` (input feeds `first`).
pub fn cascade(first: &LtiSystem, second: &LtiSystem) -> Result<LtiSystem, NumlinError> {
    if first.n_outputs() != second.n_inputs() {
        return Err(NumlinError::DimensionMismatch(
            "cascade output/input mismatch".to_string(),
        ));
    }
    let n1 = first.n_states();
    let n2 = second.n_states();
    let n = n1 + n2;
    let mut a = Matrix::zeros(n, n);
    for i in 0..n2 {
        for j in 0..n2 {
            a[(i, j)] = second.a[(i, j)];
        }
    }
    let b2c1 = second.b.matmul(&first.c);
    for i in 0..n2 {
        for j in 0..n1 {
            a[(i, n2 + j)] = b2c1[(i, j)];
        }
    }
    for i in 0..n1 {
        for j in 0..n1 {
            a[(n2 + i, n2 + j)] = first.a[(i, j)];
        }
    }
    let mut b = Matrix::zeros(n, first.n_inputs());
    let b2d1 = second.b.matmul(&first.d);
    for i in 0..n2 {
        for j in 0..first.n_inputs() {
            b[(i, j)] = b2d1[(i, j)];
        }
    }
    for i in 0..n1 {
        for j in 0..first.n_inputs() {
            b[(n2 + i, j)] = first.b[(i, j)];
        }
    }
    let mut c = Matrix::zeros(second.n_outputs(), n);
    for i in 0..second.n_outputs() {
        for j in 0..n2 {
            c[(i, j)] = second.c[(i, j)];
        }
    }
    let d2c1 = second.d.matmul(&first.c);
    for i in 0..second.n_outputs() {
        for j in 0..n1 {
            c[(i, n2 + j)] = d2c1[(i, j)];
        }
    }
    let d = second.d.matmul(&first.d);
    LtiSystem::new(a, b, c, d)
}
