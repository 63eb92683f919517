//! Adaptive-control building blocks: smooth projection, the control
//! low-pass filter, the state predictor, and the two adaptation laws.

use crate::numlin::{rk4_step4, Matrix, NumlinError};
use crate::plant::{dot4, ErrorState};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SignalError {
    #[error("filter cutoff must be positive")]
    InvalidCutoff,
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(&'static str),
    #[error(transparent)]
    Numeric(#[from] NumlinError),
}

/// Ball-shaped parameter confinement set with a smooth boundary layer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProjectionSet {
    /// 2-norm radius of the nominal set
    pub theta_max: f64,
    /// boundary-layer width in (0, 1]
    pub eps: f64,
}

impl ProjectionSet {
    pub fn new(theta_max: f64, eps: f64) -> Self {
        assert!(theta_max > 0.0 && eps > 0.0 && eps <= 1.0);
        ProjectionSet { theta_max, eps }
    }

    /// Hard outer radius `(1 + eps) * theta_max` never exceeded by the
    /// discretized laws.
    pub fn outer_radius(&self) -> f64 {
        (1.0 + self.eps) * self.theta_max
    }
}

/// Smooth projection of a drive direction `y` at parameter `theta`.
///
/// With `f(theta) = (||theta||^2 - theta_max^2) / (eps * theta_max^2)` the
/// outward radial component of `y` is removed progressively for
/// `0 < f < 1` and fully at `f >= 1`, so parameter growth stalls before
/// `(1 + eps) * theta_max`.
pub fn projection(theta: &[f64], y: &[f64], set: &ProjectionSet) -> Vec<f64> {
    assert_eq!(theta.len(), y.len(), "projection dimension mismatch");
    let norm_sq: f64 = theta.iter().map(|v| v * v).sum();
    let tmax_sq = set.theta_max * set.theta_max;
    let f = (norm_sq - tmax_sq) / (set.eps * tmax_sq);
    if f < 0.0 {
        return y.to_vec();
    }
    // grad f = 2 theta / (eps * tmax^2); only its direction matters
    let grad_dot_y: f64 = theta.iter().zip(y).map(|(t, v)| t * v).sum();
    if grad_dot_y <= 0.0 {
        return y.to_vec();
    }
    let scale = (f.min(1.0) * grad_dot_y) / norm_sq;
    theta
        .iter()
        .zip(y)
        .map(|(t, v)| v - scale * t)
        .collect()
}

/// Hard clip to the outer radius; numerical safety net re-asserted after
/// every Euler step of the adaptation laws.
fn clip_norm(theta: &mut [f64], radius: f64) {
    let norm: f64 = theta.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm > radius {
        let k = radius / norm;
        for v in theta {
            *v *= k;
        }
    }
}

/// First-order low-pass `C(s) = omega_c / (s + omega_c)`, DC gain exactly 1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FilterState {
    /// cutoff (rad/s)
    pub omega_c: f64,
    /// current output (rad)
    pub y: f64,
}

impl FilterState {
    pub fn new(omega_c: f64) -> Self {
        FilterState { omega_c, y: 0.0 }
    }
}

/// Exact zero-order-hold discretization:
/// `y+ = alpha y + (1 - alpha) u` with `alpha = exp(-omega_c dt)`.
pub fn filter_step(state: &FilterState, input: f64, dt: f64) -> Result<FilterState, SignalError> {
    if state.omega_c <= 0.0 {
        return Err(SignalError::InvalidCutoff);
    }
    let alpha = (-state.omega_c * dt).exp();
    Ok(FilterState {
        omega_c: state.omega_c,
        y: alpha * state.y + (1.0 - alpha) * input,
    })
}

/// Predictor state and its error against the measured plant state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PredictorState {
    pub x_hat: ErrorState,
    /// `x_hat - x_measured`, refreshed on every update
    pub x_tilde: ErrorState,
}

impl PredictorState {
    pub fn new(x0: ErrorState) -> Self {
        PredictorState { x_hat: x0, x_tilde: [0.0; 4] }
    }
}

/// RK4 advance of
/// `x_hat' = A_m x_hat + B1 (delta_hat_total + u_ad) + B2 psi_dot_des`,
/// then recompute `x_tilde` against the new measurement.
#[allow(clippy::too_many_arguments)]
pub fn predictor_step(
    pred: &PredictorState,
    a_m: &Matrix,
    b1: &ErrorState,
    b2: &ErrorState,
    delta_hat_total: f64,
    u_ad: f64,
    psi_dot_des: f64,
    x_measured: &ErrorState,
    dt: f64,
) -> Result<PredictorState, SignalError> {
    let a = crate::plant::rows4(a_m);
    let field = |x: &ErrorState| {
        let mut dx = [0.0; 4];
        for i in 0..4 {
            let mut acc = b1[i] * (delta_hat_total + u_ad) + b2[i] * psi_dot_des;
            for j in 0..4 {
                acc += a[i][j] * x[j];
            }
            dx[i] = acc;
        }
        dx
    };
    let x_hat = rk4_step4(field, &pred.x_hat, dt)?;
    let x_tilde = [
        x_hat[0] - x_measured[0],
        x_hat[1] - x_measured[1],
        x_hat[2] - x_measured[2],
        x_hat[3] - x_measured[3],
    ];
    Ok(PredictorState { x_hat, x_tilde })
}

/// Gains and Lyapunov data shared by both adaptation laws.
#[derive(Debug, Clone)]
pub struct AdaptationConfig {
    /// adaptation gain for the feature-weight law
    pub gamma_w: f64,
    /// adaptation gain for the parametric law
    pub gamma_zeta: f64,
    /// Lyapunov solution `P` (symmetric positive definite)
    pub p: Matrix,
    /// input matrix column
    pub b1: ErrorState,
}

impl AdaptationConfig {
    /// Scalar adaptation drive `-(x_tilde^T P B1)`.
    ///
    /// The sign makes the laws descend the Lyapunov function for the
    /// predictor error convention `x_tilde = x_hat - x`: an overestimated
    /// disturbance pushes `x_hat` above `x`, producing a negative drive
    /// that shrinks the estimate.
    pub fn drive(&self, x_tilde: &ErrorState) -> f64 {
        let pb1 = self.p.matvec(&self.b1);
        -(x_tilde[0] * pb1[0] + x_tilde[1] * pb1[1] + x_tilde[2] * pb1[2] + x_tilde[3] * pb1[3])
    }
}

/// Euler step of the feature-weight law
/// `W' = Gamma_1 proj(W, drive * Phi(x))`, followed by the hard norm clip.
pub fn adapt_w(
    w: &[f64],
    cfg: &AdaptationConfig,
    x_tilde: &ErrorState,
    phi: &[f64],
    set: &ProjectionSet,
    dt: f64,
) -> Result<Vec<f64>, SignalError> {
    if w.len() != phi.len() {
        return Err(SignalError::DimensionMismatch("W and Phi lengths"));
    }
    let drive = cfg.drive(x_tilde);
    let raw: Vec<f64> = phi.iter().map(|p| drive * p).collect();
    let projected = projection(w, &raw, set);
    let mut next: Vec<f64> = w
        .iter()
        .zip(&projected)
        .map(|(wi, pi)| wi + dt * cfg.gamma_w * pi)
        .collect();
    clip_norm(&mut next, set.outer_radius());
    Ok(next)
}

/// Parametric estimate confined to its projection set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParametricEstimate {
    pub zeta_hat: ErrorState,
}

impl ParametricEstimate {
    pub fn zero() -> Self {
        ParametricEstimate { zeta_hat: [0.0; 4] }
    }

    pub fn value_at(&self, x: &ErrorState) -> f64 {
        dot4(&self.zeta_hat, x)
    }
}

/// Euler step of the parametric law, the feature law with regressor `x`.
pub fn adapt_zeta(
    est: &ParametricEstimate,
    cfg: &AdaptationConfig,
    x_tilde: &ErrorState,
    x: &ErrorState,
    set: &ProjectionSet,
    dt: f64,
) -> ParametricEstimate {
    let drive = cfg.drive(x_tilde);
    let raw = [drive * x[0], drive * x[1], drive * x[2], drive * x[3]];
    let projected = projection(&est.zeta_hat, &raw, set);
    let mut next = [
        est.zeta_hat[0] + dt * cfg.gamma_zeta * projected[0],
        est.zeta_hat[1] + dt * cfg.gamma_zeta * projected[1],
        est.zeta_hat[2] + dt * cfg.gamma_zeta * projected[2],
        est.zeta_hat[3] + dt * cfg.gamma_zeta * projected[3],
    ];
    clip_norm(&mut next, set.outer_radius());
    ParametricEstimate { zeta_hat: next }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use crate::rng::CounterRng;

    fn norm(v: &[f64]) -> f64 {
        v.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    #[test]
    fn projection_inactive_inside_ball() {
        let set = ProjectionSet::new(2.0, 0.1);
        let theta = [0.5, 0.5];
        let y = [3.0, -1.0];
        assert_eq!(projection(&theta, &y, &set), y.to_vec());
    }

    #[test]
    fn projection_kills_radial_component_on_outer_shell() {
        let set = ProjectionSet::new(1.0, 0.1);
        // ||theta||^2 = (1 + eps) * tmax^2 puts f exactly at 1
        let r = (1.0 + set.eps).sqrt();
        let theta = [r, 0.0];
        let out = projection(&theta, &theta, &set);
        assert_relative_eq!(out[0], 0.0, epsilon = 1e-12);
        assert_relative_eq!(out[1], 0.0, epsilon = 1e-12);
    }

    #[test]
    fn projection_keeps_inward_drives() {
        let set = ProjectionSet::new(1.0, 0.1);
        let theta = [1.05, 0.0];
        let inward = [-2.0, 0.3];
        assert_eq!(projection(&theta, &inward, &set), inward.to_vec());
    }

    #[test]
    fn outward_growth_stalls_before_outer_radius() {
        // integrate theta' = proj(theta, k * theta) densely from inside
        let set = ProjectionSet::new(2.0, 0.1);
        let mut theta = vec![1.0, 0.0, 0.0];
        let dt = 1e-3;
        for _ in 0..20_000 {
            let drive: Vec<f64> = theta.iter().map(|t| 3.0 * t).collect();
            let step = projection(&theta, &drive, &set);
            for (t, s) in theta.iter_mut().zip(&step) {
                *t += dt * s;
            }
            assert!(norm(&theta) <= set.outer_radius() + 1e-9);
        }
        // the drive is pure outward growth, so the trajectory must have
        // reached the boundary layer
        assert!(norm(&theta) > set.theta_max);
    }

    #[test]
    fn filter_reaches_constant_input() {
        let mut f = FilterState::new(10.0);
        for _ in 0..10_000 {
            f = filter_step(&f, 0.7, 1e-3).unwrap();
        }
        assert_relative_eq!(f.y, 0.7, epsilon = 1e-9);
    }

    #[test]
    fn filter_zoh_analytic_value() {
        let f = FilterState::new(10.0);
        let next = filter_step(&f, 1.0, 0.1).unwrap();
        assert_relative_eq!(next.y, 1.0 - (-1.0_f64).exp(), epsilon = 1e-12);
    }

    #[test]
    fn filter_rejects_zero_cutoff() {
        let f = FilterState { omega_c: 0.0, y: 0.0 };
        assert_eq!(filter_step(&f, 1.0, 0.1), Err(SignalError::InvalidCutoff));
    }

    #[test]
    fn filter_step_response_monotone_with_unit_steady_state() {
        for omega_c in [0.5, 5.0, 50.0, 500.0] {
            let mut f = FilterState::new(omega_c);
            let mut prev = 0.0;
            for _ in 0..200_000 {
                f = filter_step(&f, 1.0, 1e-3).unwrap();
                assert!(f.y >= prev - 1e-15);
                assert!(f.y <= 1.0 + 1e-12);
                prev = f.y;
            }
            assert_relative_eq!(f.y, 1.0, epsilon = 1e-6);
        }
    }

    fn stable_a_m() -> Matrix {
        Matrix::diag(&[-1.0, -2.0, -3.0, -4.0])
    }

    #[test]
    fn predictor_stays_at_origin_without_inputs() {
        let pred = PredictorState::new([0.0; 4]);
        let next = predictor_step(
            &pred,
            &stable_a_m(),
            &[0.0, 1.0, 0.0, 1.0],
            &[0.0; 4],
            0.0,
            0.0,
            0.0,
            &[0.0; 4],
            1e-3,
        )
        .unwrap();
        assert_eq!(next.x_hat, [0.0; 4]);
        assert_eq!(next.x_tilde, [0.0; 4]);
    }

    #[test]
    fn predictor_error_decays_like_linear_flow() {
        // x_hat = x + delta e1 with no inputs: x_tilde obeys
        // x_tilde' = A_m x_tilde, so one step contracts by ~exp(a11 dt)
        let a_m = stable_a_m();
        let delta = 0.25;
        let pred = PredictorState { x_hat: [delta, 0.0, 0.0, 0.0], x_tilde: [delta, 0.0, 0.0, 0.0] };
        let dt = 1e-2;
        let next = predictor_step(
            &pred, &a_m, &[0.0; 4], &[0.0; 4], 0.0, 0.0, 0.0, &[0.0; 4], dt,
        )
        .unwrap();
        assert_relative_eq!(next.x_tilde[0], delta * (-dt).exp(), epsilon = 1e-9);
    }

    fn test_cfg(gamma: f64) -> AdaptationConfig {
        AdaptationConfig {
            gamma_w: gamma,
            gamma_zeta: gamma,
            p: Matrix::identity(4),
            b1: [0.0, 1.0, 0.0, 0.0],
        }
    }

    #[test]
    fn adapt_w_idle_when_prediction_error_is_zero() {
        let cfg = test_cfg(100.0);
        let set = ProjectionSet::new(5.0, 0.1);
        let w = vec![0.3, -0.2, 0.1];
        let next = adapt_w(&w, &cfg, &[0.0; 4], &[1.0, 1.0, 1.0], &set, 1e-3).unwrap();
        assert_eq!(next, w);
    }

    #[test]
    fn adapt_w_scalar_hand_expansion() {
        // P = I, B1 = e2, x_tilde = -e2, Phi = [1]: drive = +1, so
        // W+ = W + dt * gamma
        let cfg = test_cfg(50.0);
        let set = ProjectionSet::new(5.0, 0.1);
        let dt = 1e-3;
        let next = adapt_w(&[0.1], &cfg, &[0.0, -1.0, 0.0, 0.0], &[1.0], &set, dt).unwrap();
        assert_relative_eq!(next[0], 0.1 + dt * 50.0, epsilon = 1e-12);
    }

    #[test]
    fn adapt_w_dimension_mismatch() {
        let cfg = test_cfg(1.0);
        let set = ProjectionSet::new(1.0, 0.1);
        assert!(adapt_w(&[0.1, 0.2], &cfg, &[0.0; 4], &[1.0], &set, 1e-3).is_err());
    }

    #[test]
    fn adapt_zeta_idle_cases() {
        let cfg = test_cfg(100.0);
        let set = ProjectionSet::new(2.0, 0.1);
        let est = ParametricEstimate { zeta_hat: [0.5, 0.0, -0.5, 0.0] };
        let unchanged = adapt_zeta(&est, &cfg, &[0.0; 4], &[1.0, 2.0, 3.0, 4.0], &set, 1e-3);
        assert_eq!(unchanged.zeta_hat, est.zeta_hat);
        let zero_regressor = adapt_zeta(&est, &cfg, &[1.0, 0.0, 0.0, 0.0], &[0.0; 4], &set, 1e-3);
        assert_eq!(zero_regressor.zeta_hat, est.zeta_hat);
    }

    #[test]
    fn adaptation_laws_contained_under_random_drives() {
        let w_set = ProjectionSet::new(5.0, 0.1);
        let z_set = ProjectionSet::new(2.0, 0.1);
        let cfg = AdaptationConfig {
            gamma_w: 5000.0,
            gamma_zeta: 5000.0,
            p: Matrix::identity(4),
            b1: [0.0, 1.0, 0.0, 1.0],
        };
        let rng = CounterRng::new(31337);
        for trial in 0..20u64 {
            let stream = rng.stream(trial);
            let mut w = vec![0.0; 8];
            let mut zeta = ParametricEstimate::zero();
            for step in 0..1000u64 {
                let r = |i: u64| stream.uniform_at(step * 32 + i, -1.0, 1.0);
                let x_tilde = [r(0), r(1), r(2), r(3)];
                let x = [r(4), r(5), r(6), r(7)];
                let phi: Vec<f64> = (8..16).map(r).collect();
                w = adapt_w(&w, &cfg, &x_tilde, &phi, &w_set, 1e-3).unwrap();
                zeta = adapt_zeta(&zeta, &cfg, &x_tilde, &x, &z_set, 1e-3);
                assert!(norm(&w) <= w_set.outer_radius() + 1e-12);
                assert!(norm(&zeta.zeta_hat) <= z_set.outer_radius() + 1e-12);
            }
        }
    }
}
