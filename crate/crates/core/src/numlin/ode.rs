//! Classical fixed-step Runge-Kutta integration.

use super::NumlinError;

/// One classical RK4 step of `x' = f(x)` with the right-hand side frozen
/// inputs baked into `f`. Local truncation error is O(dt^5).
pub fn rk4_step<F>(f: F, x: &[f64], dt: f64) -> Result<Vec<f64>, NumlinError>
where
    F: Fn(&[f64], &mut [f64]),
{
    let n = x.len();
    let mut k1 = vec![0.0; n];
    let mut k2 = vec![0.0; n];
    let mut k3 = vec![0.0; n];
    let mut k4 = vec![0.0; n];
    let mut tmp = vec![0.0; n];
    let mut out = vec![0.0; n];
    rk4_step_into(&f, x, dt, &mut k1, &mut k2, &mut k3, &mut k4, &mut tmp, &mut out)?;
    Ok(out)
}

/// Stack-only RK4 step for 4-state systems; same scheme as [`rk4_step`],
/// used in the simulation hot loops.
pub fn rk4_step4<F>(f: F, x: &[f64; 4], dt: f64) -> Result<[f64; 4], NumlinError>
where
    F: Fn(&[f64; 4]) -> [f64; 4],
{
    let k1 = f(x);
    let mut tmp = [0.0; 4];
    for i in 0..4 {
        tmp[i] = x[i] + 0.5 * dt * k1[i];
    }
    let k2 = f(&tmp);
    for i in 0..4 {
        tmp[i] = x[i] + 0.5 * dt * k2[i];
    }
    let k3 = f(&tmp);
    for i in 0..4 {
        tmp[i] = x[i] + dt * k3[i];
    }
    let k4 = f(&tmp);
    let mut out = [0.0; 4];
    for i in 0..4 {
        out[i] = x[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        if !out[i].is_finite() {
            return Err(NumlinError::NonFinite("rk4 step"));
        }
    }
    Ok(out)
}

/// Allocation-free RK4 kernel for hot loops; the public [`rk4_step`] wraps it.
#[allow(clippy::too_many_arguments)]
pub fn rk4_step_into<F>(
    f: &F,
    x: &[f64],
    dt: f64,
    k1: &mut [f64],
    k2: &mut [f64],
    k3: &mut [f64],
    k4: &mut [f64],
    tmp: &mut [f64],
    out: &mut [f64],
) -> Result<(), NumlinError>
where
    F: Fn(&[f64], &mut [f64]),
{
    let n = x.len();
    f(x, k1);
    for i in 0..n {
        tmp[i] = x[i] + 0.5 * dt * k1[i];
    }
    f(tmp, k2);
    for i in 0..n {
        tmp[i] = x[i] + 0.5 * dt * k2[i];
    }
    f(tmp, k3);
    for i in 0..n {
        tmp[i] = x[i] + dt * k3[i];
    }
    f(tmp, k4);
    for i in 0..n {
        out[i] = x[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        if !out[i].is_finite() {
            return Err(NumlinError::NonFinite("rk4 step"));
        }
    }
    Ok(())
}
