//! Lateral error dynamics of a front-steered Ackermann vehicle.
//!
//! The error state is `[e1, e1_dot, e2, e2_dot]`: lateral offset from the
//! lane center line (m, m/s) and yaw misalignment against the desired
//! heading (rad, rad/s). At constant longitudinal speed the dynamics are
//! linear; curvature enters as a known yaw-rate feedforward through `B2`,
//! the steering input and the matched disturbance enter through `B1`.

use crate::numlin::{rk4_step4, Matrix, NumlinError};
use crate::rng::CounterRng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// `[e1, e1_dot, e2, e2_dot]` in (m, m/s, rad, rad/s).
pub type ErrorState = [f64; 4];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PlantError {
    #[error("invalid vehicle parameter: {0}")]
    InvalidParams(&'static str),
    #[error("model is singular: longitudinal speed too close to zero")]
    Singular,
    #[error(transparent)]
    Numeric(#[from] NumlinError),
}

/// Physical vehicle parameters. All strictly positive; the error-dynamics
/// model divides by the longitudinal speed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VehicleParams {
    /// mass (kg)
    pub mass: f64,
    /// yaw moment of inertia (kg m^2)
    pub yaw_inertia: f64,
    /// distance from center of gravity to front axle (m)
    pub front_axle: f64,
    /// distance from center of gravity to rear axle (m)
    pub rear_axle: f64,
    /// front tire cornering stiffness (N/rad)
    pub front_stiffness: f64,
    /// rear tire cornering stiffness (N/rad)
    pub rear_stiffness: f64,
    /// constant longitudinal speed (m/s)
    pub speed: f64,
}

impl VehicleParams {
    pub fn validate(&self) -> Result<(), PlantError> {
        let checks = [
            (self.mass, "mass"),
            (self.yaw_inertia, "yaw_inertia"),
            (self.front_axle, "front_axle"),
            (self.rear_axle, "rear_axle"),
            (self.front_stiffness, "front_stiffness"),
            (self.rear_stiffness, "rear_stiffness"),
        ];
        for (v, name) in checks {
            if !(v.is_finite() && v > 0.0) {
                return Err(PlantError::InvalidParams(name));
            }
        }
        if !self.speed.is_finite() || self.speed <= 0.0 {
            if self.speed.abs() < 1e-6 {
                return Err(PlantError::Singular);
            }
            return Err(PlantError::InvalidParams("speed"));
        }
        if self.speed < 1e-6 {
            return Err(PlantError::Singular);
        }
        Ok(())
    }
}

/// Assembled state-space model `x' = A x + B1 u + B2 psi_dot_des`,
/// `y = c x`.
#[derive(Debug, Clone)]
pub struct PlantModel {
    pub params: VehicleParams,
    pub a: Matrix,
    pub b1: Matrix,
    pub b2: Matrix,
    pub c: Matrix,
}

impl PlantModel {
    pub fn b1_vec(&self) -> ErrorState {
        [self.b1[(0, 0)], self.b1[(1, 0)], self.b1[(2, 0)], self.b1[(3, 0)]]
    }

    pub fn b2_vec(&self) -> ErrorState {
        [self.b2[(0, 0)], self.b2[(1, 0)], self.b2[(2, 0)], self.b2[(3, 0)]]
    }

    /// Controllability matrix rank of `(A, B1)`; the designs here need 4.
    pub fn controllability_rank(&self) -> usize {
        let n = 4;
        let mut cols: Vec<Vec<f64>> = Vec::with_capacity(n);
        let mut v: Vec<f64> = self.b1.data().to_vec();
        cols.push(v.clone());
        for _ in 1..n {
            v = self.a.matvec(&v);
            cols.push(v.clone());
        }
        let mut ctrb = Matrix::zeros(n, n);
        for (j, col) in cols.iter().enumerate() {
            for i in 0..n {
                ctrb[(i, j)] = col[i];
            }
        }
        ctrb.rank(1e-10)
    }
}

/// Populate the error-dynamics matrices from vehicle parameters.
pub fn build_plant(params: VehicleParams) -> Result<PlantModel, PlantError> {
    params.validate()?;
    let m = params.mass;
    let iz = params.yaw_inertia;
    let lf = params.front_axle;
    let lr = params.rear_axle;
    let caf = params.front_stiffness;
    let car = params.rear_stiffness;
    let vx = params.speed;

    let stiff_sum = 2.0 * caf + 2.0 * car;
    let stiff_moment = 2.0 * caf * lf - 2.0 * car * lr;
    let stiff_inertia = 2.0 * caf * lf * lf + 2.0 * car * lr * lr;

    let a = Matrix::from_rows(&[
        &[0.0, 1.0, 0.0, 0.0],
        &[
            0.0,
            -stiff_sum / (m * vx),
            stiff_sum / m,
            -stiff_moment / (m * vx),
        ],
        &[0.0, 0.0, 0.0, 1.0],
        &[
            0.0,
            -stiff_moment / (iz * vx),
            stiff_moment / iz,
            -stiff_inertia / (iz * vx),
        ],
    ]);
    let b1 = Matrix::column(&[0.0, 2.0 * caf / m, 0.0, 2.0 * caf * lf / iz]);
    let b2 = Matrix::column(&[
        0.0,
        -vx - stiff_moment / (m * vx),
        0.0,
        -stiff_inertia / (iz * vx),
    ]);
    let c = Matrix::row(&[1.0, 0.0, 0.0, 0.0]);
    Ok(PlantModel { params, a, b1, b2, c })
}

/// Reference path shape expressed as curvature over arc length.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum TrackKind {
    /// Constant-radius circle, curvature `1/radius`.
    Circle { radius: f64 },
    /// Piecewise-constant curvature schedule; zero outside all segments.
    CurvatureSchedule { segments: Vec<CurvatureSegment> },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvatureSegment {
    /// arc-length start (m), inclusive
    pub from: f64,
    /// arc-length end (m), exclusive
    pub to: f64,
    /// curvature (1/m)
    pub curvature: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackSpec {
    #[serde(flatten)]
    pub kind: TrackKind,
    /// total arc length (m)
    pub length: f64,
}

impl TrackSpec {
    pub fn curvature(&self, s: f64) -> f64 {
        match &self.kind {
            TrackKind::Circle { radius } => 1.0 / radius,
            TrackKind::CurvatureSchedule { segments } => segments
                .iter()
                .find(|seg| s >= seg.from && s < seg.to)
                .map(|seg| seg.curvature)
                .unwrap_or(0.0),
        }
    }
}

/// Desired yaw rate `Vx * kappa(s)`; `Vx / R` on a constant-radius track.
pub fn desired_yaw_rate(track: &TrackSpec, s: f64, vx: f64) -> f64 {
    vx * track.curvature(s)
}

/// Matched disturbance model: a constant parametric component `zeta^T x`,
/// uniform white control noise, scheduled state-dependent pulses, and
/// optional uniform sensor noise on the measured state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UncertaintyModel {
    pub zeta: [f64; 4],
    /// uniform control-noise bounds (rad)
    pub control_noise: (f64, f64),
    /// uniform state-measurement noise bounds, applied per component
    pub sensor_noise: (f64, f64),
    /// arc-length windows adding an extra parametric term `gain^T x`
    #[serde(default)]
    pub pulses: Vec<Pulse>,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Pulse {
    pub from: f64,
    pub to: f64,
    pub gain: [f64; 4],
}

/// Components of the injected disturbance at one step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Disturbance {
    pub total: f64,
    pub parametric: f64,
    pub noise: f64,
    pub pulse: f64,
}

const STREAM_CONTROL_NOISE: u64 = 0;
const STREAM_SENSOR_NOISE: u64 = 1;

impl UncertaintyModel {
    pub fn validate(&self) -> Result<(), PlantError> {
        if self.control_noise.0 > self.control_noise.1 {
            return Err(PlantError::InvalidParams("control_noise bounds"));
        }
        if self.sensor_noise.0 > self.sensor_noise.1 {
            return Err(PlantError::InvalidParams("sensor_noise bounds"));
        }
        let finite = self.zeta.iter().all(|v| v.is_finite())
            && self
                .pulses
                .iter()
                .all(|p| p.gain.iter().all(|v| v.is_finite()));
        if !finite {
            return Err(PlantError::InvalidParams("non-finite disturbance"));
        }
        Ok(())
    }

    pub fn has_sensor_noise(&self) -> bool {
        self.sensor_noise.0 != 0.0 || self.sensor_noise.1 != 0.0
    }

    /// Combined pulse gain active at arc length `s`.
    pub fn pulse_gain(&self, s: f64) -> [f64; 4] {
        let mut g = [0.0; 4];
        for p in &self.pulses {
            if s >= p.from && s < p.to {
                for (acc, v) in g.iter_mut().zip(&p.gain) {
                    *acc += v;
                }
            }
        }
        g
    }

    /// Residual (non-parametric) part of the disturbance at state `x`:
    /// the step's noise sample plus the active pulse contribution. This is
    /// the component the reference system re-evaluates at its own state.
    pub fn residual_at(&self, x: &ErrorState, s: f64, step: u64) -> f64 {
        let noise = self.noise_sample(step);
        let gain = self.pulse_gain(s);
        noise + dot4(&gain, x)
    }

    pub fn noise_sample(&self, step: u64) -> f64 {
        if self.control_noise.0 == self.control_noise.1 {
            return self.control_noise.0;
        }
        CounterRng::new(self.seed)
            .stream(STREAM_CONTROL_NOISE)
            .uniform_at(step, self.control_noise.0, self.control_noise.1)
    }

    /// Per-component uniform sensor noise for one step.
    pub fn sensor_noise_sample(&self, step: u64) -> [f64; 4] {
        if !self.has_sensor_noise() {
            return [0.0; 4];
        }
        let rng = CounterRng::new(self.seed).stream(STREAM_SENSOR_NOISE);
        let (lo, hi) = self.sensor_noise;
        let mut out = [0.0; 4];
        for (ch, v) in out.iter_mut().enumerate() {
            *v = rng.uniform_at(step * 4 + ch as u64, lo, hi);
        }
        out
    }
}

pub fn dot4(a: &[f64; 4], b: &[f64; 4]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2] + a[3] * b[3]
}

/// Evaluate the true matched disturbance at state `x`, arc length `s`, and
/// step index `step`. Deterministic in `(seed, step)`.
pub fn true_uncertainty(model: &UncertaintyModel, x: &ErrorState, s: f64, step: u64) -> Disturbance {
    let parametric = dot4(&model.zeta, x);
    let noise = model.noise_sample(step);
    let pulse = dot4(&model.pulse_gain(s), x);
    Disturbance {
        total: parametric + noise + pulse,
        parametric,
        noise,
        pulse,
    }
}

/// Advance the true state one step: RK4 on
/// `x' = A x + B1 (u + disturbance) + B2 psi_dot_des` with all inputs held
/// over the step.
pub fn plant_step(
    plant: &PlantModel,
    x: &ErrorState,
    u: f64,
    disturbance: f64,
    psi_dot_des: f64,
    dt: f64,
) -> Result<ErrorState, PlantError> {
    let a = rows4(&plant.a);
    let b1 = plant.b1_vec();
    let b2 = plant.b2_vec();
    let forcing = |x: &ErrorState| {
        let mut dx = [0.0; 4];
        for i in 0..4 {
            let mut acc = b1[i] * (u + disturbance) + b2[i] * psi_dot_des;
            for j in 0..4 {
                acc += a[i][j] * x[j];
            }
            dx[i] = acc;
        }
        dx
    };
    Ok(rk4_step4(forcing, x, dt)?)
}

/// Stack copy of a 4x4 matrix for hot loops.
pub(crate) fn rows4(m: &Matrix) -> [[f64; 4]; 4] {
    let mut out = [[0.0; 4]; 4];
    for (i, row) in out.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            *v = m[(i, j)];
        }
    }
    out
}

/// Fixed-cadence simulation clock.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimClock {
    pub dt: f64,
    pub step_index: u64,
}

impl SimClock {
    pub fn new(dt: f64) -> Self {
        SimClock { dt, step_index: 0 }
    }

    pub fn t(&self) -> f64 {
        self.step_index as f64 * self.dt
    }

    pub fn advance(&mut self) {
        self.step_index += 1;
    }
}

/// One-tenth-scale RC car default parameter set used by the shipped scenarios.
/// Rear-stiff tire balance keeps the steady-state lateral offset on tight
/// circles small once the yaw-error feedback term is accounted for.
pub fn default_params() -> VehicleParams {
    VehicleParams {
        mass: 3.5,
        yaw_inertia: 0.1,
        front_axle: 0.155,
        rear_axle: 0.165,
        front_stiffness: 55.0,
        rear_stiffness: 120.0,
        speed: 10.0,
    }
}
