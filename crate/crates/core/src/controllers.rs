//! The four steering laws and the closed-loop reference system.
//!
//! All controllers share the uniform step interface: measured state in,
//! steering command and diagnostics out. The adaptive kinds share one
//! predictor/adaptation pipeline and differ only in whether a neural
//! estimator contributes and whether the adaptive command passes through
//! the low-pass filter.

use crate::neural::{train_inner, LastLayer, NeuralError, NeuralNet, ReplayBuffer, TrainerConfig};
use crate::numlin::{is_hurwitz, Matrix, NumlinError};
use crate::plant::{dot4, plant_step, ErrorState, PlantError, PlantModel};
use crate::rng::CounterRng;
use crate::signal::{
    adapt_w, adapt_zeta, filter_step, predictor_step, AdaptationConfig, FilterState,
    ParametricEstimate, PredictorState, ProjectionSet, SignalError,
};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ControlError {
    #[error("(A, B1) is not controllable")]
    Uncontrollable,
    #[error("reference gain is singular: c^T A_m^-1 B1 = 0")]
    SingularKg,
    #[error("pole placement did not produce a Hurwitz A_m")]
    NotHurwitz,
    #[error(transparent)]
    Numeric(#[from] NumlinError),
    #[error(transparent)]
    Signal(#[from] SignalError),
    #[error(transparent)]
    Neural(#[from] NeuralError),
    #[error(transparent)]
    Plant(#[from] PlantError),
}

/// Static feedback design: gain row, reference gain, and closed-loop matrix.
#[derive(Debug, Clone)]
pub struct GainSet {
    pub k_m: ErrorState,
    pub k_g: f64,
    pub a_m: Matrix,
}

/// Place the eigenvalues of `A - B1 k_m` at `poles` by Ackermann's formula
/// and derive the reference gain `k_g = -1 / (c A_m^-1 B1)`.
pub fn design_gains(plant: &PlantModel, poles: &[f64; 4]) -> Result<GainSet, ControlError> {
    let n = 4;
    let b1: Vec<f64> = plant.b1.data().to_vec();
    let mut ctrb = Matrix::zeros(n, n);
    let mut col = b1.clone();
    for j in 0..n {
        for i in 0..n {
            ctrb[(i, j)] = col[i];
        }
        col = plant.a.matvec(&col);
    }
    if ctrb.rank(1e-10) < n {
        return Err(ControlError::Uncontrollable);
    }
    // phi(A) = prod (A - p_i I)
    let mut phi = Matrix::identity(n);
    for &p in poles {
        let shifted = plant.a.sub(&Matrix::identity(n).scale(p));
        phi = phi.matmul(&shifted);
    }
    // k = e_n^T Ctrb^-1 phi(A)  ->  solve Ctrb^T z = e_n, then k = phi^T z
    let mut e_n = vec![0.0; n];
    e_n[n - 1] = 1.0;
    let z = ctrb
        .transpose()
        .solve_vec(&e_n)
        .map_err(|_| ControlError::Uncontrollable)?;
    let k_vec = phi.transpose().matvec(&z);
    let k_m = [k_vec[0], k_vec[1], k_vec[2], k_vec[3]];
    let a_m = plant.a.sub(&plant.b1.matmul(&Matrix::row(&k_m)));
    if !is_hurwitz(&a_m)? {
        return Err(ControlError::NotHurwitz);
    }
    let y = a_m.solve_vec(&b1).map_err(ControlError::Numeric)?;
    let denom: f64 = (0..n).map(|i| plant.c[(0, i)] * y[i]).sum();
    if denom.abs() < 1e-12 {
        return Err(ControlError::SingularKg);
    }
    Ok(GainSet {
        k_m,
        k_g: -1.0 / denom,
        a_m,
    })
}

/// Default pole set for the shipped designs: real poles scaled with speed.
pub fn default_poles(vx: f64) -> [f64; 4] {
    let scale = (vx / 10.0).clamp(0.1, 3.0);
    [-6.5 * scale, -7.5 * scale, -8.5 * scale, -9.5 * scale]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ControllerKind {
    Lf,
    L1,
    NeuralL1,
    DeepMrac,
}

impl ControllerKind {
    pub const ALL: [ControllerKind; 4] = [
        ControllerKind::Lf,
        ControllerKind::L1,
        ControllerKind::NeuralL1,
        ControllerKind::DeepMrac,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            ControllerKind::Lf => "lf",
            ControllerKind::L1 => "l1",
            ControllerKind::NeuralL1 => "neural-l1",
            ControllerKind::DeepMrac => "deep-mrac",
        }
    }

    pub fn parse(s: &str) -> Option<ControllerKind> {
        match s.trim() {
            "lf" => Some(ControllerKind::Lf),
            "l1" => Some(ControllerKind::L1),
            "neural-l1" => Some(ControllerKind::NeuralL1),
            "deep-mrac" => Some(ControllerKind::DeepMrac),
            _ => None,
        }
    }

    pub fn uses_filter(&self) -> bool {
        matches!(self, ControllerKind::L1 | ControllerKind::NeuralL1)
    }

    pub fn uses_net(&self) -> bool {
        matches!(self, ControllerKind::NeuralL1 | ControllerKind::DeepMrac)
    }

    pub fn is_adaptive(&self) -> bool {
        !matches!(self, ControllerKind::Lf)
    }
}

impl std::fmt::Display for ControllerKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Neural estimator bundle carried by the kinds that use it.
#[derive(Debug, Clone)]
struct NetState {
    net: NeuralNet,
    last: LastLayer,
    buffer: ReplayBuffer,
    trainer: TrainerConfig,
    train_rng: CounterRng,
    train_calls: u64,
}

/// Adaptive machinery shared by `l1`, `neural-l1`, and `deep-mrac`.
#[derive(Debug, Clone)]
struct AdaptiveState {
    predictor: PredictorState,
    zeta_est: ParametricEstimate,
    filter: FilterState,
    adaptation: AdaptationConfig,
    w_set: ProjectionSet,
    zeta_set: ProjectionSet,
    net: Option<NetState>,
}

#[derive(Debug, Clone)]
enum Substate {
    Static,
    Adaptive(Box<AdaptiveState>),
}

/// Everything one controller instance owns for one simulation stream.
#[derive(Debug, Clone)]
pub struct ControllerState {
    pub kind: ControllerKind,
    pub gains: GainSet,
    b1: ErrorState,
    b2: ErrorState,
    substate: Substate,
    step: u64,
}

/// Design inputs for the adaptive kinds.
#[derive(Debug, Clone)]
pub struct AdaptiveDesign {
    pub omega_c: f64,
    pub gamma_w: f64,
    pub gamma_zeta: f64,
    pub p: Matrix,
    pub w_set: ProjectionSet,
    pub zeta_set: ProjectionSet,
    pub hidden: Vec<usize>,
    pub trainer: TrainerConfig,
    pub replay_capacity: usize,
}

impl ControllerState {
    pub fn new(
        kind: ControllerKind,
        plant: &PlantModel,
        gains: GainSet,
        design: &AdaptiveDesign,
        x0: ErrorState,
        seed: u64,
    ) -> ControllerState {
        let b1 = plant.b1_vec();
        let b2 = plant.b2_vec();
        let substate = if kind.is_adaptive() {
            let net = if kind.uses_net() {
                let rng = CounterRng::new(seed).stream(0x6e6e); // "nn"
                let net = NeuralNet::init(4, &design.hidden, &rng);
                let last = LastLayer::zeros(net.feature_dim());
                Some(NetState {
                    net,
                    last,
                    buffer: ReplayBuffer::new(design.replay_capacity),
                    trainer: design.trainer,
                    train_rng: rng.stream(0x7472), // "tr"
                    train_calls: 0,
                })
            } else {
                None
            };
            Substate::Adaptive(Box::new(AdaptiveState {
                predictor: PredictorState::new(x0),
                zeta_est: ParametricEstimate::zero(),
                filter: FilterState::new(design.omega_c),
                adaptation: AdaptationConfig {
                    gamma_w: design.gamma_w,
                    gamma_zeta: design.gamma_zeta,
                    p: design.p.clone(),
                    b1,
                },
                w_set: design.w_set,
                zeta_set: design.zeta_set,
                net,
            }))
        } else {
            Substate::Static
        };
        ControllerState {
            kind,
            gains,
            b1,
            b2,
            substate,
            step: 0,
        }
    }

    pub fn x_hat(&self) -> ErrorState {
        match &self.substate {
            Substate::Static => [f64::NAN; 4],
            Substate::Adaptive(a) => a.predictor.x_hat,
        }
    }

    pub fn zeta_hat(&self) -> ErrorState {
        match &self.substate {
            Substate::Static => [0.0; 4],
            Substate::Adaptive(a) => a.zeta_est.zeta_hat,
        }
    }

    pub fn last_layer_norm(&self) -> f64 {
        match &self.substate {
            Substate::Adaptive(a) => a
                .net
                .as_ref()
                .map(|n| n.last.w.iter().map(|v| v * v).sum::<f64>().sqrt())
                .unwrap_or(0.0),
            Substate::Static => 0.0,
        }
    }

    pub fn inner_weights_hash(&self) -> Option<u64> {
        match &self.substate {
            Substate::Adaptive(a) => a.net.as_ref().map(|n| n.net.inner_hash()),
            Substate::Static => None,
        }
    }
}

/// Per-step breakdown reported alongside the command.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepDiagnostics {
    pub u_m: f64,
    pub u_ad: f64,
    /// neural contribution `W^T Phi(x_meas)`
    pub delta_hat: f64,
    /// parametric contribution `zeta_hat^T x_meas`
    pub zeta_hat_x: f64,
    pub x_tilde: ErrorState,
}

/// Advance one control step: compute the command for the interval starting
/// now, adapt the estimates, and advance the predictor.
pub fn controller_step(
    state: &mut ControllerState,
    x_meas: &ErrorState,
    r: f64,
    psi_dot_des: f64,
    dt: f64,
) -> Result<(f64, StepDiagnostics), ControlError> {
    let k_m = state.gains.k_m;
    let k_g = state.gains.k_g;
    let feedback = -dot4(&k_m, x_meas);
    let (u, diag) = match &mut state.substate {
        Substate::Static => {
            let u_m = feedback + k_g * r;
            (
                u_m,
                StepDiagnostics {
                    u_m,
                    u_ad: 0.0,
                    delta_hat: 0.0,
                    zeta_hat_x: 0.0,
                    x_tilde: [0.0; 4],
                },
            )
        }
        Substate::Adaptive(adaptive) => {
            let x_hat = adaptive.predictor.x_hat;
            let x_tilde = [
                x_hat[0] - x_meas[0],
                x_hat[1] - x_meas[1],
                x_hat[2] - x_meas[2],
                x_hat[3] - x_meas[3],
            ];
            adaptive.predictor.x_tilde = x_tilde;

            let phi = adaptive.net.as_ref().map(|n| n.net.features(x_meas));
            let delta_hat = match (&adaptive.net, &phi) {
                (Some(n), Some(phi)) => phi.iter().zip(&n.last.w).map(|(p, w)| p * w).sum(),
                _ => 0.0,
            };
            let zeta_hat_x = adaptive.zeta_est.value_at(x_meas);
            let raw = delta_hat + zeta_hat_x - k_g * r;
            let u_ad = if state.kind.uses_filter() {
                adaptive.filter = filter_step(&adaptive.filter, -raw, dt)?;
                adaptive.filter.y
            } else {
                -raw
            };
            let u_m = feedback;
            let u = u_m + u_ad;

            // adaptation laws, driven by the current prediction error
            adaptive.zeta_est = adapt_zeta(
                &adaptive.zeta_est,
                &adaptive.adaptation,
                &x_tilde,
                x_meas,
                &adaptive.zeta_set,
                dt,
            );
            if let (Some(net_state), Some(phi)) = (&mut adaptive.net, &phi) {
                net_state.last.w = adapt_w(
                    &net_state.last.w,
                    &adaptive.adaptation,
                    &x_tilde,
                    phi,
                    &adaptive.w_set,
                    dt,
                )?;
                // generative label: the estimate as it stood this step
                net_state.buffer.record(*x_meas, delta_hat);
                if (state.step + 1).is_multiple_of(net_state.trainer.inner_update_period)
                    && !net_state.buffer.is_empty()
                {
                    let call_rng = net_state.train_rng.stream(net_state.train_calls);
                    net_state.net = train_inner(
                        &net_state.net,
                        &net_state.last,
                        &net_state.buffer,
                        &net_state.trainer,
                        &call_rng,
                    )?;
                    net_state.train_calls += 1;
                }
            }

            // predictor advance with the estimates that produced u_ad
            adaptive.predictor = predictor_step(
                &adaptive.predictor,
                &state.gains.a_m,
                &state.b1,
                &state.b2,
                delta_hat + zeta_hat_x,
                u_ad,
                psi_dot_des,
                x_meas,
                dt,
            )?;

            (
                u,
                StepDiagnostics {
                    u_m,
                    u_ad,
                    delta_hat,
                    zeta_hat_x,
                    x_tilde,
                },
            )
        }
    };
    state.step += 1;
    Ok((u, diag))
}

/// Ideal non-adaptive twin of the filtered adaptive loop: it knows the true
/// parametric vector and the true residual and applies the filtered law to
/// them directly.
#[derive(Debug, Clone)]
pub struct ReferenceSystemState {
    pub x_ref: ErrorState,
    pub u_ref: f64,
    pub filter: FilterState,
}

impl ReferenceSystemState {
    pub fn new(x0: ErrorState, omega_c: f64) -> Self {
        ReferenceSystemState {
            x_ref: x0,
            u_ref: 0.0,
            filter: FilterState::new(omega_c),
        }
    }
}

/// Advance the reference system one step. Caller guarantees the design is
/// certified (filtered-loop gain condition below one), otherwise the
/// internal feedback may be divergent.
#[allow(clippy::too_many_arguments)]
pub fn reference_system_step<F>(
    state: &ReferenceSystemState,
    plant: &PlantModel,
    gains: &GainSet,
    true_zeta: &[f64; 4],
    residual_of: F,
    r: f64,
    psi_dot_des: f64,
    dt: f64,
) -> Result<ReferenceSystemState, ControlError>
where
    F: Fn(&ErrorState) -> f64,
{
    let eta = residual_of(&state.x_ref) + dot4(true_zeta, &state.x_ref);
    let filter = filter_step(&state.filter, -(eta - gains.k_g * r), dt)?;
    let u_ad = filter.y;
    let u_ref = -dot4(&gains.k_m, &state.x_ref) + u_ad;
    let x_ref = plant_step(plant, &state.x_ref, u_ref, eta, psi_dot_des, dt)?;
    Ok(ReferenceSystemState { x_ref, u_ref, filter })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numlin::{eigenvalues, solve_lyapunov};
    use crate::plant::{build_plant, default_params};
    use approx::assert_relative_eq;

    #[test]
    fn design_gains_scalar_analogue() {
        // A = 0, B1 = 1 embedded in the 4-state machinery is impossible, so
        // verify the scalar identity directly: with A_m = [-1], c = [1],
        // B1 = [1], k_g = -1 / (c A_m^-1 B1) = 1.
        let a_m = Matrix::from_rows(&[&[-1.0]]);
        let y = a_m.solve_vec(&[1.0]).unwrap();
        let k_g = -1.0 / y[0];
        assert_relative_eq!(k_g, 1.0);
    }

    #[test]
    fn pole_placement_hits_requested_poles() {
        let plant = build_plant(default_params()).unwrap();
        let poles = [-3.0, -5.0, -7.0, -9.0];
        let gains = design_gains(&plant, &poles).unwrap();
        let mut eigs: Vec<f64> = eigenvalues(&gains.a_m).unwrap().iter().map(|e| e.0).collect();
        eigs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let mut want = poles;
        want.sort_by(|a, b| a.partial_cmp(b).unwrap());
        for (got, expect) in eigs.iter().zip(&want) {
            assert_relative_eq!(got, expect, max_relative = 1e-6);
        }
        assert!(is_hurwitz(&gains.a_m).unwrap());
        assert!(gains.k_g.is_finite());
    }

    #[test]
    fn default_design_is_hurwitz() {
        let params = default_params();
        let plant = build_plant(params).unwrap();
        let gains = design_gains(&plant, &default_poles(params.speed)).unwrap();
        assert!(is_hurwitz(&gains.a_m).unwrap());
    }

    #[test]
    fn uncontrollable_pair_is_rejected() {
        let params = default_params();
        let mut plant = build_plant(params).unwrap();
        plant.b1 = Matrix::column(&[0.0, 0.0, 0.0, 0.0]);
        assert!(matches!(
            design_gains(&plant, &default_poles(10.0)),
            Err(ControlError::Uncontrollable)
        ));
    }

    #[test]
    fn rate_output_makes_reference_gain_singular() {
        // a pure rate output has zero DC gain from the steering channel
        // (constant input leaves no steady-state rate), so k_g blows up
        let params = default_params();
        let mut plant = build_plant(params).unwrap();
        plant.c = Matrix::row(&[0.0, 1.0, 0.0, 0.0]);
        assert!(matches!(
            design_gains(&plant, &default_poles(10.0)),
            Err(ControlError::SingularKg)
        ));
    }

    fn small_design(_plant: &PlantModel, gains: &GainSet, omega_c: f64) -> AdaptiveDesign {
        let q = Matrix::identity(4);
        let p = solve_lyapunov(&gains.a_m, &q).unwrap();
        AdaptiveDesign {
            omega_c,
            gamma_w: 2000.0,
            gamma_zeta: 2000.0,
            p,
            w_set: ProjectionSet::new(5.0, 0.1),
            zeta_set: ProjectionSet::new(2.0, 0.1),
            hidden: vec![8, 8],
            trainer: TrainerConfig::default(),
            replay_capacity: 256,
        }
    }

    #[test]
    fn zero_state_zero_reference_gives_zero_command_for_every_kind() {
        let plant = build_plant(default_params()).unwrap();
        let gains = design_gains(&plant, &default_poles(10.0)).unwrap();
        let design = small_design(&plant, &gains, 100.0);
        for kind in ControllerKind::ALL {
            let mut state =
                ControllerState::new(kind, &plant, gains.clone(), &design, [0.0; 4], 1);
            let (u, diag) = controller_step(&mut state, &[0.0; 4], 0.0, 0.0, 1e-3).unwrap();
            assert_eq!(u, 0.0, "{kind}");
            assert_eq!(diag.u_m + diag.u_ad, u);
        }
    }

    #[test]
    fn command_always_decomposes_exactly() {
        let plant = build_plant(default_params()).unwrap();
        let gains = design_gains(&plant, &default_poles(10.0)).unwrap();
        let design = small_design(&plant, &gains, 100.0);
        let rng = CounterRng::new(17);
        for kind in ControllerKind::ALL {
            let mut state =
                ControllerState::new(kind, &plant, gains.clone(), &design, [0.0; 4], 1);
            for step in 0..200u64 {
                let r = |i: u64| rng.uniform_at(step * 8 + i, -0.5, 0.5);
                let x = [r(0), r(1), r(2), r(3)];
                let (u, diag) = controller_step(&mut state, &x, r(4), r(5), 1e-3).unwrap();
                assert_eq!(u, diag.u_m + diag.u_ad, "{kind} step {step}");
            }
        }
    }

    #[test]
    fn adaptive_path_inert_without_uncertainty() {
        // with zero disturbance, zero forcing, and zero initial estimates
        // the prediction error stays exactly zero, so the adaptive path
        // never wakes up and L1 equals LF bit for bit
        let plant = build_plant(default_params()).unwrap();
        let gains = design_gains(&plant, &default_poles(10.0)).unwrap();
        let design = small_design(&plant, &gains, 100.0);
        let mut lf = ControllerState::new(ControllerKind::Lf, &plant, gains.clone(), &design, [0.0; 4], 1);
        let mut l1 = ControllerState::new(ControllerKind::L1, &plant, gains.clone(), &design, [0.0; 4], 1);
        let mut x = [0.0; 4];
        let dt = 1e-3;
        for _ in 0..5000 {
            let (u_lf, _) = controller_step(&mut lf, &x, 0.0, 0.0, dt).unwrap();
            let (u_l1, diag) = controller_step(&mut l1, &x, 0.0, 0.0, dt).unwrap();
            assert_eq!(u_lf, u_l1);
            assert_eq!(diag.x_tilde, [0.0; 4]);
            x = plant_step(&plant, &x, u_lf, 0.0, 0.0, dt).unwrap();
        }
    }

    #[test]
    fn forced_null_case_gap_comes_from_sampled_adaptation() {
        // under curvature forcing the zero-order-hold feedback departs from
        // the predictor's continuous closed-loop model at O(dt) during the
        // transient. With adaptation off that mismatch never reaches the
        // command (L1 == LF exactly); with adaptation on, the gap it
        // induces shrinks as the step size drops.
        let plant = build_plant(default_params()).unwrap();
        let gains = design_gains(&plant, &default_poles(10.0)).unwrap();
        let sup_gap = |dt: f64, gamma: f64| -> f64 {
            let mut design = small_design(&plant, &gains, 1300.0);
            design.gamma_w = gamma;
            design.gamma_zeta = gamma;
            let mut lf =
                ControllerState::new(ControllerKind::Lf, &plant, gains.clone(), &design, [0.0; 4], 1);
            let mut l1 =
                ControllerState::new(ControllerKind::L1, &plant, gains.clone(), &design, [0.0; 4], 1);
            let mut x_a = [0.0; 4];
            let mut x_b = [0.0; 4];
            let steps = (3.0 / dt) as usize;
            let mut sup = 0.0_f64;
            for _ in 0..steps {
                let (u_a, _) = controller_step(&mut lf, &x_a, 0.0, 1.0, dt).unwrap();
                let (u_b, _) = controller_step(&mut l1, &x_b, 0.0, 1.0, dt).unwrap();
                x_a = plant_step(&plant, &x_a, u_a, 0.0, 1.0, dt).unwrap();
                x_b = plant_step(&plant, &x_b, u_b, 0.0, 1.0, dt).unwrap();
                for i in 0..4 {
                    sup = sup.max((x_a[i] - x_b[i]).abs());
                }
            }
            sup
        };
        assert!(sup_gap(2e-4, 1e-12) < 1e-9, "idle adaptation must not perturb the loop");
        let coarse = sup_gap(4e-4, 2000.0);
        let fine = sup_gap(1e-4, 2000.0);
        assert!(
            fine < 0.6 * coarse,
            "gap should shrink with dt: {fine} vs {coarse}"
        );
    }

    #[test]
    fn deep_mrac_equals_neural_l1_at_wideband_cutoff() {
        let plant = build_plant(default_params()).unwrap();
        let gains = design_gains(&plant, &default_poles(10.0)).unwrap();
        let mut design = small_design(&plant, &gains, 1e6);
        // no inner training inside the window
        design.trainer.inner_update_period = 100_000;
        let mut nl1 = ControllerState::new(
            ControllerKind::NeuralL1,
            &plant,
            gains.clone(),
            &design,
            [0.0; 4],
            1,
        );
        let mut mrac = ControllerState::new(
            ControllerKind::DeepMrac,
            &plant,
            gains.clone(),
            &design,
            [0.0; 4],
            1,
        );
        let zeta = [0.5314, 0.16918, -0.6245, 0.1095];
        let mut x_a = [0.0; 4];
        let mut x_b = [0.0; 4];
        let dt = 1e-3;
        for _ in 0..1000 {
            let (u_a, _) = controller_step(&mut nl1, &x_a, 0.0, 1.0, dt).unwrap();
            let (u_b, _) = controller_step(&mut mrac, &x_b, 0.0, 1.0, dt).unwrap();
            assert!((u_a - u_b).abs() < 1e-4, "{u_a} vs {u_b}");
            x_a = plant_step(&plant, &x_a, u_a, dot4(&zeta, &x_a), 1.0, dt).unwrap();
            x_b = plant_step(&plant, &x_b, u_b, dot4(&zeta, &x_b), 1.0, dt).unwrap();
        }
    }

    #[test]
    fn pinned_true_estimates_keep_prediction_error_at_sampling_floor() {
        // disable adaptation and seed the parametric estimate with the
        // truth: predictor and plant then integrate the same field up to
        // the zero-order-hold feedback mismatch, so the prediction error
        // sits at the O(dt) sampling floor and shrinks with the step
        let plant = build_plant(default_params()).unwrap();
        let gains = design_gains(&plant, &default_poles(10.0)).unwrap();
        let zeta = [0.5314, 0.16918, -0.6245, 0.1095];
        let run = |dt: f64| -> f64 {
            let mut design = small_design(&plant, &gains, 100.0);
            design.gamma_w = 1e-12;
            design.gamma_zeta = 1e-12;
            let mut state = ControllerState::new(
                ControllerKind::L1,
                &plant,
                gains.clone(),
                &design,
                [0.0; 4],
                1,
            );
            if let Substate::Adaptive(a) = &mut state.substate {
                a.zeta_est = ParametricEstimate { zeta_hat: zeta };
            }
            let mut x = [0.0; 4];
            let steps = (2.0 / dt) as usize;
            let mut sup = 0.0_f64;
            for _ in 0..steps {
                let (u, diag) = controller_step(&mut state, &x, 0.0, 1.0, dt).unwrap();
                for c in diag.x_tilde {
                    sup = sup.max(c.abs());
                }
                x = plant_step(&plant, &x, u, dot4(&zeta, &x), 1.0, dt).unwrap();
            }
            sup
        };
        let coarse = run(4e-4);
        let fine = run(1e-4);
        assert!(fine < 2e-3, "prediction error above sampling floor: {fine}");
        assert!(
            fine < 0.5 * coarse,
            "sampling floor should shrink with dt: {fine} vs {coarse}"
        );
    }

    #[test]
    fn reference_system_stays_put_without_forcing() {
        let plant = build_plant(default_params()).unwrap();
        let gains = design_gains(&plant, &default_poles(10.0)).unwrap();
        let mut state = ReferenceSystemState::new([0.0; 4], 100.0);
        for _ in 0..100 {
            state = reference_system_step(
                &state,
                &plant,
                &gains,
                &[0.0; 4],
                |_| 0.0,
                0.0,
                0.0,
                1e-3,
            )
            .unwrap();
        }
        assert_eq!(state.x_ref, [0.0; 4]);
        assert_eq!(state.u_ref, 0.0);
    }

    #[test]
    fn reference_system_bounded_on_circle_with_uncertainty() {
        let plant = build_plant(default_params()).unwrap();
        let gains = design_gains(&plant, &default_poles(10.0)).unwrap();
        let zeta = [0.5314, 0.16918, -0.6245, 0.1095];
        let rng = CounterRng::new(5).stream(0);
        let mut state = ReferenceSystemState::new([0.0; 4], 100.0);
        let dt = 1e-3;
        let mut sup = 0.0_f64;
        for step in 0..60_000u64 {
            let noise = rng.uniform_at(step, -0.1, 0.1);
            state = reference_system_step(
                &state,
                &plant,
                &gains,
                &zeta,
                |_| noise,
                0.0,
                1.0,
                dt,
            )
            .unwrap();
            let norm = state.x_ref.iter().map(|v| v * v).sum::<f64>().sqrt();
            sup = sup.max(norm);
        }
        assert!(sup.is_finite());
        assert!(sup < 10.0, "reference trajectory should stay modest: {sup}");
    }

    #[test]
    fn controller_parses_names() {
        assert_eq!(ControllerKind::parse("lf"), Some(ControllerKind::Lf));
        assert_eq!(ControllerKind::parse("neural-l1"), Some(ControllerKind::NeuralL1));
        assert_eq!(ControllerKind::parse("nope"), None);
        assert_eq!(ControllerKind::DeepMrac.name(), "deep-mrac");
    }
}
