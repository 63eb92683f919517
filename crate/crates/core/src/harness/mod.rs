//! Scenario runner: wires the plant, controllers, reference system, and
//! certification together, fans runs out across workers, and writes CSV
//! traces, metrics, and certification reports.

pub mod config;
pub mod trace;

use crate::certify::{certify_design, check_run, ensure_certified, BoundAudit, CertificateReport, CertifyError};
use crate::controllers::{
    controller_step, default_poles, design_gains, reference_system_step, AdaptiveDesign,
    ControlError, ControllerKind, ControllerState, GainSet, ReferenceSystemState,
};
use crate::numlin::Matrix;
use crate::plant::{
    build_plant, desired_yaw_rate, dot4, plant_step, true_uncertainty, ErrorState, PlantError,
    PlantModel, TrackSpec, UncertaintyModel,
};
use crate::signal::ProjectionSet;
use config::{ConfigError, ScenarioConfig};
use std::io::Write;
use std::path::{Path, PathBuf};
use thiserror::Error;
use trace::{RunTrace, TraceRow};

/// Worker-count override for the parallel grid.
pub const WORKERS_ENV: &str = "LANEKEEP_WORKERS";

const DIVERGENCE_LIMIT: f64 = 1e3;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Certification(#[from] CertifyError),
    #[error(transparent)]
    Control(#[from] ControlError),
    #[error(transparent)]
    Plant(#[from] PlantError),
    #[error("need at least two runs of the same scenario to compare")]
    MismatchedScenarios,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// How to fan the controller grid out.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Execution {
    #[cfg_attr(not(feature = "parallel"), default)]
    Sequential,
    #[cfg(feature = "parallel")]
    #[cfg_attr(feature = "parallel", default)]
    Parallel,
}

/// Aggregate tracking quality of one run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricsSummary {
    pub rms_e1: f64,
    pub max_abs_e1: f64,
    pub rms_e2: f64,
    /// fraction of the configured track length covered before truncation
    pub completion: f64,
    pub diverged: bool,
    /// steady-state (last half) mean absolute error of the learned
    /// uncertainty against the true parametric component
    pub uncertainty_mae: f64,
}

#[derive(Debug)]
pub struct ControllerRun {
    pub kind: ControllerKind,
    pub trace: RunTrace,
    pub metrics: MetricsSummary,
    pub audit: Option<BoundAudit>,
}

#[derive(Debug)]
pub struct ScenarioOutcome {
    pub name: String,
    pub certificate: CertificateReport,
    pub runs: Vec<ControllerRun>,
}

/// Options resolved from the CLI on top of the config file.
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub seed_override: Option<u64>,
    pub controllers_override: Option<Vec<ControllerKind>>,
    pub strict_bounds: bool,
    pub execution: Option<Execution>,
}

/// Design quantities shared by every controller of a scenario.
struct ScenarioDesign {
    plant: PlantModel,
    gains: GainSet,
    adaptive: AdaptiveDesign,
    model: UncertaintyModel,
    track: TrackSpec,
    dt: f64,
    duration: f64,
    seed: u64,
}

fn build_design(cfg: &ScenarioConfig, seed: u64) -> Result<(ScenarioDesign, CertificateReport), HarnessError> {
    let plant = build_plant(cfg.vehicle)?;
    let poles = cfg
        .gains
        .poles
        .unwrap_or_else(|| default_poles(cfg.vehicle.speed));
    let gains = design_gains(&plant, &poles)?;
    let q = Matrix::diag(&cfg.adaptive.q_diag);
    let w_set = ProjectionSet::new(cfg.adaptive.theta_max_w, cfg.adaptive.eps_proj);
    let zeta_set = ProjectionSet::new(cfg.adaptive.theta_max_zeta, cfg.adaptive.eps_proj);
    let feature_dim = *cfg.neural.hidden.last().expect("validated non-empty");
    let certificate = certify_design(
        &plant,
        &gains,
        cfg.adaptive.omega_c,
        &w_set,
        &zeta_set,
        feature_dim,
        cfg.adaptive.gamma_w,
        cfg.adaptive.gamma_zeta,
        &q,
    )?;
    let adaptive = AdaptiveDesign {
        omega_c: cfg.adaptive.omega_c,
        gamma_w: cfg.adaptive.gamma_w,
        gamma_zeta: cfg.adaptive.gamma_zeta,
        p: certificate.p.clone(),
        w_set,
        zeta_set,
        hidden: cfg.neural.hidden.clone(),
        trainer: cfg.trainer_config(),
        replay_capacity: cfg.neural.replay_capacity,
    };
    let design = ScenarioDesign {
        plant,
        gains,
        adaptive,
        model: cfg.uncertainty_model(seed),
        track: cfg.track.clone(),
        dt: cfg.scenario.dt,
        duration: cfg.scenario.duration,
        seed,
    };
    Ok((design, certificate))
}

/// Certify the design and co-simulate every requested controller on the
/// same disturbance realization. Deterministic in `(config, seed)`.
pub fn run_scenario(
    cfg: &ScenarioConfig,
    opts: &RunOptions,
) -> Result<ScenarioOutcome, HarnessError> {
    cfg.validate()?;
    let seed = opts.seed_override.unwrap_or(cfg.scenario.seed);
    let (design, certificate) = build_design(cfg, seed)?;
    if !cfg.scenario.allow_uncertified {
        ensure_certified(&certificate)?;
    }
    let mut kinds = opts
        .controllers_override
        .clone()
        .unwrap_or_else(|| cfg.controllers());
    // stable emission order: controller enum order, deduplicated
    kinds.sort_by_key(|k| ControllerKind::ALL.iter().position(|c| c == k));
    kinds.dedup();

    let exec = opts.execution.unwrap_or_default();
    let sim = |kind: &ControllerKind| simulate_run(&design, *kind);
    let results: Vec<(ControllerKind, RunTrace, MetricsSummary)> = fan_out(&kinds, exec, sim);

    let mut runs = Vec::with_capacity(results.len());
    for (kind, trace, metrics) in results {
        let audit = if kind.uses_filter() && !trace.rows.is_empty() && certificate.all_pass() {
            Some(check_run(
                &certificate,
                &trace,
                cfg.certify.eps_bar,
                opts.strict_bounds,
            )?)
        } else {
            None
        };
        runs.push(ControllerRun { kind, trace, metrics, audit });
    }
    Ok(ScenarioOutcome {
        name: cfg.scenario.name.clone(),
        certificate,
        runs,
    })
}

fn fan_out<T, F>(kinds: &[ControllerKind], exec: Execution, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(&ControllerKind) -> T + Sync,
{
    match exec {
        Execution::Sequential => kinds.iter().map(f).collect(),
        #[cfg(feature = "parallel")]
        Execution::Parallel => {
            use rayon::prelude::*;
            let workers = std::env::var(WORKERS_ENV)
                .ok()
                .and_then(|v| v.parse::<usize>().ok())
                .filter(|&n| n > 0);
            match workers {
                Some(n) => rayon::ThreadPoolBuilder::new()
                    .num_threads(n)
                    .build()
                    .expect("thread pool")
                    .install(|| kinds.par_iter().map(&f).collect()),
                None => kinds.par_iter().map(&f).collect(),
            }
        }
    }
}

/// One controller, one full run. Never fails: controller blow-ups truncate
/// the trace and set the divergence flag instead.
fn simulate_run(
    design: &ScenarioDesign,
    kind: ControllerKind,
) -> (ControllerKind, RunTrace, MetricsSummary) {
    let dt = design.dt;
    let vx = design.plant.params.speed;
    let steps = (design.duration / dt).round() as u64;
    let x0: ErrorState = [0.0; 4];
    let mut ctrl = ControllerState::new(
        kind,
        &design.plant,
        design.gains.clone(),
        &design.adaptive,
        x0,
        design.seed,
    );
    let mut refsys = ReferenceSystemState::new(x0, design.adaptive.omega_c);
    let mut x = x0;
    let mut rows: Vec<TraceRow> = Vec::with_capacity(steps as usize);
    let mut diverged = false;

    for k in 0..steps {
        let t = k as f64 * dt;
        let s = vx * t;
        let psi_dot_des = desired_yaw_rate(&design.track, s, vx);
        let sensor = design.model.sensor_noise_sample(k);
        let x_meas = [
            x[0] + sensor[0],
            x[1] + sensor[1],
            x[2] + sensor[2],
            x[3] + sensor[3],
        ];
        let d = true_uncertainty(&design.model, &x, s, k);
        let pulse_gain = design.model.pulse_gain(s);
        let residual_of =
            |xr: &ErrorState| d.noise + dot4(&pulse_gain, xr);
        let dist_residual_ref = residual_of(&refsys.x_ref);

        let x_hat_row = if kind.is_adaptive() { ctrl.x_hat() } else { x };
        let zeta_hat_row = ctrl.zeta_hat();

        let (u, diag) = match controller_step(&mut ctrl, &x_meas, 0.0, psi_dot_des, dt) {
            Ok(v) => v,
            Err(_) => {
                diverged = true;
                if let Some(last) = rows.last_mut() {
                    last.diverged = true;
                }
                break;
            }
        };
        let ref_next = match reference_system_step(
            &refsys,
            &design.plant,
            &design.gains,
            &design.model.zeta,
            residual_of,
            0.0,
            psi_dot_des,
            dt,
        ) {
            Ok(v) => v,
            Err(_) => {
                diverged = true;
                if let Some(last) = rows.last_mut() {
                    last.diverged = true;
                }
                break;
            }
        };

        rows.push(TraceRow {
            t,
            x,
            x_hat: x_hat_row,
            x_ref: refsys.x_ref,
            u,
            u_m: diag.u_m,
            u_ad: diag.u_ad,
            u_ref: ref_next.u_ref,
            zeta_hat: zeta_hat_row,
            delta_hat: diag.delta_hat,
            dist_total: d.total,
            dist_parametric: d.parametric,
            dist_noise: d.noise,
            dist_pulse: d.pulse,
            dist_residual_ref,
            psi_dot_des,
            diverged: false,
        });

        match plant_step(&design.plant, &x, u, d.total, psi_dot_des, dt) {
            Ok(next)
                if next.iter().all(|v| v.is_finite())
                    && next.iter().fold(0.0_f64, |m, v| m.max(v.abs())) <= DIVERGENCE_LIMIT =>
            {
                x = next;
            }
            _ => {
                diverged = true;
                rows.last_mut().expect("just pushed").diverged = true;
                break;
            }
        }
        refsys = ref_next;
    }

    let covered = rows.len() as f64 * dt * vx;
    let completion = (covered / design.track.length).min(1.0);
    let metrics = compute_metrics(&rows, completion, diverged);
    (
        kind,
        RunTrace { dt, rows, diverged },
        metrics,
    )
}

fn compute_metrics(rows: &[TraceRow], completion: f64, diverged: bool) -> MetricsSummary {
    if rows.is_empty() {
        return MetricsSummary {
            rms_e1: 0.0,
            max_abs_e1: 0.0,
            rms_e2: 0.0,
            completion,
            diverged,
            uncertainty_mae: 0.0,
        };
    }
    let n = rows.len();
    let mut sum_e1_sq = 0.0;
    let mut sum_e2_sq = 0.0;
    let mut max_abs_e1 = 0.0_f64;
    for row in rows {
        sum_e1_sq += row.x[0] * row.x[0];
        sum_e2_sq += row.x[2] * row.x[2];
        max_abs_e1 = max_abs_e1.max(row.x[0].abs());
    }
    let half = n / 2;
    let tail = &rows[half..];
    let mae = tail
        .iter()
        .map(|row| (row.delta_hat + dot4(&row.zeta_hat, &row.x) - row.dist_parametric).abs())
        .sum::<f64>()
        / tail.len() as f64;
    MetricsSummary {
        rms_e1: (sum_e1_sq / n as f64).sqrt(),
        max_abs_e1,
        rms_e2: (sum_e2_sq / n as f64).sqrt(),
        completion,
        diverged,
        uncertainty_mae: mae,
    }
}

/// Controllers ranked by worst lateral excursion, then RMS, then enum
/// order. Requires at least two runs of the same scenario.
pub fn compare(
    runs: &[(ControllerKind, MetricsSummary)],
) -> Result<Vec<(ControllerKind, MetricsSummary)>, HarnessError> {
    if runs.len() < 2 {
        return Err(HarnessError::MismatchedScenarios);
    }
    let mut ordered = runs.to_vec();
    ordered.sort_by(|a, b| {
        a.1.max_abs_e1
            .total_cmp(&b.1.max_abs_e1)
            .then(a.1.rms_e1.total_cmp(&b.1.rms_e1))
            .then_with(|| {
                let ia = ControllerKind::ALL.iter().position(|k| *k == a.0);
                let ib = ControllerKind::ALL.iter().position(|k| *k == b.0);
                ia.cmp(&ib)
            })
    });
    Ok(ordered)
}

pub const METRICS_SCHEMA: &str = "lanekeep-metrics-v1";
pub const CERTIFICATE_SCHEMA: &str = "lanekeep-certificate-v1";

/// Write `<out>/<scenario>/{<controller>.csv, metrics.csv, certificate.txt}`
/// and return the scenario directory.
pub fn write_outputs(outcome: &ScenarioOutcome, out_dir: &Path) -> Result<PathBuf, HarnessError> {
    let dir = out_dir.join(&outcome.name);
    std::fs::create_dir_all(&dir)?;
    for run in &outcome.runs {
        let path = dir.join(format!("{}.csv", run.kind.name()));
        let mut file = std::io::BufWriter::new(std::fs::File::create(path)?);
        run.trace.write_csv(&mut file)?;
        file.flush()?;
    }
    let mut metrics = String::new();
    metrics.push_str(&format!("#schema={METRICS_SCHEMA}\n"));
    metrics.push_str("controller,rms_e1,max_abs_e1,rms_e2,completion,diverged,uncertainty_mae\n");
    for run in &outcome.runs {
        let m = &run.metrics;
        metrics.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            run.kind.name(),
            m.rms_e1,
            m.max_abs_e1,
            m.rms_e2,
            m.completion,
            if m.diverged { 1 } else { 0 },
            m.uncertainty_mae
        ));
    }
    std::fs::write(dir.join("metrics.csv"), metrics)?;
    std::fs::write(dir.join("certificate.txt"), render_certificate(outcome))?;
    Ok(dir)
}

/// Flat `key = value` rendering of the certificate and per-run audits.
pub fn render_certificate(outcome: &ScenarioOutcome) -> String {
    let c = &outcome.certificate;
    let mut s = String::new();
    s.push_str(&format!("#schema={CERTIFICATE_SCHEMA}\n"));
    s.push_str(&format!("scenario = {}\n", outcome.name));
    s.push_str(&format!("omega_c = {}\n", c.omega_c));
    s.push_str(&format!("gamma_w = {}\n", c.gamma_w));
    s.push_str(&format!("gamma_zeta = {}\n", c.gamma_zeta));
    s.push_str(&format!("g_l1 = {}\n", c.g_l1));
    s.push_str(&format!("h_l1 = {}\n", c.h_l1));
    s.push_str(&format!("c_l1 = {}\n", c.c_l1));
    s.push_str(&format!("l1_bound = {}\n", c.l1_bound));
    s.push_str(&format!("l2_bound = {}\n", c.l2_bound));
    s.push_str(&format!("lambda1 = {}\n", c.lambda1));
    s.push_str(&format!("lambda2 = {}\n", c.lambda2));
    s.push_str(&format!("pass_lambda1 = {}\n", c.pass_lambda1));
    s.push_str(&format!("pass_lambda2 = {}\n", c.pass_lambda2));
    for i in 0..4 {
        let row: Vec<String> = (0..4).map(|j| format!("{}", c.p[(i, j)])).collect();
        s.push_str(&format!("p_row_{i} = [{}]\n", row.join(", ")));
    }
    s.push_str(&format!("eig_p_min = {}\n", c.eig_p_min));
    s.push_str(&format!("eig_p_max = {}\n", c.eig_p_max));
    s.push_str(&format!("eig_q_min = {}\n", c.eig_q_min));
    s.push_str(&format!("eig_q_max = {}\n", c.eig_q_max));
    s.push_str(&format!("w_max = {}\n", c.w_max));
    s.push_str(&format!("zeta_max = {}\n", c.zeta_max));
    s.push_str(&format!("x_tilde_bound = {}\n", c.x_tilde_bound));
    s.push_str(&format!("gamma1_xtilde_coeff = {}\n", c.gamma1_xtilde_coeff));
    s.push_str(&format!("gamma1_ddiff_coeff = {}\n", c.gamma1_ddiff_coeff));
    s.push_str(&format!("gamma1_design = {}\n", c.gamma1_design));
    s.push_str(&format!("gamma2_xref_coeff = {}\n", c.gamma2_xref_coeff));
    match c.gamma2_xtilde_coeff {
        Some(v) => s.push_str(&format!("gamma2_xtilde_coeff = {v}\n")),
        None => s.push_str("gamma2_xtilde_coeff = unavailable\n"),
    }
    match c.gamma2_design {
        Some(v) => s.push_str(&format!("gamma2_design = {v}\n")),
        None => s.push_str("gamma2_design = unavailable\n"),
    }
    s.push_str(&format!("eps_g_coeff = {}\n", c.eps_g_coeff));
    s.push_str(&format!("eps_g_strict_coeff = {}\n", c.eps_g_strict_coeff));
    for run in &outcome.runs {
        let Some(a) = &run.audit else { continue };
        let p = format!("audit.{}", run.kind.name());
        s.push_str(&format!("{p}.x_tilde_sup = {}\n", a.x_tilde_sup));
        s.push_str(&format!("{p}.x_tilde_bound = {}\n", a.x_tilde_bound));
        s.push_str(&format!("{p}.x_tilde_pass = {}\n", a.x_tilde_pass));
        s.push_str(&format!("{p}.tail_mean = {}\n", a.tail_mean));
        s.push_str(&format!("{p}.lb = {}\n", a.lb));
        s.push_str(&format!("{p}.eps_bar_used = {}\n", a.eps_bar_used));
        s.push_str(&format!("{p}.tail_pass_advisory = {}\n", a.tail_pass));
        s.push_str(&format!("{p}.ddiff_sup = {}\n", a.ddiff_sup));
        s.push_str(&format!("{p}.gamma1 = {}\n", a.gamma1));
        s.push_str(&format!("{p}.tracking_sup = {}\n", a.tracking_sup));
        s.push_str(&format!("{p}.gamma1_pass = {}\n", a.gamma1_pass));
        match (a.gamma2, a.gamma2_pass) {
            (Some(g2), Some(pass)) => {
                s.push_str(&format!("{p}.gamma2 = {g2}\n"));
                s.push_str(&format!("{p}.u_diff_sup = {}\n", a.u_diff_sup));
                s.push_str(&format!("{p}.gamma2_pass = {pass}\n"));
            }
            _ => s.push_str(&format!("{p}.gamma2 = unavailable\n")),
        }
        s.push_str(&format!("{p}.eps_g_rate = {}\n", a.eps_g_rate));
        s.push_str(&format!("{p}.eps_g_steady_rate = {}\n", a.eps_g_steady_rate));
        if let Some(rate) = a.eps_g_strict_rate {
            s.push_str(&format!("{p}.eps_g_strict_rate = {rate}\n"));
        }
    }
    s
}
