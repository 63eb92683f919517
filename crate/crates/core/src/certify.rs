//! Design certification and run auditing.
//!
//! `certify_design` assembles every checkable quantity of a filtered
//! adaptive design: the loop transfer `G(s) = H(s)(1 - C(s))` and its L1
//! norm, the parameter-set bounds, the Lyapunov solution and its
//! eigenvalue extremes, the prediction-error bound, and the transient
//! tracking coefficients. `check_run` then audits a simulated trace
//! against those bounds step by step.

use crate::controllers::GainSet;
use crate::harness::trace::RunTrace;
use crate::numlin::{
    cascade, eig_extremes, is_hurwitz, l1_norm_auto, solve_lyapunov, LtiSystem, Matrix,
    NumlinError,
};
use crate::plant::PlantModel;
use crate::signal::ProjectionSet;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CertifyError {
    #[error("A_m is not Hurwitz")]
    NotHurwitz,
    #[error("certification failed: {condition}")]
    CertificationFailed { condition: String },
    #[error("trace is incomplete: {0}")]
    IncompleteTrace(&'static str),
    #[error("adaptation gains must be positive")]
    InvalidGains,
    #[error(transparent)]
    Numeric(#[from] NumlinError),
}

/// Everything `certify_design` computes, plus pass flags for the two loop
/// gain conditions.
#[derive(Debug, Clone)]
pub struct CertificateReport {
    pub omega_c: f64,
    pub gamma_w: f64,
    pub gamma_zeta: f64,
    /// `||G(s)||_L1` with `G = H (1 - C)`
    pub g_l1: f64,
    /// `||H(s)||_L1`, the unfiltered counterpart
    pub h_l1: f64,
    /// `||C(s)||_L1` (exactly 1 for the first-order filter)
    pub c_l1: f64,
    /// max 1-norm of the parametric vector over its projection set
    pub l1_bound: f64,
    /// max 1-norm of the feature weights over their projection set
    pub l2_bound: f64,
    pub lambda1: f64,
    pub lambda2: f64,
    pub pass_lambda1: bool,
    pub pass_lambda2: bool,
    pub p: Matrix,
    pub eig_p_min: f64,
    pub eig_p_max: f64,
    pub eig_q_min: f64,
    pub eig_q_max: f64,
    /// `4 * theta_max_w^2`
    pub w_max: f64,
    /// `4 * theta_max_zeta^2`
    pub zeta_max: f64,
    /// prediction-error bound
    /// `sqrt(w_max / (eig_p_min G1) + zeta_max / (eig_p_min G2))`
    pub x_tilde_bound: f64,
    /// `||C||_L1 / (1 - lambda1)`
    pub gamma1_xtilde_coeff: f64,
    /// `||G||_L1 / (1 - lambda1)`
    pub gamma1_ddiff_coeff: f64,
    /// gamma1 with the run-measured residual-difference term at zero
    pub gamma1_design: f64,
    /// bound on `||C zeta^T + k_m||_L1` over the parametric set
    pub gamma2_xref_coeff: f64,
    /// `||C(s) (c0 H(s))^-1 c0||_L1`; None if no minimum-phase output
    /// channel was found
    pub gamma2_xtilde_coeff: Option<f64>,
    pub gamma2_design: Option<f64>,
    /// generalization-bound coefficient `eig_q_max / eig_p_min`
    pub eps_g_coeff: f64,
    /// conservative variant `eig_q_min / (2 ||P B1||)`
    pub eps_g_strict_coeff: f64,
}

impl CertificateReport {
    pub fn all_pass(&self) -> bool {
        self.pass_lambda1 && self.pass_lambda2
    }
}

/// Fail with the first violated condition, for use as a simulation gate.
pub fn ensure_certified(report: &CertificateReport) -> Result<(), CertifyError> {
    if !report.pass_lambda1 {
        return Err(CertifyError::CertificationFailed {
            condition: format!("lambda1 = {} >= 1", report.lambda1),
        });
    }
    if !report.pass_lambda2 {
        return Err(CertifyError::CertificationFailed {
            condition: format!("lambda2 = {} >= 1", report.lambda2),
        });
    }
    Ok(())
}

/// State-space realization of `1 - C(s) = s / (s + omega_c)`.
fn one_minus_filter(omega_c: f64) -> LtiSystem {
    LtiSystem::new(
        Matrix::from_rows(&[&[-omega_c]]),
        Matrix::column(&[1.0]),
        Matrix::row(&[-omega_c]),
        Matrix::from_rows(&[&[1.0]]),
    )
    .expect("static dims")
}

/// `H(s) = (sI - A_m)^-1 B1` with full state output.
fn state_transfer(a_m: &Matrix, b1: &Matrix) -> LtiSystem {
    LtiSystem::new(
        a_m.clone(),
        b1.clone(),
        Matrix::identity(a_m.rows()),
        Matrix::zeros(a_m.rows(), 1),
    )
    .expect("static dims")
}

/// Monic characteristic polynomial coefficients (descending powers) and the
/// Faddeev-LeVerrier adjugate matrices `B_k` with
/// `(sI - A)^-1 = sum_k B_k s^{n-k} / p(s)`.
fn faddeev_leverrier(a: &Matrix) -> (Vec<f64>, Vec<Matrix>) {
    let n = a.rows();
    let mut coeffs = vec![1.0];
    let mut mats = Vec::with_capacity(n);
    let mut b = Matrix::identity(n);
    for k in 1..=n {
        mats.push(b.clone());
        let ab = a.matmul(&b);
        let trace: f64 = (0..n).map(|i| ab[(i, i)]).sum();
        let c = -trace / k as f64;
        coeffs.push(c);
        b = ab.add(&Matrix::identity(n).scale(c));
    }
    (coeffs, mats)
}

/// Roots of a polynomial (descending coefficients) via its companion matrix.
fn poly_roots(coeffs: &[f64]) -> Result<Vec<(f64, f64)>, NumlinError> {
    let lead = coeffs[0];
    let deg = coeffs.len() - 1;
    if deg == 0 {
        return Ok(Vec::new());
    }
    let mut companion = Matrix::zeros(deg, deg);
    for i in 1..deg {
        companion[(i, i - 1)] = 1.0;
    }
    for i in 0..deg {
        companion[(i, deg - 1)] = -coeffs[deg - i] / lead;
    }
    // transpose to the standard top-row form is unnecessary: eigenvalues
    // of a matrix and its transpose agree
    crate::numlin::eigenvalues(&companion)
}

/// Realize the biproper SISO transfer `num(s) / den(s)` (equal degrees,
/// descending coefficients) in controllable canonical form.
fn realize_biproper(num: &[f64], den: &[f64]) -> LtiSystem {
    let n = den.len() - 1;
    let lead = den[0];
    let den: Vec<f64> = den.iter().map(|c| c / lead).collect();
    let num: Vec<f64> = num.iter().map(|c| c / lead).collect();
    let d = num[0];
    // remainder of num - d * den has degree <= n-1
    let mut rem = vec![0.0; n];
    for i in 1..=n {
        rem[i - 1] = num[i] - d * den[i];
    }
    let mut a = Matrix::zeros(n, n);
    for i in 0..n - 1 {
        a[(i, i + 1)] = 1.0;
    }
    for j in 0..n {
        a[(n - 1, j)] = -den[n - j];
    }
    let mut b = Matrix::zeros(n, 1);
    b[(n - 1, 0)] = 1.0;
    let mut c = Matrix::zeros(1, n);
    for j in 0..n {
        // rem is descending: rem[0] s^{n-1} + ... + rem[n-1]
        c[(0, j)] = rem[n - 1 - j];
    }
    LtiSystem::new(a, b, c, Matrix::from_rows(&[&[d]])).expect("canonical dims")
}

/// `min_c0 ||C(s) (c0^T H(s))^-1 c0^T||_L1` over a family of output
/// co-vectors `c0` for which `c0^T H(s)` has relative degree one and only
/// strictly stable zeros. Any such `c0` recovers the scalar signal behind
/// `x_tilde = H(s) sigma(s)`, so each valid candidate yields a true bound
/// and the smallest wins. Pure rate channels are excluded automatically:
/// they carry a zero at the origin (a constant input leaves no
/// steady-state rate).
fn inverse_channel_gain(
    a_m: &Matrix,
    b1: &Matrix,
    omega_c: f64,
) -> Result<Option<f64>, NumlinError> {
    let (charpoly, adj) = faddeev_leverrier(a_m);
    let n = a_m.rows();
    let candidates: [[f64; 4]; 6] = [
        [0.0, 1.0, 0.0, 0.0],
        [0.0, 0.0, 0.0, 1.0],
        [1.0, 1.0, 0.0, 0.0],
        [0.0, 1.0, 1.0, 0.0],
        [0.0, 1.0, 0.0, 1.0],
        [1.0, 1.0, 1.0, 1.0],
    ];
    let mut best: Option<f64> = None;
    for c0 in &candidates {
        // numerator of c0^T (sI - A_m)^-1 B1, descending, degree n-1
        let mut num = Vec::with_capacity(n);
        for mat in &adj {
            let mb = mat.matmul(b1);
            num.push((0..n).map(|i| c0[i] * mb[(i, 0)]).sum::<f64>());
        }
        if num[0].abs() < 1e-9 {
            continue; // relative degree > 1 through this channel
        }
        let roots = poly_roots(&num)?;
        if !roots.iter().all(|&(re, _)| re < -1e-9) {
            continue; // zero at the origin or in the right half-plane
        }
        // T(s) = omega_c p(s) / (num(s) (s + omega_c))
        let t_num: Vec<f64> = charpoly.iter().map(|c| omega_c * c).collect();
        let mut t_den = vec![0.0; num.len() + 1];
        for (i, c) in num.iter().enumerate() {
            t_den[i] += c;
            t_den[i + 1] += c * omega_c;
        }
        let sys = realize_biproper(&t_num, &t_den);
        // the 1x4 row T(s) c0^T has L1 norm ||T||_L1 * ||c0||_1
        let c0_l1: f64 = c0.iter().map(|v| v.abs()).sum();
        let gain = l1_norm_auto(&sys)? * c0_l1;
        best = Some(match best {
            Some(b) if b <= gain => b,
            _ => gain,
        });
    }
    Ok(best)
}

/// Evaluate the loop-gain conditions and every bound for one design.
#[allow(clippy::too_many_arguments)]
pub fn certify_design(
    plant: &PlantModel,
    gains: &GainSet,
    omega_c: f64,
    w_set: &ProjectionSet,
    zeta_set: &ProjectionSet,
    feature_dim: usize,
    gamma_w: f64,
    gamma_zeta: f64,
    q: &Matrix,
) -> Result<CertificateReport, CertifyError> {
    if gamma_w <= 0.0 || gamma_zeta <= 0.0 {
        return Err(CertifyError::InvalidGains);
    }
    if !is_hurwitz(&gains.a_m)? {
        return Err(CertifyError::NotHurwitz);
    }
    let h = state_transfer(&gains.a_m, &plant.b1);
    let g = cascade(&one_minus_filter(omega_c), &h).map_err(CertifyError::Numeric)?;
    let g_l1 = l1_norm_auto(&g)?;
    let h_l1 = l1_norm_auto(&h)?;
    let c_sys = LtiSystem::new(
        Matrix::from_rows(&[&[-omega_c]]),
        Matrix::column(&[1.0]),
        Matrix::row(&[omega_c]),
        Matrix::zeros(1, 1),
    )
    .expect("static dims");
    let c_l1 = l1_norm_auto(&c_sys)?;

    // 1-norm maxima over 2-norm balls: sqrt(dim) * radius
    let l1_bound = 2.0 * zeta_set.theta_max;
    let l2_bound = (feature_dim as f64).sqrt() * w_set.theta_max;
    let lambda1 = g_l1 * l1_bound;
    let lambda2 = g_l1 * l2_bound;

    let p = solve_lyapunov(&gains.a_m, q)?;
    let (eig_p_min, eig_p_max) = eig_extremes(&p)?;
    let (eig_q_min, eig_q_max) = eig_extremes(q)?;

    let w_max = 4.0 * w_set.theta_max * w_set.theta_max;
    let zeta_max = 4.0 * zeta_set.theta_max * zeta_set.theta_max;
    let x_tilde_bound =
        (w_max / (eig_p_min * gamma_w) + zeta_max / (eig_p_min * gamma_zeta)).sqrt();

    let pass_lambda1 = lambda1 < 1.0;
    let pass_lambda2 = lambda2 < 1.0;
    let denom = 1.0 - lambda1;
    let (gamma1_xtilde_coeff, gamma1_ddiff_coeff) = if pass_lambda1 {
        (c_l1 / denom, g_l1 / denom)
    } else {
        (f64::INFINITY, f64::INFINITY)
    };
    let gamma1_design = gamma1_xtilde_coeff * x_tilde_bound;

    // worst case of ||C zeta^T + k_m||_L1 over the parametric set:
    // per channel |k_m_j| + ||C||_L1 |zeta_j|, summed
    let k_m_abs_sum: f64 = gains.k_m.iter().map(|v| v.abs()).sum();
    let gamma2_xref_coeff = k_m_abs_sum + c_l1 * l1_bound;
    let gamma2_xtilde_coeff = inverse_channel_gain(&gains.a_m, &plant.b1, omega_c)?;
    let gamma2_design = gamma2_xtilde_coeff
        .map(|coeff| gamma2_xref_coeff * gamma1_design + coeff * x_tilde_bound);

    let pb1 = p.matmul(&plant.b1);
    let pb1_norm = pb1.frobenius_norm();
    Ok(CertificateReport {
        omega_c,
        gamma_w,
        gamma_zeta,
        g_l1,
        h_l1,
        c_l1,
        l1_bound,
        l2_bound,
        lambda1,
        lambda2,
        pass_lambda1,
        pass_lambda2,
        p,
        eig_p_min,
        eig_p_max,
        eig_q_min,
        eig_q_max,
        w_max,
        zeta_max,
        x_tilde_bound,
        gamma1_xtilde_coeff,
        gamma1_ddiff_coeff,
        gamma1_design,
        gamma2_xref_coeff,
        gamma2_xtilde_coeff,
        gamma2_design,
        eps_g_coeff: eig_q_max / eig_p_min,
        eps_g_strict_coeff: eig_q_min / (2.0 * pb1_norm),
    })
}

/// Step-by-step audit of a run against the certified bounds.
#[derive(Debug, Clone)]
pub struct BoundAudit {
    /// sup over steps of the componentwise prediction error magnitude
    pub x_tilde_sup: f64,
    pub x_tilde_bound: f64,
    pub x_tilde_pass: bool,
    /// mean 2-norm of the prediction error over the final 10%
    pub tail_mean: f64,
    /// convergence floor `2 eig_p_max eps_bar / eig_q_min`
    pub lb: f64,
    pub eps_bar_used: f64,
    /// advisory: tail mean within the floor plus tolerance
    pub tail_pass: bool,
    /// sup of the measured residual difference between reference and plant
    pub ddiff_sup: f64,
    pub gamma1: f64,
    pub tracking_sup: f64,
    pub gamma1_pass: bool,
    pub gamma2: Option<f64>,
    pub u_diff_sup: f64,
    pub gamma2_pass: Option<bool>,
    /// fraction of steps where the neural estimate error sits inside the
    /// generalization bound
    pub eps_g_rate: f64,
    /// same rate over the last half of the run
    pub eps_g_steady_rate: f64,
    /// conservative-variant rate, when requested
    pub eps_g_strict_rate: Option<f64>,
}

const TAIL_TOL: f64 = 1e-2;

/// Audit a complete trace. `eps_bar` overrides the approximation-error
/// estimate; by default the 95th percentile of the measured neural residual
/// error stands in for it. `strict` additionally evaluates the conservative
/// generalization-bound variant.
pub fn check_run(
    report: &CertificateReport,
    trace: &RunTrace,
    eps_bar: Option<f64>,
    strict: bool,
) -> Result<BoundAudit, CertifyError> {
    // refuse uncertified designs: the transient bounds are meaningless
    // without the loop-gain conditions
    ensure_certified(report)?;
    if trace.rows.is_empty() {
        return Err(CertifyError::IncompleteTrace("no rows"));
    }
    let n = trace.rows.len();
    let mut x_tilde_sup = 0.0_f64;
    let mut ddiff_sup = 0.0_f64;
    let mut tracking_sup = 0.0_f64;
    let mut u_diff_sup = 0.0_f64;
    let mut neural_err: Vec<f64> = Vec::with_capacity(n);
    let mut x_tilde_norms: Vec<f64> = Vec::with_capacity(n);
    for row in &trace.rows {
        let finite = row.x.iter().chain(row.x_hat.iter()).chain(row.x_ref.iter());
        for v in finite {
            if !v.is_finite() {
                return Err(CertifyError::IncompleteTrace("non-finite state entry"));
            }
        }
        let mut xt_inf = 0.0_f64;
        let mut xt_sq = 0.0;
        for i in 0..4 {
            let d = row.x_hat[i] - row.x[i];
            xt_inf = xt_inf.max(d.abs());
            xt_sq += d * d;
            tracking_sup = tracking_sup.max((row.x_ref[i] - row.x[i]).abs());
        }
        x_tilde_sup = x_tilde_sup.max(xt_inf);
        x_tilde_norms.push(xt_sq.sqrt());
        let residual_x = row.dist_noise + row.dist_pulse;
        ddiff_sup = ddiff_sup.max((row.dist_residual_ref - residual_x).abs());
        u_diff_sup = u_diff_sup.max((row.u_ref - row.u).abs());
        neural_err.push((row.delta_hat - residual_x).abs());
    }
    let x_tilde_pass = x_tilde_sup <= report.x_tilde_bound;

    let tail_start = n - (n / 10).max(1);
    let tail_mean =
        x_tilde_norms[tail_start..].iter().sum::<f64>() / (n - tail_start) as f64;
    let eps_bar_used = eps_bar.unwrap_or_else(|| {
        let mut sorted = neural_err.clone();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        sorted[(0.95 * (n as f64 - 1.0)).round() as usize]
    });
    let lb = 2.0 * report.eig_p_max * eps_bar_used / report.eig_q_min;
    let tail_pass = tail_mean <= lb + TAIL_TOL;

    let gamma1 =
        report.gamma1_xtilde_coeff * report.x_tilde_bound + report.gamma1_ddiff_coeff * ddiff_sup;
    let gamma1_pass = tracking_sup <= gamma1;
    let gamma2 = report
        .gamma2_xtilde_coeff
        .map(|coeff| report.gamma2_xref_coeff * gamma1 + coeff * report.x_tilde_bound);
    let gamma2_pass = gamma2.map(|g2| u_diff_sup <= g2);

    let count_rate = |coeff: f64, from: usize| -> f64 {
        let total = n - from;
        let hits = (from..n)
            .filter(|&i| neural_err[i] < coeff * x_tilde_norms[i] || neural_err[i] == 0.0)
            .count();
        hits as f64 / total as f64
    };
    let eps_g_rate = count_rate(report.eps_g_coeff, 0);
    let eps_g_steady_rate = count_rate(report.eps_g_coeff, n / 2);
    let eps_g_strict_rate = strict.then(|| count_rate(report.eps_g_strict_coeff, 0));

    Ok(BoundAudit {
        x_tilde_sup,
        x_tilde_bound: report.x_tilde_bound,
        x_tilde_pass,
        tail_mean,
        lb,
        eps_bar_used,
        tail_pass,
        ddiff_sup,
        gamma1,
        tracking_sup,
        gamma1_pass,
        gamma2,
        u_diff_sup,
        gamma2_pass,
        eps_g_rate,
        eps_g_steady_rate,
        eps_g_strict_rate,
    })
}
