//! Per-step simulation records and their CSV serialization.
//!
//! The column order is fixed and versioned by the `#schema=` header comment
//! so downstream tooling can rely on it. Floats are written with Rust's
//! shortest round-trip formatting, which makes re-parsing exact and output
//! bytes reproducible.

use crate::plant::ErrorState;
use std::io::{BufRead, Write};
use thiserror::Error;

pub const TRACE_SCHEMA: &str = "lanekeep-trace-v1";

pub const TRACE_COLUMNS: &[&str] = &[
    "t", "e1", "e1_dot", "e2", "e2_dot", "xh1", "xh2", "xh3", "xh4", "xr1", "xr2", "xr3", "xr4",
    "u", "u_m", "u_ad", "u_ref", "zh1", "zh2", "zh3", "zh4", "delta_hat", "dist_total",
    "dist_parametric", "dist_noise", "dist_pulse", "dist_residual_ref", "psi_dot_des", "diverged",
];

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("malformed trace: {0}")]
    Malformed(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// One control-cadence record.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRow {
    pub t: f64,
    pub x: ErrorState,
    pub x_hat: ErrorState,
    pub x_ref: ErrorState,
    pub u: f64,
    pub u_m: f64,
    pub u_ad: f64,
    pub u_ref: f64,
    pub zeta_hat: ErrorState,
    pub delta_hat: f64,
    pub dist_total: f64,
    pub dist_parametric: f64,
    pub dist_noise: f64,
    pub dist_pulse: f64,
    /// residual disturbance evaluated at the reference state
    pub dist_residual_ref: f64,
    pub psi_dot_des: f64,
    pub diverged: bool,
}

/// Complete fixed-cadence run record for one controller.
#[derive(Debug, Clone, PartialEq)]
pub struct RunTrace {
    pub dt: f64,
    pub rows: Vec<TraceRow>,
    pub diverged: bool,
}

impl RunTrace {
    pub fn residual_at_x(&self, row: &TraceRow) -> f64 {
        row.dist_noise + row.dist_pulse
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "#schema={TRACE_SCHEMA}")?;
        writeln!(w, "{}", TRACE_COLUMNS.join(","))?;
        let mut line = String::with_capacity(512);
        for row in &self.rows {
            line.clear();
            let mut push = |v: f64| {
                if !line.is_empty() {
                    line.push(',');
                }
                line.push_str(&format!("{v}"));
            };
            push(row.t);
            for v in row.x {
                push(v);
            }
            for v in row.x_hat {
                push(v);
            }
            for v in row.x_ref {
                push(v);
            }
            push(row.u);
            push(row.u_m);
            push(row.u_ad);
            push(row.u_ref);
            for v in row.zeta_hat {
                push(v);
            }
            push(row.delta_hat);
            push(row.dist_total);
            push(row.dist_parametric);
            push(row.dist_noise);
            push(row.dist_pulse);
            push(row.dist_residual_ref);
            push(row.psi_dot_des);
            line.push(',');
            line.push_str(if row.diverged { "1" } else { "0" });
            writeln!(w, "{line}")?;
        }
        Ok(())
    }

    pub fn to_csv_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("in-memory write");
        buf
    }

    pub fn read_csv<R: BufRead>(r: R) -> Result<RunTrace, TraceError> {
        let mut rows = Vec::new();
        let mut any_diverged = false;
        for (lineno, line) in r.lines().enumerate() {
            let line = line?;
            if line.starts_with('#') || line.starts_with("t,") || line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != TRACE_COLUMNS.len() {
                return Err(TraceError::Malformed(format!(
                    "line {}: expected {} fields, got {}",
                    lineno + 1,
                    TRACE_COLUMNS.len(),
                    fields.len()
                )));
            }
            let mut it = fields.iter();
            let mut next = || -> Result<f64, TraceError> {
                it.next()
                    .unwrap()
                    .parse::<f64>()
                    .map_err(|e| TraceError::Malformed(format!("line {}: {e}", lineno + 1)))
            };
            let t = next()?;
            let x = [next()?, next()?, next()?, next()?];
            let x_hat = [next()?, next()?, next()?, next()?];
            let x_ref = [next()?, next()?, next()?, next()?];
            let u = next()?;
            let u_m = next()?;
            let u_ad = next()?;
            let u_ref = next()?;
            let zeta_hat = [next()?, next()?, next()?, next()?];
            let delta_hat = next()?;
            let dist_total = next()?;
            let dist_parametric = next()?;
            let dist_noise = next()?;
            let dist_pulse = next()?;
            let dist_residual_ref = next()?;
            let psi_dot_des = next()?;
            let diverged = next()? != 0.0;
            any_diverged |= diverged;
            rows.push(TraceRow {
                t,
                x,
                x_hat,
                x_ref,
                u,
                u_m,
                u_ad,
                u_ref,
                zeta_hat,
                delta_hat,
                dist_total,
                dist_parametric,
                dist_noise,
                dist_pulse,
                dist_residual_ref,
                psi_dot_des,
                diverged,
            });
        }
        let dt = if rows.len() >= 2 {
            rows[1].t - rows[0].t
        } else {
            0.0
        };
        Ok(RunTrace {
            dt,
            rows,
            diverged: any_diverged,
        })
    }
}
