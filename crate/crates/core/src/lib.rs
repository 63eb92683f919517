//! Lane-keeping control library and scenario simulator.
//!
//! Implements and cross-compares four steering laws on the 4-state lateral
//! error dynamics of a front-steered Ackermann vehicle:
//!
//! - `lf` — linear state feedback,
//! - `l1` — filtered adaptive control with a parametric estimator,
//! - `neural-l1` — the filtered adaptive law augmented with an online
//!   neural uncertainty estimator,
//! - `deep-mrac` — the same adaptive machinery without the control filter.
//!
//! Alongside the controllers, the [`certify`] module evaluates the design's
//! stability conditions (filtered-loop gain conditions, Lyapunov solution,
//! prediction-error and transient bounds) and audits simulated traces
//! against them. The [`harness`] module runs controller/scenario grids with
//! pinned seeds and writes CSV traces, metrics, and certification reports.

pub mod certify;
pub mod controllers;
pub mod harness;
pub mod neural;
pub mod numlin;
pub mod plant;
pub mod rng;
pub mod signal;

pub use plant::ErrorState;
