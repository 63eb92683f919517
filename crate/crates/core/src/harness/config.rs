//! Scenario configuration: one TOML file describes the vehicle, track,
//! disturbance model, controller design, and run settings.

use crate::controllers::ControllerKind;
use crate::neural::TrainerConfig;
use crate::plant::{Pulse, TrackSpec, UncertaintyModel, VehicleParams};
use serde::{Deserialize, Serialize};
use std::path::Path;

pub const CONFIG_SCHEMA: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScenarioConfig {
    /// config schema version; this crate writes and reads version 1
    pub schema: u32,
    pub scenario: ScenarioSection,
    pub vehicle: VehicleParams,
    pub track: TrackSpec,
    pub uncertainty: UncertaintySection,
    #[serde(default)]
    pub gains: GainsSection,
    pub adaptive: AdaptiveSection,
    #[serde(default)]
    pub neural: NeuralSection,
    #[serde(default)]
    pub certify: CertifySection,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScenarioSection {
    pub name: String,
    pub dt: f64,
    pub duration: f64,
    pub seed: u64,
    pub controllers: Vec<String>,
    /// run even when the loop-gain conditions fail (negative tests)
    #[serde(default)]
    pub allow_uncertified: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct UncertaintySection {
    pub zeta: [f64; 4],
    /// uniform bounds (rad) on the control-channel noise
    pub control_noise: [f64; 2],
    /// uniform bounds on per-component state measurement noise
    #[serde(default)]
    pub sensor_noise: [f64; 2],
    #[serde(default)]
    pub pulses: Vec<PulseSection>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PulseSection {
    pub from: f64,
    pub to: f64,
    pub gain: [f64; 4],
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct GainsSection {
    /// closed-loop poles; defaults scale with speed when omitted
    pub poles: Option<[f64; 4]>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AdaptiveSection {
    pub omega_c: f64,
    pub gamma_w: f64,
    pub gamma_zeta: f64,
    #[serde(default = "default_theta_max_w")]
    pub theta_max_w: f64,
    #[serde(default = "default_theta_max_zeta")]
    pub theta_max_zeta: f64,
    #[serde(default = "default_eps_proj")]
    pub eps_proj: f64,
    #[serde(default = "default_q_diag")]
    pub q_diag: [f64; 4],
}

fn default_theta_max_w() -> f64 {
    5.0
}

fn default_theta_max_zeta() -> f64 {
    2.0
}

fn default_eps_proj() -> f64 {
    0.1
}

fn default_q_diag() -> [f64; 4] {
    [1.0; 4]
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NeuralSection {
    #[serde(default = "default_hidden")]
    pub hidden: Vec<usize>,
    #[serde(default = "default_learning_rate")]
    pub learning_rate: f64,
    #[serde(default = "default_batch_size")]
    pub batch_size: usize,
    #[serde(default = "default_inner_update_period")]
    pub inner_update_period: u64,
    #[serde(default = "default_epochs_per_update")]
    pub epochs_per_update: usize,
    #[serde(default = "default_grad_clip")]
    pub grad_clip: f64,
    #[serde(default = "default_replay_capacity")]
    pub replay_capacity: usize,
}

fn default_hidden() -> Vec<usize> {
    vec![16, 16]
}

fn default_learning_rate() -> f64 {
    0.01
}

fn default_batch_size() -> usize {
    32
}

fn default_inner_update_period() -> u64 {
    500
}

fn default_epochs_per_update() -> usize {
    5
}

fn default_grad_clip() -> f64 {
    1.0
}

fn default_replay_capacity() -> usize {
    2000
}

impl Default for NeuralSection {
    fn default() -> Self {
        NeuralSection {
            hidden: default_hidden(),
            learning_rate: default_learning_rate(),
            batch_size: default_batch_size(),
            inner_update_period: default_inner_update_period(),
            epochs_per_update: default_epochs_per_update(),
            grad_clip: default_grad_clip(),
            replay_capacity: default_replay_capacity(),
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct CertifySection {
    /// approximation-error estimate for the convergence-floor audit;
    /// measured from the trace when omitted
    pub eps_bar: Option<f64>,
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config: {0}")]
    Io(#[from] std::io::Error),
    #[error("cannot parse config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("config field `{field}`: {reason}")]
    Invalid { field: &'static str, reason: String },
}

impl ScenarioConfig {
    pub fn from_path(path: &Path) -> Result<ScenarioConfig, ConfigError> {
        let text = std::fs::read_to_string(path)?;
        let cfg: ScenarioConfig = toml::from_str(&text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    // negated comparisons are deliberate: they reject NaN as well
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    pub fn validate(&self) -> Result<(), ConfigError> {
        let fail = |field: &'static str, reason: String| Err(ConfigError::Invalid { field, reason });
        if self.schema != CONFIG_SCHEMA {
            return fail("schema", format!("unsupported version {}", self.schema));
        }
        if !(self.scenario.dt > 0.0) {
            return fail("scenario.dt", "must be positive".into());
        }
        if !(self.scenario.duration > 0.0) {
            return fail("scenario.duration", "must be positive".into());
        }
        if self.scenario.controllers.is_empty() {
            return fail("scenario.controllers", "at least one controller".into());
        }
        for name in &self.scenario.controllers {
            if ControllerKind::parse(name).is_none() {
                return fail(
                    "scenario.controllers",
                    format!("unknown controller `{name}`"),
                );
            }
        }
        if self.vehicle.validate().is_err() {
            return fail("vehicle", "parameters must be strictly positive".into());
        }
        if !(self.track.length > 0.0) {
            return fail("track.length", "must be positive".into());
        }
        if self.uncertainty.control_noise[0] > self.uncertainty.control_noise[1] {
            return fail("uncertainty.control_noise", "lo must not exceed hi".into());
        }
        if self.uncertainty.sensor_noise[0] > self.uncertainty.sensor_noise[1] {
            return fail("uncertainty.sensor_noise", "lo must not exceed hi".into());
        }
        if !(self.adaptive.omega_c > 0.0) {
            return fail("adaptive.omega_c", "must be positive".into());
        }
        if !(self.adaptive.gamma_w > 0.0) || !(self.adaptive.gamma_zeta > 0.0) {
            return fail("adaptive", "adaptation gains must be positive".into());
        }
        if !(self.adaptive.theta_max_w > 0.0) || !(self.adaptive.theta_max_zeta > 0.0) {
            return fail("adaptive", "projection radii must be positive".into());
        }
        if !(self.adaptive.eps_proj > 0.0 && self.adaptive.eps_proj <= 1.0) {
            return fail("adaptive.eps_proj", "must lie in (0, 1]".into());
        }
        if self.adaptive.q_diag.iter().any(|&v| v <= 0.0) {
            return fail("adaptive.q_diag", "entries must be positive".into());
        }
        if self.neural.hidden.is_empty() || self.neural.hidden.contains(&0) {
            return fail("neural.hidden", "layer widths must be positive".into());
        }
        if self.neural.batch_size == 0
            || self.neural.epochs_per_update == 0
            || self.neural.inner_update_period == 0
            || self.neural.replay_capacity == 0
        {
            return fail("neural", "training settings must be positive".into());
        }
        if !(self.neural.learning_rate > 0.0) || !(self.neural.grad_clip > 0.0) {
            return fail("neural", "learning rate and clip must be positive".into());
        }
        Ok(())
    }

    pub fn controllers(&self) -> Vec<ControllerKind> {
        self.scenario
            .controllers
            .iter()
            .filter_map(|s| ControllerKind::parse(s))
            .collect()
    }

    pub fn uncertainty_model(&self, seed: u64) -> UncertaintyModel {
        UncertaintyModel {
            zeta: self.uncertainty.zeta,
            control_noise: (
                self.uncertainty.control_noise[0],
                self.uncertainty.control_noise[1],
            ),
            sensor_noise: (
                self.uncertainty.sensor_noise[0],
                self.uncertainty.sensor_noise[1],
            ),
            pulses: self
                .uncertainty
                .pulses
                .iter()
                .map(|p| Pulse { from: p.from, to: p.to, gain: p.gain })
                .collect(),
            seed,
        }
    }

    pub fn trainer_config(&self) -> TrainerConfig {
        TrainerConfig {
            batch_size: self.neural.batch_size,
            learning_rate: self.neural.learning_rate,
            inner_update_period: self.neural.inner_update_period,
            epochs_per_update: self.neural.epochs_per_update,
            grad_clip: self.neural.grad_clip,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) const SAMPLE: &str = r#"
schema = 1

[scenario]
name = "circle-test"
dt = 0.001
duration = 5.0
seed = 42
controllers = ["lf", "l1"]

[vehicle]
mass = 3.5
yaw_inertia = 0.062
front_axle = 0.155
rear_axle = 0.165
front_stiffness = 55.0
rear_stiffness = 60.0
speed = 10.0

[track]
kind = "circle"
radius = 10.0
length = 50.0

[uncertainty]
zeta = [0.5314, 0.16918, -0.6245, 0.1095]
control_noise = [-0.1, 0.1]

[adaptive]
omega_c = 150.0
gamma_w = 8000.0
gamma_zeta = 8000.0
"#;

    #[test]
    fn sample_parses_with_defaults() {
        let cfg: ScenarioConfig = toml::from_str(SAMPLE).unwrap();
        cfg.validate().unwrap();
        assert_eq!(cfg.scenario.name, "circle-test");
        assert_eq!(cfg.neural.hidden, vec![16, 16]);
        assert_eq!(cfg.adaptive.theta_max_zeta, 2.0);
        assert_eq!(cfg.controllers().len(), 2);
        assert_eq!(cfg.uncertainty.sensor_noise, [0.0, 0.0]);
    }

    #[test]
    fn bad_controller_name_is_flagged_with_field() {
        let text = SAMPLE.replace("\"l1\"", "\"pid\"");
        let cfg: ScenarioConfig = toml::from_str(&text).unwrap();
        let err = cfg.validate().unwrap_err();
        match err {
            ConfigError::Invalid { field, .. } => assert_eq!(field, "scenario.controllers"),
            other => panic!("unexpected error {other}"),
        }
    }

    #[test]
    fn negative_dt_is_rejected() {
        let text = SAMPLE.replace("dt = 0.001", "dt = -0.001");
        let cfg: ScenarioConfig = toml::from_str(&text).unwrap();
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn curvature_schedule_track_parses() {
        let text = SAMPLE.replace(
            "kind = \"circle\"\nradius = 10.0\nlength = 50.0",
            "kind = \"curvature-schedule\"\nlength = 50.0\nsegments = [ { from = 0.0, to = 20.0, curvature = 0.05 } ]",
        );
        let cfg: ScenarioConfig = toml::from_str(&text).unwrap();
        cfg.validate().unwrap();
        assert_eq!(cfg.track.curvature(10.0), 0.05);
        assert_eq!(cfg.track.curvature(30.0), 0.0);
    }
}
