//! Scenario-grid throughput: parallel fan-out vs sequential execution.

use criterion::{criterion_group, criterion_main, Criterion};
use lanekeep::harness::config::ScenarioConfig;
use lanekeep::harness::{run_scenario, Execution, RunOptions};

fn bench_config() -> ScenarioConfig {
    let text = r#"
schema = 1

[scenario]
name = "bench-circle"
dt = 0.001
duration = 2.0
seed = 42
controllers = ["lf", "l1", "neural-l1", "deep-mrac"]

[vehicle]
mass = 3.5
yaw_inertia = 0.1
front_axle = 0.155
rear_axle = 0.165
front_stiffness = 55.0
rear_stiffness = 120.0
speed = 10.0

[track]
kind = "circle"
radius = 10.0
length = 20.0

[uncertainty]
zeta = [0.5314, 0.16918, -0.6245, 0.1095]
control_noise = [-0.1, 0.1]

[gains]
poles = [-9.0, -10.0, -11.0, -12.0]

[adaptive]
omega_c = 1300.0
gamma_w = 8000.0
gamma_zeta = 8000.0
theta_max_w = 0.5
theta_max_zeta = 1.0

[neural]
hidden = [16, 16]
inner_update_period = 2500
replay_capacity = 1000
"#;
    toml::from_str(text).expect("bench config")
}

fn bench_grid(c: &mut Criterion) {
    let cfg = bench_config();
    let mut group = c.benchmark_group("scenario-grid");
    group.sample_size(10);
    group.bench_function("sequential", |b| {
        b.iter(|| {
            let opts = RunOptions {
                execution: Some(Execution::Sequential),
                ..Default::default()
            };
            run_scenario(&cfg, &opts).expect("run")
        })
    });
    #[cfg(feature = "parallel")]
    group.bench_function("parallel", |b| {
        b.iter(|| {
            let opts = RunOptions {
                execution: Some(Execution::Parallel),
                ..Default::default()
            };
            run_scenario(&cfg, &opts).expect("run")
        })
    });
    group.finish();
}

criterion_group!(benches, bench_grid);
criterion_main!(benches);
