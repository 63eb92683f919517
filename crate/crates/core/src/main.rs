//! Command-line scenario runner.
//!
//! Exit codes: 0 on success (including runs where a controller diverged,
//! which is reported in the metrics), 2 for configuration errors, 3 when
//! the design fails certification and no override is set.

use clap::{Parser, Subcommand};
use lanekeep::controllers::ControllerKind;
use lanekeep::harness::config::ScenarioConfig;
use lanekeep::harness::{
    compare, render_certificate, run_scenario, write_outputs, HarnessError, RunOptions,
};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "lanekeep", about = "Lane-keeping controller scenario simulator", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario config: certify the design, simulate the requested
    /// controllers, and write traces, metrics, and the certificate.
    Run {
        /// scenario config file (TOML)
        #[arg(long)]
        config: PathBuf,
        /// output directory (default: out)
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// override the config seed
        #[arg(long)]
        seed: Option<u64>,
        /// comma-separated subset: lf,l1,neural-l1,deep-mrac
        #[arg(long, value_delimiter = ',')]
        controllers: Option<Vec<String>>,
        /// evaluate and write the certificate only; no simulation
        #[arg(long)]
        certify_only: bool,
        /// audit the conservative generalization-bound variant as well
        #[arg(long)]
        strict_bounds: bool,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Run {
            config,
            out,
            seed,
            controllers,
            certify_only,
            strict_bounds,
        } => run_command(config, out, seed, controllers, certify_only, strict_bounds),
    }
}

fn parse_controllers(names: Option<Vec<String>>) -> Result<Option<Vec<ControllerKind>>, String> {
    let Some(names) = names else { return Ok(None) };
    let mut kinds = Vec::new();
    for name in names {
        match ControllerKind::parse(&name) {
            Some(kind) => kinds.push(kind),
            None => return Err(format!("unknown controller `{name}`")),
        }
    }
    if kinds.is_empty() {
        return Err("empty controller list".to_string());
    }
    Ok(Some(kinds))
}

fn run_command(
    config: PathBuf,
    out: PathBuf,
    seed: Option<u64>,
    controllers: Option<Vec<String>>,
    certify_only: bool,
    strict_bounds: bool,
) -> ExitCode {
    let cfg = match ScenarioConfig::from_path(&config) {
        Ok(cfg) => cfg,
        Err(err) => {
            eprintln!("config error: {err}");
            return ExitCode::from(2);
        }
    };
    let controllers_override = match parse_controllers(controllers) {
        Ok(v) => v,
        Err(msg) => {
            eprintln!("config error: {msg}");
            return ExitCode::from(2);
        }
    };
    let opts = RunOptions {
        seed_override: seed,
        controllers_override: if certify_only { Some(vec![]) } else { controllers_override },
        strict_bounds,
        execution: None,
    };
    let outcome = match run_scenario(&cfg, &opts) {
        Ok(outcome) => outcome,
        Err(HarnessError::Certification(err)) => {
            eprintln!("certification failure: {err}");
            return ExitCode::from(3);
        }
        Err(HarnessError::Config(err)) => {
            eprintln!("config error: {err}");
            return ExitCode::from(2);
        }
        Err(err) => {
            eprintln!("error: {err}");
            return ExitCode::from(1);
        }
    };
    if certify_only {
        let dir = out.join(&outcome.name);
        if let Err(err) = std::fs::create_dir_all(&dir).and_then(|_| {
            std::fs::write(dir.join("certificate.txt"), render_certificate(&outcome))
        }) {
            eprintln!("error: {err}");
            return ExitCode::from(1);
        }
        println!(
            "certified: lambda1 = {:.6} lambda2 = {:.6} -> {}",
            outcome.certificate.lambda1,
            outcome.certificate.lambda2,
            dir.join("certificate.txt").display()
        );
        return ExitCode::SUCCESS;
    }
    let dir = match write_outputs(&outcome, &out) {
        Ok(dir) => dir,
        Err(err) => {
            eprintln!("error: {err}");
            return ExitCode::from(1);
        }
    };
    println!(
        "scenario `{}`: lambda1 = {:.6}, lambda2 = {:.6}",
        outcome.name, outcome.certificate.lambda1, outcome.certificate.lambda2
    );
    for run in &outcome.runs {
        let m = &run.metrics;
        println!(
            "  {:<10} rms_e1 = {:.4} m, max|e1| = {:.4} m, completion = {:.2}{}",
            run.kind.name(),
            m.rms_e1,
            m.max_abs_e1,
            m.completion,
            if m.diverged { "  [diverged]" } else { "" }
        );
    }
    let pairs: Vec<_> = outcome.runs.iter().map(|r| (r.kind, r.metrics)).collect();
    if let Ok(ordered) = compare(&pairs) {
        let names: Vec<&str> = ordered.iter().map(|(k, _)| k.name()).collect();
        println!("ordering (best max|e1| first): {}", names.join(" > "));
    }
    println!("outputs: {}", dir.display());
    ExitCode::SUCCESS
}
