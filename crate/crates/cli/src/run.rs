use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;

use platoon_core::lmi::{synthesize, LmiProblem};
use platoon_core::modal::{gamma_gain, scaling_sweep, sweep_csv};
use platoon_core::optimize::{optimize_exhaustive, optimize_greedy, EXHAUSTIVE_MAX_N};
use platoon_core::sim::{
    reference_fleet, simulate_linear, simulate_nonlinear, LinearPlatoonModel, Scenario, SimResult,
};
use platoon_core::{ControllerGains, Error, Topology, VehicleParams};

use crate::config::*;

pub const EXIT_INVALID: u8 = 2;
pub const EXIT_INFEASIBLE: u8 = 3;

#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl Failure {
    fn invalid(message: impl Into<String>) -> Self {
        Failure {
            code: EXIT_INVALID,
            message: message.into(),
        }
    }

    fn infeasible(message: impl Into<String>) -> Self {
        Failure {
            code: EXIT_INFEASIBLE,
            message: message.into(),
        }
    }

    fn io(path: &Path, e: std::io::Error) -> Self {
        Failure {
            code: 1,
            message: format!("{}: {e}", path.display()),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::InvalidTopology(_)
            | Error::NotSymmetric { .. }
            | Error::InvalidParameter(_)
            | Error::InvalidScenario(_)
            | Error::Json(_) => EXIT_INVALID,
            Error::NotHurwitz(_)
            | Error::LeaderUnreachable
            | Error::SolverFailed(_)
            | Error::VerificationFailed(_)
            | Error::InfeasibleBudget { .. } => EXIT_INFEASIBLE,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

pub type Outcome = std::result::Result<(), Failure>;

pub fn load<T: DeserializeOwned>(path: &Path) -> std::result::Result<T, Failure> {
    let text = fs::read_to_string(path)
        .map_err(|e| Failure::invalid(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Failure::invalid(format!("{}: {e}", path.display())))
}

fn write(out: &Path, name: &str, contents: &str) -> std::result::Result<PathBuf, Failure> {
    fs::create_dir_all(out).map_err(|e| Failure::io(out, e))?;
    let path = out.join(name);
    fs::write(&path, contents).map_err(|e| Failure::io(&path, e))?;
    Ok(path)
}

fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("serializable output");
    s.push('\n');
    s
}

pub fn analyze(cfg: &AnalyzeConfig, out: &Path) -> Outcome {
    let params = VehicleParams::new(cfg.tau)?;
    cfg.gains.validate()?;
    if cfg.sizes.is_empty() || cfg.sizes.contains(&0) {
        return Err(Failure::invalid(
            "sizes must be a non-empty list of positive integers",
        ));
    }
    let rows = scaling_sweep(cfg.family, &cfg.sizes, &params, &cfg.gains)?;
    let path = write(out, "sweep.csv", &sweep_csv(&rows))?;
    println!("wrote {} rows to {}", rows.len(), path.display());
    Ok(())
}

pub fn synth(cfg: &SynthConfig, out: &Path) -> Outcome {
    let problem = LmiProblem::new(cfg.tau, cfg.gamma_d)?;
    let topology = cfg.topology.build()?;
    if !topology.satisfies_spanning_tree() {
        return Err(Error::LeaderUnreachable.into());
    }
    let spectrum = topology.assemble().spectrum()?;
    let result = synthesize(&problem, &spectrum)?;
    let json = result.to_json();
    let path = write(out, "synthesis.json", &to_json(&json))?;
    println!(
        "k = ({:.6}, {:.6}, {:.6}), c = {:.6}, max modal norm = {:.6} < {}; wrote {}",
        json.k[0],
        json.k[1],
        json.k[2],
        json.c,
        json.modal_norms.iter().cloned().fold(0.0, f64::max),
        json.gamma_d,
        path.display()
    );
    Ok(())
}

#[derive(Debug, Serialize)]
struct SimSummary {
    model: &'static str,
    stable: bool,
    empirical_gain: Option<f64>,
    /// Analytic γ of the linear model, when applicable.
    gamma: Option<f64>,
    max_abs_spacing_error: f64,
    clamp_events: usize,
    samples: usize,
}

fn reference_gains(topology: &Topology) -> platoon_core::Result<ControllerGains> {
    let lambda = platoon_core::topology::lambda_min(topology)?;
    if !(lambda > 0.0) {
        return Err(Error::LeaderUnreachable);
    }
    let [kp, kv, ka] = REFERENCE_K;
    ControllerGains::new(kp, kv, ka, REFERENCE_ALPHA / lambda)
}

pub fn simulate(cfg: &SimulateConfig, out: &Path) -> Outcome {
    let topology = cfg.topology.build()?;
    if !topology.satisfies_spanning_tree() {
        return Err(Error::LeaderUnreachable.into());
    }
    let gains = match cfg.gains {
        Some(g) => g,
        None => reference_gains(&topology)?,
    };
    gains.validate()?;
    let scenario: Scenario = cfg.scenario.resolve()?;
    let (result, gamma, model): (SimResult, Option<f64>, &'static str) = match cfg.model {
        ModelKind::Linear => {
            let params = VehicleParams::new(cfg.tau)?;
            let matrix = topology.assemble();
            let report = gamma_gain(&params, &gains, &matrix.spectrum()?);
            let model = LinearPlatoonModel::new(params, gains, matrix)?;
            let r = simulate_linear(&model, &scenario, cfg.dt)?;
            (r, Some(report.gamma), "linear")
        }
        ModelKind::Nonlinear => {
            let fleet = match &cfg.fleet {
                FleetSpec::Reference {
                    gravity,
                    tire_radius,
                } => {
                    let f = reference_fleet(*gravity, *tire_radius);
                    if f.len() != topology.n() {
                        return Err(Failure::invalid(format!(
                            "the reference fleet has {} vehicles but the topology has {} followers",
                            f.len(),
                            topology.n()
                        )));
                    }
                    f
                }
                FleetSpec::Explicit(f) => f.clone(),
            };
            let r = simulate_nonlinear(&fleet, &gains, &topology, &scenario, cfg.dt)?;
            (r, None, "nonlinear")
        }
    };
    let summary = SimSummary {
        model,
        stable: result.stable,
        empirical_gain: result.empirical_gain,
        gamma,
        max_abs_spacing_error: result.max_abs_spacing_error(),
        clamp_events: result.clamp_events,
        samples: result.time.len(),
    };
    write(out, "sim.csv", &result.to_csv())?;
    write(out, "summary.json", &to_json(&summary))?;
    print!("{}", to_json(&summary));
    if !result.stable {
        return Err(Failure::infeasible("simulation diverged"));
    }
    Ok(())
}

/// Config equivalent to a named preset on reference topology `label`.
pub fn preset(name: &str, label: &str) -> std::result::Result<SimulateConfig, Failure> {
    let model = match name {
        "sine-disturbance" => ModelKind::Linear,
        "leader-ramp" => ModelKind::Nonlinear,
        other => return Err(Failure::invalid(format!("unknown preset {other:?}"))),
    };
    reference_topology(label)?;
    Ok(SimulateConfig {
        model,
        scenario: ScenarioSpec::Builtin(name.to_string()),
        topology: TopologySpec::Reference {
            label: label.to_string(),
        },
        gains: None,
        tau: 0.5,
        fleet: FleetSpec::default(),
        dt: 0.01,
    })
}

pub fn optimize(cfg: &OptimizeConfig, out: &Path) -> Outcome {
    let result = match cfg.method {
        SearchMethod::Exhaustive => optimize_exhaustive(cfg.n, cfg.budget)?,
        SearchMethod::Greedy => optimize_greedy(cfg.n, cfg.budget)?,
        SearchMethod::Auto if cfg.n <= EXHAUSTIVE_MAX_N => optimize_exhaustive(cfg.n, cfg.budget)?,
        SearchMethod::Auto => optimize_greedy(cfg.n, cfg.budget)?,
    };
    let path = write(out, "topology.json", &to_json(&result.to_json()))?;
    println!(
        "lambda_min = {:.9} with {} links ({:?}); wrote {}",
        result.lambda_min,
        result.links_used,
        result.method,
        path.display()
    );
    Ok(())
}
