use serde::Deserialize;

use platoon_core::modal::TopologyFamily;
use platoon_core::sim::{NonlinearVehicleParams, Scenario};
use platoon_core::topology::TopologyJson;
use platoon_core::{ControllerGains, Error, Result, Topology};

/// Coupling-design multiplier used with the reference topologies.
pub const REFERENCE_ALPHA: f64 = 1.968;
/// Reference feedback gains `(k_p, k_v, k_a)`.
pub const REFERENCE_K: [f64; 3] = [2.122, 3.425, 2.501];

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum TopologySpec {
    Explicit {
        n: usize,
        #[serde(default)]
        edges: Vec<[usize; 2]>,
        #[serde(default)]
        pinned: Vec<usize>,
    },
    Bd {
        n: usize,
    },
    Bdl {
        n: usize,
    },
    Star {
        n: usize,
    },
    /// `pinned` uses 1-based indices; defaults to follower 1.
    HNeighbor {
        n: usize,
        h: usize,
        #[serde(default)]
        pinned: Option<Vec<usize>>,
    },
    MiniPlatoons {
        sizes: Vec<usize>,
        #[serde(default = "one")]
        intra_h: usize,
    },
    /// Ten-follower reference topologies `a`–`d`.
    Reference {
        label: String,
    },
}

fn one() -> usize {
    1
}

impl TopologySpec {
    pub fn build(&self) -> Result<Topology> {
        match self {
            TopologySpec::Explicit { n, edges, pinned } => Topology::from_json(&TopologyJson {
                n: *n,
                edges: edges.clone(),
                pinned: pinned.clone(),
            }),
            TopologySpec::Bd { n } => Topology::bd(*n),
            TopologySpec::Bdl { n } => Topology::bdl(*n),
            TopologySpec::Star { n } => Topology::star(*n),
            TopologySpec::HNeighbor { n, h, pinned } => {
                let pins = match pinned {
                    None => vec![0],
                    Some(p) => p
                        .iter()
                        .map(|i| {
                            i.checked_sub(1).ok_or_else(|| {
                                Error::InvalidTopology("follower indices are 1-based".into())
                            })
                        })
                        .collect::<Result<_>>()?,
                };
                Topology::h_neighbor(*n, *h, &pins)
            }
            TopologySpec::MiniPlatoons { sizes, intra_h } => {
                Topology::mini_platoons(sizes, *intra_h)
            }
            TopologySpec::Reference { label } => reference_topology(label),
        }
    }
}

pub fn reference_topology(label: &str) -> Result<Topology> {
    match label {
        "a" => Topology::h_neighbor(10, 2, &[0]),
        "b" => Topology::h_neighbor(10, 4, &[0]),
        "c" => Topology::mini_platoons(&[5, 5], 1),
        "d" => Topology::mini_platoons(&[3, 4, 3], 1),
        other => Err(Error::InvalidTopology(format!(
            "unknown reference topology {other:?}; expected a, b, c or d"
        ))),
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalyzeConfig {
    pub family: TopologyFamily,
    pub sizes: Vec<usize>,
    pub tau: f64,
    pub gains: ControllerGains,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthConfig {
    pub tau: f64,
    pub gamma_d: f64,
    pub topology: TopologySpec,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Linear,
    Nonlinear,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum ScenarioSpec {
    Builtin(String),
    Custom(Scenario),
}

impl ScenarioSpec {
    pub fn resolve(&self) -> Result<Scenario> {
        match self {
            ScenarioSpec::Builtin(name) => Scenario::builtin(name).ok_or_else(|| {
                Error::InvalidScenario(format!("unknown builtin scenario {name:?}"))
            }),
            ScenarioSpec::Custom(s) => Ok(s.clone()),
        }
    }
}

/// Fleet overrides for the nonlinear model.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum FleetSpec {
    Reference {
        #[serde(default = "default_gravity")]
        gravity: f64,
        #[serde(default = "default_tire_radius")]
        tire_radius: f64,
    },
    Explicit(Vec<NonlinearVehicleParams>),
}

fn default_gravity() -> f64 {
    9.8
}

fn default_tire_radius() -> f64 {
    0.3
}

impl Default for FleetSpec {
    fn default() -> Self {
        FleetSpec::Reference {
            gravity: default_gravity(),
            tire_radius: default_tire_radius(),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateConfig {
    pub model: ModelKind,
    pub scenario: ScenarioSpec,
    pub topology: TopologySpec,
    /// Omitted `c` (or omitted gains) on a reference topology uses
    /// `α/λ_min` with the reference multiplier.
    #[serde(default)]
    pub gains: Option<ControllerGains>,
    #[serde(default = "default_tau")]
    pub tau: f64,
    #[serde(default)]
    pub fleet: FleetSpec,
    #[serde(default = "default_dt")]
    pub dt: f64,
}

fn default_tau() -> f64 {
    0.5
}

fn default_dt() -> f64 {
    0.01
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SearchMethod {
    /// Exhaustive when `n` is small enough, greedy otherwise.
    Auto,
    Exhaustive,
    Greedy,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizeConfig {
    pub n: usize,
    pub budget: usize,
    #[serde(default = "auto")]
    pub method: SearchMethod,
}

fn auto() -> SearchMethod {
    SearchMethod::Auto
}
