//! Robustness analysis and distributed H∞ control of vehicle platoons with
//! undirected communication topologies.

// `!(x > 0.0)` is used deliberately so NaN is rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod fmt;
pub mod linalg;
pub mod lmi;
pub mod modal;
pub mod optimize;
pub mod sdp;
pub mod sim;
pub mod topology;

pub use error::{Error, Result};
pub use modal::{ControllerGains, GammaReport, ModalSystem, VehicleParams};
pub use optimize::{lambda_min_bounds, optimize_exhaustive, optimize_greedy, OptimizationResult};
pub use sim::{LinearPlatoonModel, NonlinearVehicleParams, Scenario, SimResult};
pub use topology::{Spectrum, Topology, TopologyMatrix};
