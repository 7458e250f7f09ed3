use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid topology: {0}")]
    InvalidTopology(String),

    #[error("matrix is not symmetric (max asymmetry {asymmetry:.3e}, tolerance {tolerance:.3e})")]
    NotSymmetric { asymmetry: f64, tolerance: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("modal system is not Hurwitz: coefficients {0:?}")]
    NotHurwitz([f64; 4]),

    #[error("leader is not reachable from every follower (spanning-tree condition fails)")]
    LeaderUnreachable,

    #[error("LMI solver failed: {0}")]
    SolverFailed(String),

    #[error("synthesis verification failed: {0}")]
    VerificationFailed(String),

    #[error("link budget {budget} is infeasible for {n} followers (need at least {n})")]
    InfeasibleBudget { n: usize, budget: usize },

    #[error("invalid scenario: {0}")]
    InvalidScenario(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
