use thiserror::Error;

/// Errors produced by the solver and certification layers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid space: {0}")]
    InvalidSpace(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("boundary map has the wrong kind for this operation: {0}")]
    WrongKind(String),

    #[error("method mismatch: {0}")]
    MethodMismatch(String),

    #[error("time integration diverged at t = {t}")]
    IntegrationDiverged { t: f64 },

    #[error("boundary problem is not well posed (sigma_min = {sigma_min:.3e})")]
    NotWellPosed { sigma_min: f64 },

    #[error("fixed-point map is not a contraction (q = {0:.6})")]
    NotContractive(f64),

    #[error("no convergence after {iterations} iterations (last step {last_step:.3e})")]
    NoConvergence {
        iterations: usize,
        last_step: f64,
        /// Final endpoint values of the best iterate, flattened node-major.
        best: Vec<f64>,
    },

    #[error("growth constant too large: alpha2 = {alpha2} >= alpha1 * c_h^2 = {limit}")]
    GrowthTooLarge { alpha2: f64, limit: f64 },

    #[error("ellipticity violated at (t, x) = ({t}, {x})")]
    NotElliptic { t: f64, x: f64 },

    #[error("trajectories live on different grids")]
    GridMismatch,

    #[error("hypothesis failed: {0}")]
    HypothesisFailed(String),
}

pub type Result<T> = std::result::Result<T, Error>;
