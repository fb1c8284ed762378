use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("quadrature failed to converge: {0}")]
    Convergence(String),
    #[error("resolution insufficient: {0}")]
    Resolution(String),
    #[error("fit degenerate: {0}")]
    FitDegenerate(String),
    #[error("incompatible topology: {0}")]
    Topology(String),
    #[error("grid too coarse: {0}")]
    GridTooCoarse(String),
    #[error("bump width {width:e} below 4h = {min:e}")]
    WidthTooSmall { width: f64, min: f64 },
    #[error("singular banded system at pivot {0}")]
    Singular(usize),
    #[error("non-finite value at step {0}")]
    NonFinite(usize),
    #[error("boundary leak {leak:e} exceeds {limit:e}; enlarge the domain")]
    LeakExceeded { leak: f64, limit: f64 },
    #[error("insufficient envelope: {found} maxima, need {needed}")]
    InsufficientEnvelope { found: usize, needed: usize },
    #[error("t = {t} is not below the horizon T = {horizon}")]
    PastHorizon { t: f64, horizon: f64 },
    #[error("horizon violation: {0}")]
    HorizonViolation(String),
    #[error("G vanishes with nonzero gradient at node {0}")]
    GDegenerate(usize),
    #[error("calibration failure: {0}")]
    Calibration(String),
    #[error("refinement stalled: {0}")]
    RefinementStall(String),
    #[error("nonpositive Dirichlet solution at node {0}")]
    NonPositive(usize),
    #[error("overflow: {0}")]
    Overflow(String),
    #[error("window outside trajectory: {0}")]
    Window(String),
    #[error("invalid input: {0}")]
    Invalid(String),
}

pub type Result<T> = std::result::Result<T, Error>;
