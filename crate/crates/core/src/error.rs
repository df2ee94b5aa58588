use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    /// The survival odds are infinite (R(t,z) = 0), so the log odds ratio is undefined.
    #[error("degenerate odds at t = {t}: R(t, z) = {odds}")]
    DegenerateOdds { t: f64, odds: f64 },

    #[error(
        "could not invert the odds function for target {target}: bracket [{lo}, {hi}] gives R in [{r_lo}, {r_hi}]"
    )]
    Inversion {
        target: f64,
        lo: f64,
        hi: f64,
        r_lo: f64,
        r_hi: f64,
    },

    #[error("fit failure ({what}): {reason}")]
    FitFailure { what: String, reason: String },

    #[error("positivity violation: {0}")]
    PositivityViolation(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("coefficient singularity at t = {t} for profile {profile}: {reason}")]
    CoefficientSingularity { t: f64, profile: String, reason: String },

    #[error("IDE solver failure for profile {profile}: residual {residual:e} exceeds tolerance {tolerance:e}")]
    SolverFailure {
        profile: String,
        residual: f64,
        tolerance: f64,
        /// Pointwise residual on the grid.
        residual_profile: Vec<f64>,
    },

    #[error("singular odds density r(t, z) = {density:e} at t = {t}")]
    Singularity { t: f64, density: f64 },

    #[error("observed time {x} is beyond the grid horizon {horizon}")]
    Horizon { x: f64, horizon: f64 },

    #[error("no root: {0}")]
    NoRoot(String),

    #[error("non-identified: {0}")]
    NonIdentified(String),

    #[error("flat score: mean derivative {slope:e} is below 1e-10 in magnitude")]
    FlatScore { slope: f64 },
}
