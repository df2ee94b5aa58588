use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, HarnessError>;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid scenario: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Core(#[from] podds_core::Error),

    /// More than the allowed share of replicates failed for some estimator.
    #[error("scenario {scenario}: {kind} failed in {failures} of {replicates} replicates")]
    TooManyFailures {
        scenario: String,
        kind: String,
        failures: usize,
        replicates: usize,
    },

    #[error("verification failed: {0}")]
    Verification(String),
}

impl HarnessError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        HarnessError::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code: 3 for bad input, 2 for a failed run or verification, 1 otherwise.
    pub fn exit_code(&self) -> u8 {
        match self {
            HarnessError::Config(_) | HarnessError::Json(_) => 3,
            HarnessError::Core(e) if is_config_error(e) => 3,
            HarnessError::TooManyFailures { .. } | HarnessError::Verification(_) => 2,
            _ => 1,
        }
    }
}

fn is_config_error(e: &podds_core::Error) -> bool {
    matches!(
        e,
        podds_core::Error::InvalidConfig(_)
            | podds_core::Error::InvalidModel(_)
            | podds_core::Error::PositivityViolation(_)
    )
}

/// Short stable name of a core error, used as the failure category in reports.
pub fn error_kind(e: &podds_core::Error) -> &'static str {
    use podds_core::Error::*;
    match e {
        InvalidModel(_) => "invalid_model",
        InvalidConfig(_) => "invalid_config",
        DegenerateOdds { .. } => "degenerate_odds",
        Inversion { .. } => "inversion",
        FitFailure { .. } => "fit_failure",
        PositivityViolation(_) => "positivity_violation",
        Domain(_) => "domain",
        CoefficientSingularity { .. } => "coefficient_singularity",
        SolverFailure { .. } => "solver_failure",
        Singularity { .. } => "singularity",
        Horizon { .. } => "horizon",
        NoRoot(_) => "no_root",
        NonIdentified(_) => "non_identified",
        FlatScore { .. } => "flat_score",
    }
}
