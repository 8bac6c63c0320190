use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("infeasible hypothesis `{label}`: {reason}")]
    InfeasibleHypothesis { label: String, reason: String },

    #[error("no feasible draw for `{label}` after {attempts} attempts")]
    FeasibilityBudgetExhausted { label: String, attempts: usize },

    #[error("invalid data: {0}")]
    InvalidData(String),

    #[error("kernel matrix not positive definite even with jitter {max_jitter:e}")]
    IllConditionedKernel { max_jitter: f64 },

    #[error("objective returned non-finite value {value} at {point:?}")]
    Objective { point: Vec<f64>, value: f64 },

    #[error("schema error: {0}")]
    Schema(String),

    #[error("value {value} out of range in row {row}, column {column}")]
    Range {
        row: usize,
        column: String,
        value: f64,
    },

    #[error("parse error in row {row}, column {column}: {message}")]
    Parse {
        row: usize,
        column: String,
        message: String,
    },

    #[error("degenerate sample: {0}")]
    DegenerateSample(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("trial {trial} of method {method} (seed {seed}) failed: {source}")]
    Trial {
        method: String,
        trial: usize,
        seed: u64,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for errors caused by user-supplied configuration or input files.
    pub fn is_config(&self) -> bool {
        matches!(
            self,
            Error::Config(_)
                | Error::Schema(_)
                | Error::Range { .. }
                | Error::Parse { .. }
                | Error::InvalidArgument(_)
                | Error::InfeasibleHypothesis { .. }
        )
    }
}
