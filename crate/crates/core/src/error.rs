use thiserror::Error;

/// Errors produced anywhere in the estimation pipeline.
#[derive(Debug, Error)]
pub enum IsletError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("non-finite value encountered in {0}")]
    NonFinite(String),

    #[error("underdetermined system: {n} samples for {m} unknowns")]
    Underdetermined { n: usize, m: usize },

    #[error("degenerate {what}: condition estimate {condition:e}")]
    Degenerate { what: String, condition: f64 },

    #[error("singular assembly factor in mode {mode}: condition estimate {condition:e}")]
    SingularAssembly { mode: usize, condition: f64 },

    #[error("no convergence after {iterations} iterations (KKT residual {kkt_residual:e})")]
    NotConverged { iterations: usize, kkt_residual: f64 },

    #[error("problem too large for exhaustive check: {0}")]
    TooLarge(String),

    #[error("shard {shard}: covariates regenerated in pass 2 differ from pass 1")]
    Determinism { shard: usize },

    #[error("shard {shard}: {source}")]
    Shard {
        shard: usize,
        #[source]
        source: Box<IsletError>,
    },

    #[error("malformed input: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl IsletError {
    pub(crate) fn arg(msg: impl Into<String>) -> Self {
        IsletError::InvalidArgument(msg.into())
    }

    /// True for failures caused by numerical degeneracy of the data rather
    /// than by bad input.
    pub fn is_numerical(&self) -> bool {
        match self {
            IsletError::Underdetermined { .. }
            | IsletError::Degenerate { .. }
            | IsletError::SingularAssembly { .. }
            | IsletError::NotConverged { .. } => true,
            IsletError::Shard { source, .. } => source.is_numerical(),
            _ => false,
        }
    }
}

pub type Result<T> = std::result::Result<T, IsletError>;
