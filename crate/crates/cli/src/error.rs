use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {0}: {1}")]
    Read(String, #[source] std::io::Error),
    #[error("malformed config: {0}")]
    Parse(String),
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{op} failed: {source}")]
    Numerical {
        op: &'static str,
        #[source]
        source: mourre_core::Error,
    },
    #[error("cannot write output: {0}")]
    Output(#[from] std::io::Error),
}

impl RunError {
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Config(_) => 2,
            RunError::Numerical { .. } => 3,
            RunError::Output(_) => 4,
        }
    }
}

/// Names the failing operation on a core error.
pub trait Op<T> {
    fn op(self, op: &'static str) -> Result<T, RunError>;
}

impl<T> Op<T> for mourre_core::Result<T> {
    fn op(self, op: &'static str) -> Result<T, RunError> {
        self.map_err(|source| RunError::Numerical { op, source })
    }
}
