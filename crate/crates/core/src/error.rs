use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Bad parameters, malformed configuration, or a damping field that fails
    /// its structural checks.
    #[error("validation error: {0}")]
    Validation(String),

    /// The state left the region where the model is well defined (for example
    /// a mass matrix that is no longer positive definite).
    #[error("domain error: {0}")]
    Domain(String),

    #[error("solver did not converge after {iterations} iterations (last residual {residual:.3e})")]
    Solver {
        iterations: usize,
        residual: f64,
        trace: Vec<f64>,
    },

    #[error("integration failed at t = {t}: {reason}")]
    Integration { t: f64, reason: String },

    #[error("expression error: {0}")]
    Expression(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("config error: {0}")]
    Config(#[from] serde_json::Error),

    /// An error annotated with the scenario stage in which it occurred.
    #[error("{stage} failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }

    pub fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    /// Validation-class failures map to CLI exit status 1, everything else to 2.
    pub fn is_validation(&self) -> bool {
        match self {
            Error::Validation(_) | Error::Expression(_) | Error::Config(_) => true,
            Error::Stage { source, .. } => source.is_validation(),
            _ => false,
        }
    }

    pub fn at_stage(self, stage: &'static str) -> Self {
        Error::Stage { stage, source: Box::new(self) }
    }

    /// The error with any stage annotations removed.
    pub fn root(&self) -> &Error {
        match self {
            Error::Stage { source, .. } => source.root(),
            other => other,
        }
    }
}
