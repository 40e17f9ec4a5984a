use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Failure causes across the pipeline. Stage-level variants map onto
/// distinct process exit codes (see [`Error::exit_code`]).
#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("format error: {0}")]
    Format(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("gate failure: {0}")]
    Gate(String),

    #[error("injectivity failure: {0}")]
    Injectivity(String),

    #[error("beta ladder exhausted: {0}")]
    BetaLadder(String),

    #[error("attractor estimate did not settle: {0}")]
    Settling(String),

    #[error("integrator failure: {0}")]
    Integrator(String),
}

impl Error {
    pub fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub fn format(msg: impl Into<String>) -> Self {
        Error::Format(msg.into())
    }

    /// Process exit code for the CLI.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Gate(_) => 10,
            Error::Injectivity(_) => 11,
            Error::BetaLadder(_) => 12,
            Error::Settling(_) => 13,
            Error::Integrator(_) => 14,
            Error::Config(_) => 2,
            _ => 1,
        }
    }

    /// Short machine-readable cause tag written into failure reports.
    pub fn cause(&self) -> &'static str {
        match self {
            Error::Domain(_) => "domain",
            Error::Format(_) => "format",
            Error::Config(_) => "config",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
            Error::Gate(_) => "gate",
            Error::Injectivity(_) => "injectivity",
            Error::BetaLadder(_) => "beta_ladder",
            Error::Settling(_) => "settling",
            Error::Integrator(_) => "integrator",
        }
    }
}
