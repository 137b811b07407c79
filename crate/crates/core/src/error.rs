use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("model error: {0}")]
    Model(String),
    #[error("config error at `{key}`: {message}")]
    Config { key: String, message: String },
    #[error("precondition failed: {0}")]
    Precondition(String),
    #[error("no root of psi(N) = {level} on (0, p_hi]")]
    NoRoot { level: f64 },
    #[error("ambiguous branch: {count} roots at level {level}")]
    Ambiguous { level: f64, count: usize },
    #[error("solver failed at t = {time}: {source}")]
    AtTime {
        time: f64,
        #[source]
        source: Box<Error>,
    },
    #[error("solver error: {0}")]
    Solver(String),
    #[error("verification failed: {0}")]
    Verification(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn config(key: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config { key: key.into(), message: message.into() }
    }

    pub(crate) fn at(self, time: f64) -> Self {
        match self {
            e @ Error::AtTime { .. } => e,
            e => Error::AtTime { time, source: Box::new(e) },
        }
    }

    /// Process exit code used by the CLI.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config { .. } | Error::Precondition(_) | Error::Domain(_) | Error::Model(_) => 2,
            Error::Verification(_) => 4,
            Error::AtTime { source, .. } => source.exit_code(),
            _ => 3,
        }
    }
}
