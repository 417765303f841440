use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    Argument(String),

    #[error(
        "solver did not converge after {iterations} iterations (kkt violation {violation:.3e})"
    )]
    Convergence {
        iterations: usize,
        violation: f64,
        last_iterate: Vec<f64>,
    },

    #[error("degenerate problem: {0}")]
    Degenerate(String),

    #[error("invalid policy state: {0}")]
    State(String),

    #[error("arithmetic overflow: {0}")]
    Arithmetic(String),

    #[error("ingestion error: {0}")]
    Ingestion(String),

    #[error("config error at line {line}: key `{key}`: {message}")]
    Config {
        key: String,
        line: usize,
        message: String,
    },

    #[error("replication failed (policy {policy}, rep {replication}, seed {seed}): {source}")]
    Replication {
        policy: String,
        replication: usize,
        seed: u64,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn arg(msg: impl Into<String>) -> Self {
        Error::Argument(msg.into())
    }

    pub(crate) fn dim(what: &str, expected: usize, got: usize) -> Self {
        Error::Argument(format!(
            "dimension mismatch for {what}: expected {expected}, got {got}"
        ))
    }
}
