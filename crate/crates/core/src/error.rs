use thiserror::Error;

/// Errors produced while building or evaluating a model.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },

    #[error("{0}")]
    Semantic(String),

    #[error("instruction {class}.{width} has no throughput entry in the machine model")]
    UnknownInstruction { class: String, width: String },

    #[error("dependency chain class {0} has no latency entry in the machine model")]
    MissingLatency(String),

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("kernel has no memory traffic, performance never saturates")]
    NoSaturation,

    #[error("no measured bandwidth for level {level} at {threads} thread(s)")]
    MissingBandwidth { level: String, threads: u32 },

    #[error("invalid simulator configuration: {0}")]
    InvalidSimConfig(String),

    #[error("no transition found in the search range: {0}")]
    NoTransition(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn syntax(line: usize, message: impl Into<String>) -> Self {
        Error::Syntax {
            line,
            message: message.into(),
        }
    }

    pub(crate) fn semantic(message: impl Into<String>) -> Self {
        Error::Semantic(message.into())
    }
}
