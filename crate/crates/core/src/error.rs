use thiserror::Error;

/// Errors raised by the engine.
///
/// Variants are grouped by the CLI exit code they map to: configuration
/// problems, data problems, and numerical divergence.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid config: {0}")]
    Config(String),

    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("invalid input: {0}")]
    Input(String),

    #[error("missing partition(s) for day(s) {days:?}")]
    MissingPartitions { days: Vec<i64> },

    #[error("clock moved backwards: {from} -> {to}")]
    ClockRegression { from: u64, to: u64 },

    #[error("head {head} would train on click {click_id} before its wait elapsed")]
    Leakage { head: usize, click_id: String },

    #[error("model diverged: non-finite value after update{}", coord.map_or(String::new(), |c| format!(" at coordinate {c}")))]
    Divergence { coord: Option<u32> },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub fn input(msg: impl Into<String>) -> Self {
        Error::Input(msg.into())
    }

    /// Process exit code used by the command line driver.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 2,
            Error::Divergence { .. } => 4,
            _ => 3,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
