use std::path::PathBuf;

/// Errors surfaced by the simulator front end. Each maps onto a process
/// exit code through [`SimError::exit_code`].
#[derive(Debug, thiserror::Error)]
pub enum SimError {
    /// Invalid configuration or command-line input.
    #[error("{0}")]
    Config(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: u64,
        message: String,
    },

    #[error(transparent)]
    Core(#[from] rfc_core::Error),

    #[error("chain invalid at block {index}: {reason}")]
    ChainInvalid { index: usize, reason: String },
}

impl SimError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        SimError::Io {
            path: path.into(),
            source,
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            SimError::Config(_) | SimError::Parse { .. } => 1,
            SimError::Core(rfc_core::Error::InvalidConfig(_)) => 1,
            SimError::ChainInvalid { .. } => 3,
            SimError::Core(rfc_core::Error::InvalidChain { .. }) => 3,
            SimError::Io { .. } | SimError::Core(_) => 2,
        }
    }
}

pub type Result<T, E = SimError> = std::result::Result<T, E>;
