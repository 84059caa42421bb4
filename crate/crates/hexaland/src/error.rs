use std::io;
use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = HarnessError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: io::Error },

    #[error("cannot parse scenario: {0}")]
    Parse(String),

    #[error("bad parameter path `{0}`")]
    ParamPath(String),

    #[error(transparent)]
    Core(#[from] hexaland_core::Error),

    #[error("log output: {0}")]
    Csv(#[from] csv::Error),

    #[error("report output: {0}")]
    Json(#[from] serde_json::Error),

    #[error("a simulation thread panicked")]
    Panicked,
}

impl HarnessError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        HarnessError::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code: 2 for configuration problems, 3 for a diverged
    /// simulation, 1 for anything else.
    pub fn exit_code(&self) -> u8 {
        use hexaland_core::Error as E;
        match self {
            HarnessError::Parse(_) | HarnessError::ParamPath(_) => 2,
            HarnessError::Core(
                E::Validation(_) | E::RotorIndex(_) | E::UnsupportedFailure { .. },
            ) => 2,
            HarnessError::Core(E::Diverged { .. }) => 3,
            _ => 1,
        }
    }
}
