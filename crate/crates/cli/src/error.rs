use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),

    /// A kernel error caused by the requested parameters.
    #[error("{0}")]
    Rejected(pkslab_core::Error),

    /// A kernel error raised during the computation itself.
    #[error("numerical error: {0}")]
    Numerical(pkslab_core::Error),

    #[error("i/o error on {}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("validation failed: {0}")]
    Validation(String),
}

impl From<pkslab_core::Error> for CliError {
    fn from(e: pkslab_core::Error) -> Self {
        use pkslab_core::Error as E;
        match e {
            E::InvalidParameter(_)
            | E::Supercritical { .. }
            | E::Domain(_)
            | E::Membership { .. }
            | E::Parse { .. }
            | E::DivergentWeight { .. } => CliError::Rejected(e),
            _ => CliError::Numerical(e),
        }
    }
}

impl CliError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io { path: path.into(), source }
    }

    /// Process exit code: 2 for bad input, 3 for numerical failure.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) | CliError::Rejected(_) | CliError::Io { .. } => 2,
            CliError::Numerical(_) | CliError::Json(_) | CliError::Validation(_) => 3,
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
