use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] msgcomp::Error),
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error("malformed JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("{0}")]
    Usage(String),
    #[error("verification failed: {0}")]
    Verification(String),
}

impl CliError {
    pub fn io(path: &Path, e: std::io::Error) -> Self {
        CliError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        }
    }

    /// 1 verification, 2 input, 3 precondition, 4 budget.
    pub fn exit_code(&self) -> u8 {
        use msgcomp::Error as E;
        match self {
            CliError::Verification(_) => 1,
            CliError::Io { .. } | CliError::Json(_) | CliError::Usage(_) => 2,
            CliError::Core(e) => match e {
                E::Parse(_)
                | E::SchemaMismatch(_)
                | E::UnknownVariable(_)
                | E::DuplicateVariable(_)
                | E::InvalidDistribution(_) => 2,
                E::Precondition(_)
                | E::MarkovViolation(_)
                | E::InvalidParameter(_)
                | E::ZeroMass
                | E::OverlappingGroups(_) => 3,
                E::Budget(_) => 4,
            },
        }
    }
}
