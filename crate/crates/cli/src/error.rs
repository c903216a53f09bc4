use symmod_core::network::NetworkError;
use symmod_core::simkit::SimError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("numerical error: {0}")]
    Numerical(String),
    #[error("simulation diverged: {0}")]
    Divergence(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

impl CliError {
    /// Process exit code: 2 config, 3 numerical, 4 divergence.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config(_) | Self::Io { .. } => 2,
            Self::Numerical(_) => 3,
            Self::Divergence(_) => 4,
        }
    }

    pub(crate) fn io(path: &std::path::Path, source: std::io::Error) -> Self {
        Self::Io {
            path: path.display().to_string(),
            source,
        }
    }
}

impl From<NetworkError> for CliError {
    fn from(e: NetworkError) -> Self {
        match e {
            NetworkError::Lti(_) => Self::Numerical(e.to_string()),
            _ => Self::Config(e.to_string()),
        }
    }
}

impl From<symmod_core::symmetry::SymmetryError> for CliError {
    fn from(e: symmod_core::symmetry::SymmetryError) -> Self {
        use symmod_core::symmetry::SymmetryError as S;
        match e {
            S::InvalidParameter(_) => Self::Config(e.to_string()),
            _ => Self::Numerical(e.to_string()),
        }
    }
}

impl From<symmod_core::modal::ModalError> for CliError {
    fn from(e: symmod_core::modal::ModalError) -> Self {
        Self::Numerical(e.to_string())
    }
}

impl From<SimError> for CliError {
    fn from(e: SimError) -> Self {
        match e {
            SimError::DivergenceDetected { .. } => Self::Divergence(e.to_string()),
            SimError::Reassembly { .. } => Self::Numerical(e.to_string()),
            _ => Self::Config(e.to_string()),
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
