use thiserror::Error;

/// Process exit codes.
pub mod exit {
    pub const OK: i32 = 0;
    pub const FAILURE: i32 = 1;
    pub const INPUT: i32 = 2;
    pub const NO_EQUILIBRIUM: i32 = 3;
    pub const DOMAIN: i32 = 4;
    pub const RENDER: i32 = 5;
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Input(String),
    #[error("no real equilibrium: {0}")]
    NoEquilibrium(String),
    #[error("{0}")]
    Domain(String),
    #[error("{0}")]
    Render(String),
    #[error("{0}")]
    Failure(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Input(_) => exit::INPUT,
            CliError::NoEquilibrium(_) => exit::NO_EQUILIBRIUM,
            CliError::Domain(_) => exit::DOMAIN,
            CliError::Render(_) => exit::RENDER,
            CliError::Failure(_) => exit::FAILURE,
        }
    }
}

impl From<pwh_core::Error> for CliError {
    fn from(e: pwh_core::Error) -> Self {
        use pwh_core::Error as E;
        match e {
            E::Parse { .. } | E::Input(_) => CliError::Input(e.to_string()),
            E::NoEquilibrium { .. } => CliError::NoEquilibrium(e.to_string()),
            E::Domain(_) | E::DomainExit { .. } => CliError::Domain(e.to_string()),
            other => CliError::Failure(other.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Failure(e.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Failure(e.to_string())
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
