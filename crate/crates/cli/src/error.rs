use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad flags, configuration or parameter values.
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Analysis(#[from] factsurv::Error),
    /// Missing or unreadable inputs, locked output directory.
    #[error("{0}")]
    Data(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) | CliError::Analysis(factsurv::Error::Config(_)) => 1,
            CliError::Analysis(_) | CliError::Data(_) => 2,
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Data(e.to_string())
    }
}
