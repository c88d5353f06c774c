/// Failure of a subcommand, carrying its process exit code.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Bad flags, config, files or data. Exit code 2.
    #[error("{0}")]
    Input(String),
    /// The numerics broke down (non-finite loss, degenerate statistic). Exit code 3.
    #[error("{0}")]
    Numerical(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Input(_) => 2,
            CliError::Numerical(_) => 3,
        }
    }

    pub fn message(&self) -> &str {
        match self {
            CliError::Input(m) | CliError::Numerical(m) => m,
        }
    }
}

impl From<pvlm::Error> for CliError {
    fn from(e: pvlm::Error) -> Self {
        match e {
            pvlm::Error::NonFinite { .. } | pvlm::Error::Degenerate(_) => {
                CliError::Numerical(e.to_string())
            }
            other => CliError::Input(other.to_string()),
        }
    }
}
