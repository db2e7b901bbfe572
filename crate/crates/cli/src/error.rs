use thiserror::Error;

pub type Result<T, E = CliError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Solver(#[from] gradflow_core::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
