use std::process::ExitCode;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Missing or malformed input that the argument parser could not catch.
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Lib(#[from] csma_aoi::Error),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("worker pool: {0}")]
    Pool(#[from] rayon::ThreadPoolBuildError),
}

impl CliError {
    /// 2 for bad input, 1 for everything else.
    pub fn exit_code(&self) -> ExitCode {
        match self {
            CliError::Usage(_) => ExitCode::from(2),
            CliError::Lib(e) if e.is_domain() => ExitCode::from(2),
            _ => ExitCode::from(1),
        }
    }
}
