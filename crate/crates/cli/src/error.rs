use std::io;
use std::path::PathBuf;

use chronos_core::TraceError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),

    #[error(transparent)]
    Domain(#[from] chronos_core::Error),

    #[error("job `{job}`, {strategy}: {source}")]
    Job {
        job: String,
        strategy: &'static str,
        #[source]
        source: chronos_core::Error,
    },

    #[error(transparent)]
    Trace(#[from] TraceError),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },

    #[error("writing output: {0}")]
    Csv(#[from] csv::Error),
}

impl CliError {
    /// 2 usage, 3 domain precondition, 4 input/output.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Domain(_) | CliError::Job { .. } => 3,
            CliError::Trace(_) | CliError::Io { .. } | CliError::Csv(_) => 4,
        }
    }

    /// The reader went away (e.g. `| head`); not worth reporting.
    pub fn is_broken_pipe(&self) -> bool {
        let io = match self {
            CliError::Io { source, .. } => Some(source),
            CliError::Trace(TraceError::Io { source, .. }) => Some(source),
            CliError::Csv(e) => match e.kind() {
                csv::ErrorKind::Io(e) => Some(e),
                _ => None,
            },
            _ => None,
        };
        io.is_some_and(|e| e.kind() == io::ErrorKind::BrokenPipe)
    }
}

pub type CliResult<T> = Result<T, CliError>;
