use std::path::PathBuf;

use praxbench_core::corpus::CorpusError;
use praxbench_core::exam::ExamError;
use praxbench_core::extract::ExtractError;
use praxbench_core::factory::FactoryError;
use praxbench_core::{GatewayError, StatsError};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("missing input {}", .0.display())]
    MissingInput(PathBuf),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("validation gate failed: {message}; see {}", .ledger.display())]
    Gate { message: String, ledger: PathBuf },
    #[error("numerical failure: {0}")]
    Numerical(#[from] StatsError),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Extract(#[from] ExtractError),
    #[error(transparent)]
    Exam(#[from] ExamError),
    #[error(transparent)]
    Factory(FactoryError),
    #[error("{}: {source}", .path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Gate { .. } => 2,
            CliError::MissingInput(_) => 3,
            CliError::Gateway(GatewayError::FixtureMissing { .. }) => 3,
            CliError::Extract(ExtractError::Gateway {
                source: GatewayError::FixtureMissing { .. },
                ..
            }) => 3,
            CliError::Factory(FactoryError::Gateway(GatewayError::FixtureMissing { .. })) => 3,
            CliError::Exam(ExamError::Fixture(GatewayError::FixtureMissing { .. })) => 3,
            CliError::Corpus(CorpusError::Io { source, .. }) if source.kind() == std::io::ErrorKind::NotFound => 3,
            CliError::Numerical(_) => 4,
            _ => 1,
        }
    }
}
