use newsstance::agents::AgentError;
use newsstance::analysis::AnalysisError;
use newsstance::corpus::CorpusError;
use newsstance::inference::InferenceError;
use newsstance::retrieval::RetrievalError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Validation(String),
    #[error("remote service failure: {0}")]
    Remote(String),
    #[error("run aborted: {0}")]
    Aborted(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Validation(_) => 2,
            CliError::Remote(_) => 3,
            CliError::Aborted(_) => 4,
        }
    }

    pub fn io(what: &str, e: std::io::Error) -> Self {
        CliError::Usage(format!("{what}: {e}"))
    }
}

impl From<CorpusError> for CliError {
    fn from(e: CorpusError) -> Self {
        match e {
            CorpusError::Io { .. } => CliError::Usage(e.to_string()),
            _ => CliError::Validation(e.to_string()),
        }
    }
}

impl From<InferenceError> for CliError {
    fn from(e: InferenceError) -> Self {
        match &e {
            InferenceError::Aborted { .. } => CliError::Aborted(e.to_string()),
            _ if e.is_remote() => CliError::Remote(e.to_string()),
            _ => CliError::Validation(e.to_string()),
        }
    }
}

impl From<AgentError> for CliError {
    fn from(e: AgentError) -> Self {
        match e {
            AgentError::Network(_) => CliError::Remote(e.to_string()),
            _ => CliError::Validation(e.to_string()),
        }
    }
}

impl From<RetrievalError> for CliError {
    fn from(e: RetrievalError) -> Self {
        match e {
            RetrievalError::Network(_) => CliError::Remote(e.to_string()),
            _ => CliError::Validation(e.to_string()),
        }
    }
}

impl From<AnalysisError> for CliError {
    fn from(e: AnalysisError) -> Self {
        CliError::Validation(e.to_string())
    }
}
