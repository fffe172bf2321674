use perceptkit_protocol::ErrorBody;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ServiceError {
    #[error("unknown session `{0}`")]
    NotFound(String),
    #[error("session `{0}` is finalized")]
    Finalized(String),
    #[error("sequence gap: expected seq {expected}, got {got}")]
    SeqGap { expected: u64, got: u64 },
    #[error("seq {0} was already stored with different content")]
    SeqConflict(u64),
    #[error("seq {seq}: t_ms {t_ms} precedes the previous event at {last_t_ms}")]
    TimeRegression { seq: u64, t_ms: f64, last_t_ms: f64 },
    #[error("invalid event: {0}")]
    InvalidEvent(String),
    #[error(transparent)]
    Core(#[from] perceptkit_core::Error),
    #[error("storage failure: {0}")]
    Io(String),
}

impl From<std::io::Error> for ServiceError {
    fn from(e: std::io::Error) -> Self {
        ServiceError::Io(e.to_string())
    }
}

impl ServiceError {
    pub fn code(&self) -> &'static str {
        match self {
            ServiceError::NotFound(_) => "not_found",
            ServiceError::Finalized(_) => "finalized",
            ServiceError::SeqGap { .. } => "seq_gap",
            ServiceError::SeqConflict(_) => "seq_conflict",
            ServiceError::TimeRegression { .. } => "time_regression",
            ServiceError::InvalidEvent(_) => "invalid_event",
            ServiceError::Core(_) => "invalid_input",
            ServiceError::Io(_) => "storage",
        }
    }

    pub fn body(&self) -> ErrorBody {
        ErrorBody {
            code: self.code().to_string(),
            message: self.to_string(),
        }
    }
}

pub type Result<T, E = ServiceError> = std::result::Result<T, E>;
