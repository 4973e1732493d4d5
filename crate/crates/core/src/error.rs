use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("vector has zero norm or non-finite entries")]
    ZeroVector,
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimMismatch { expected: usize, got: usize },
    #[error("malformed record: {0}")]
    MalformedRecord(String),
    #[error("retrieval log is empty")]
    EmptyLog,
    #[error("text is empty")]
    EmptyText,
    #[error("sample set is empty")]
    EmptySampleSet,
    #[error("retrieval returned no samples")]
    EmptyRetrieval,
    #[error("backend unavailable: {0}")]
    BackendUnavailable(String),
    #[error("reward model returned a non-finite score")]
    NonFiniteReward,
    #[error("query stream is empty")]
    EmptyStream,
    #[error("input is empty")]
    EmptyInput,
    #[error("invalid routing fractions: {0}")]
    InvalidFractions(String),
    #[error("unknown cost stage `{0}`")]
    UnknownStage(String),
    #[error("training must start from the base model, got adapter {0}")]
    AdapterOnBase(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Stable machine-readable name, used in error records and HTTP error bodies.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::ZeroVector => "ZeroVector",
            Error::DimMismatch { .. } => "DimMismatch",
            Error::MalformedRecord(_) => "MalformedRecord",
            Error::EmptyLog => "EmptyLog",
            Error::EmptyText => "EmptyText",
            Error::EmptySampleSet => "EmptySampleSet",
            Error::EmptyRetrieval => "EmptyRetrieval",
            Error::BackendUnavailable(_) => "BackendUnavailable",
            Error::NonFiniteReward => "NonFiniteReward",
            Error::EmptyStream => "EmptyStream",
            Error::EmptyInput => "EmptyInput",
            Error::InvalidFractions(_) => "InvalidFractions",
            Error::UnknownStage(_) => "UnknownStage",
            Error::AdapterOnBase(_) => "AdapterOnBase",
            Error::Config(_) => "ConfigError",
            Error::Parse(_) => "ParseError",
            Error::Io(_) => "IoError",
        }
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Parse(e.to_string())
    }
}
