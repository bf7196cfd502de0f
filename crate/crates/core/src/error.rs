use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("non-finite value: {0}")]
    NonFinite(String),
    #[error("row {row} has an empty neighborhood")]
    EmptyNeighborhood { row: usize },
    #[error("graph must have at least one node")]
    EmptyGraph,
    #[error("index {index} out of range for length {len}")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("value out of range: {0}")]
    Range(String),
    #[error("projection vector has zero norm")]
    DegenerateProjection,
    #[error("cannot score a zero vector")]
    ZeroVector,
    #[error("unknown speaker id {0}")]
    UnknownSpeaker(usize),
    #[error("verification protocol error: {0}")]
    Protocol(String),
    #[error("prior-knowledge selection requires a scene")]
    MissingPrior,
    #[error("training needs at least two speakers, found {0}")]
    DegenerateTask(usize),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("invalid data: {0}")]
    Data(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Process exit code used by the command-line tool.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Range(_) | Error::MissingPrior => 2,
            Error::NonFinite(_) | Error::DegenerateProjection | Error::ZeroVector => 4,
            _ => 3,
        }
    }
}
