use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("csv parse error at row {row}: {message}")]
    Parse { row: u64, message: String },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("degenerate column for term `{term}`: {reason}")]
    DegenerateColumn { term: String, reason: String },

    #[error("normal equations are rank deficient (pivot {pivot} at column {column})")]
    RankDeficient { column: usize, pivot: f64 },

    #[error("thresholding at delta = {delta} removed every term")]
    EmptyModel { delta: f64 },

    #[error("threshold curve has no knee; pass an explicit delta")]
    NoKnee,

    #[error("estimation error: {0}")]
    Estimation(String),

    #[error("unknown event id `{0}`")]
    UnknownEvent(String),

    #[error("schema error: {0}")]
    Schema(String),
}

impl Error {
    /// True for errors caused by bad input configuration or I/O rather than
    /// numerical or domain problems.
    pub fn is_config(&self) -> bool {
        matches!(
            self,
            Error::Config(_) | Error::Io(_) | Error::Parse { .. } | Error::Schema(_)
        )
    }
}
