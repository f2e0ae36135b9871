use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("pre-distortion undefined for sub-symbol {beam}: every communication gain is zero")]
    ZeroCommGain { beam: usize },

    #[error("no usable subcarriers")]
    NoUsableSubcarriers,

    #[error("sub-symbol {beam}: {source}")]
    Beam {
        beam: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("rank-deficient design: {0}")]
    RankDeficient(String),

    #[error("malformed input: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn param<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Parameter(msg.into()))
}
