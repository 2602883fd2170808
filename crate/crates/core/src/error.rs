use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("input header is missing mapped column(s): {}", .0.join(", "))]
    HeaderMismatch(Vec<String>),

    #[error("excel serial {0} is outside the supported range (>= 61)")]
    SerialOutOfRange(i64),

    #[error("token {0:?} is not a calendar-valid ddmmyyyy date")]
    CalendarInvalid(String),

    #[error("token {0:?} contains non-digit characters; standardize it first")]
    NotStandardized(String),

    #[error("geocode: {0}")]
    Geocode(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
