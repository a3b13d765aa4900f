use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    /// A data row violates a dataset invariant. Rows are numbered from 1,
    /// not counting the header.
    #[error("row {row}: {message}")]
    Row { row: usize, message: String },

    #[error("invalid schema: {0}")]
    Schema(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dataset has no observed events; at least one event is required for fitting")]
    NoEvents,

    #[error(
        "censoring survival estimate {value:e} at time {time} is below the floor {floor:e}; \
         truncate follow-up times before computing weights"
    )]
    WeightFloor { time: f64, value: f64, floor: f64 },

    #[error("no censoring events: the proportional-hazards censoring model is degenerate, use the product-limit kind")]
    NoCensoring,

    #[error("{0} did not converge")]
    NonConvergence(String),

    #[error("region {region} has zero total weight")]
    EmptyRegion { region: usize },

    #[error("covariate vector is not covered by any region")]
    Unassigned,

    #[error("concordance undefined: {0}")]
    Concordance(String),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }
}
