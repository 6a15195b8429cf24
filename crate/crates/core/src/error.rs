use std::path::PathBuf;

/// Errors produced anywhere in the selection pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error at data row {row}, column '{column}': {message}")]
    Parse {
        row: usize,
        column: String,
        message: String,
    },

    #[error("outcome column '{0}' not present in header")]
    MissingOutcome(String),

    #[error("input contains no data")]
    EmptyInput,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("model requires feature column {required} but input has only {available} columns")]
    MissingColumn { required: usize, available: usize },

    #[error(
        "sampled subsets cannot identify the Shapley values (p = {p}, budget = {budget}); \
         increase the subset budget"
    )]
    RankDeficient { p: usize, budget: usize },

    #[error("amputation calibration failed: {0}")]
    Calibration(String),

    #[error("all candidate learners failed; last error: {0}")]
    AllLearnersFailed(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by bad user input or configuration rather
    /// than by a failure while running the pipeline.
    pub fn is_config_error(&self) -> bool {
        matches!(
            self,
            Error::InvalidArgument(_) | Error::MissingOutcome(_) | Error::Json(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
