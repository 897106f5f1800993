use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{file}:{line}: {message}")]
    Parse {
        file: PathBuf,
        line: u64,
        message: String,
    },

    #[error("{file}: duplicate week {week}")]
    DuplicateWeek { file: PathBuf, week: String },

    #[error("{file}: missing data for week {week}")]
    MissingData { file: PathBuf, week: String },

    #[error("alignment error: {0}")]
    Alignment(String),

    #[error("duplicate series name `{0}`")]
    DuplicateSeries(String),

    #[error("unknown series `{0}`")]
    UnknownSeries(String),

    #[error("invalid input: {0}")]
    Validation(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("null model estimation failed: {0}")]
    Estimation(String),

    #[error("threshold solver did not converge after {iterations} iterations (bracket [{lower}, {upper}], last ATFS {last_atfs})")]
    Solver {
        iterations: usize,
        lower: f64,
        upper: f64,
        last_atfs: f64,
    },

    #[error("calibration failed: {0}")]
    Calibration(String),

    #[error("fold {fold}: {source}")]
    Fold {
        fold: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn in_fold(self, fold: usize) -> Self {
        Error::Fold {
            fold,
            source: Box::new(self),
        }
    }

    /// True for errors caused by bad user input rather than a runtime failure.
    pub fn is_usage(&self) -> bool {
        match self {
            Error::Validation(_)
            | Error::Config(_)
            | Error::UnknownSeries(_)
            | Error::DuplicateSeries(_) => true,
            Error::Fold { source, .. } => source.is_usage(),
            _ => false,
        }
    }
}
