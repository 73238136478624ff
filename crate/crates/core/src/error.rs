use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// A value lies outside the mathematical domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),
    /// Inconsistent arguments: length mismatches, bad options, overlapping splits.
    #[error("usage error: {0}")]
    Usage(String),
    #[error("singular fit: {0}")]
    Singular(String),
    #[error("fit diverged: {0}")]
    Divergence(String),
    /// Input for which the requested quantity is undefined.
    #[error("degenerate input: {0}")]
    Degenerate(String),
    #[error("row {row}: {msg}")]
    Ingest { row: usize, msg: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error("{stage}: {source}")]
    Stage { stage: &'static str, source: Box<Error> },
}

impl Error {
    /// Process exit code: 2 usage, 3 data, 4 numeric failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Usage(_) => 2,
            Error::Ingest { .. } | Error::Io(_) | Error::Csv(_) | Error::Json(_) | Error::Domain(_) => 3,
            Error::Singular(_) | Error::Divergence(_) | Error::Degenerate(_) => 4,
            Error::Stage { source, .. } => source.exit_code(),
        }
    }

    /// Tags the error with the pipeline stage it came from.
    pub fn in_stage(self, stage: &'static str) -> Self {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_same_len(what: &str, a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::Usage(format!("{what}: length mismatch ({a} vs {b})")));
    }
    Ok(())
}
