use thiserror::Error;

/// Errors raised across the estimation pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("value {value} outside domain [{lo}, {hi}]")]
    DomainViolation { value: f64, lo: f64, hi: f64 },
    #[error("grid mismatch: {0} vs {1} levels")]
    GridMismatch(usize, usize),
    #[error("logistic fit diverged (complete or quasi-complete separation): {0}")]
    Separation(String),
    #[error("design matrix is singular: {0}")]
    SingularDesign(String),
    #[error("fold {fold} has single-arm training data")]
    FoldDegenerate { fold: usize },
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("schema error: {0}")]
    Schema(String),
    #[error("usage error: {0}")]
    Usage(String),
    #[error("config error at `{path}`: {message}")]
    Config { path: String, message: String },
    #[error("not found: {0}")]
    NotFound(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Process exit code: 2 usage, 3 data, 4 numerical.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Usage(_) | Error::Config { .. } | Error::InvalidArgument(_) => 2,
            Error::Separation(_)
            | Error::SingularDesign(_)
            | Error::Numerical(_)
            | Error::FoldDegenerate { .. } => 4,
            Error::InsufficientData(_)
            | Error::DomainViolation { .. }
            | Error::GridMismatch(..)
            | Error::Schema(_)
            | Error::NotFound(_)
            | Error::Io(_)
            | Error::Csv(_)
            | Error::Json(_) => 3,
        }
    }
}
