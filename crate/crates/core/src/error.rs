use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("empty input: {0}")]
    Empty(String),

    #[error("duplicate visit ({subject}, {visit})")]
    DuplicateVisit { subject: String, visit: u32 },

    #[error("subject {subject}: years_since_baseline not strictly increasing at visit {visit}")]
    NonMonotoneTime { subject: String, visit: u32 },

    #[error("subject {subject}, visit {visit}: {reason}")]
    InvalidRecord {
        subject: String,
        visit: u32,
        reason: String,
    },

    #[error("subject {subject}: negative days_since_baseline ({days})")]
    NegativeDays { subject: String, days: i64 },

    #[error("subject {subject}, visit {visit}: age at visit {age} outside all age bands")]
    AgeOutOfBands { subject: String, visit: u32, age: f64 },

    #[error("invalid model spec: {0}")]
    InvalidSpec(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("missing columns: {}", .missing.join(", "))]
    Schema { missing: Vec<String> },

    #[error("line {line}: {message}")]
    Parse { line: u64, message: String },

    #[error("rank-deficient design; dependent columns: {}", .columns.join(", "))]
    RankDeficient { columns: Vec<String> },

    #[error("singular matrix: {0}")]
    Singular(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("write failed: {0}")]
    Write(String),

    #[error("{}: {source}", .path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    /// Process exit code for this error class.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::RankDeficient { .. } | Error::Singular(_) | Error::Numerical(_) => 3,
            Error::Io { .. } | Error::Write(_) => 4,
            _ => 2,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
