use std::path::PathBuf;

use groupcf_core::Error as CoreError;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{}: {source}", path.display())]
    Csv { path: PathBuf, source: csv::Error },
    #[error("{}: {source}", path.display())]
    Json {
        path: PathBuf,
        source: serde_json::Error,
    },
    #[error("{}: missing column `{column}`", path.display())]
    MissingColumn { path: PathBuf, column: String },
    #[error("{}:{line}: unknown category `{value}` for `{feature}`", path.display())]
    UnknownCategory {
        path: PathBuf,
        line: u64,
        feature: String,
        value: String,
    },
    #[error("{}:{line}: malformed number `{value}` for `{feature}`", path.display())]
    MalformedNumber {
        path: PathBuf,
        line: u64,
        feature: String,
        value: String,
    },
    #[error("{}: not a version {expected} file ({detail})", path.display())]
    FormatVersionMismatch {
        path: PathBuf,
        expected: u32,
        detail: String,
    },
    #[error("row {row} not found; the training split has {len} rows")]
    SelectorNotFound { row: usize, len: usize },
    #[error("item `{0}` appears more than once in the ordering")]
    DuplicateItem(String),
    #[error(transparent)]
    Core(#[from] CoreError),
}

impl CliError {
    /// 2 for bad input, 3 when no explanation exists, 4 when a search ran out
    /// of material.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Core(e) => match e {
                CoreError::NoValidCandidate { .. } | CoreError::AllSinglesFailed { .. } => 3,
                CoreError::ExhaustedSeeds { .. }
                | CoreError::InsufficientEligible { .. }
                | CoreError::InsufficientNeighbors { .. } => 4,
                _ => 2,
            },
            _ => 2,
        }
    }
}

pub type Result<T, E = CliError> = std::result::Result<T, E>;
