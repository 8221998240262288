use thiserror::Error;

/// Failure to read one of the shipped text data files (tech tree, map, difficulty table, catalog).
#[derive(Debug, Error, Clone, PartialEq)]
pub enum DataError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("unknown entity `{0}`")]
    UnknownEntity(String),
    #[error("duplicate entry `{0}`")]
    Duplicate(String),
    #[error("invalid data: {0}")]
    Invalid(String),
}

impl DataError {
    pub(crate) fn syntax(line: usize, message: impl Into<String>) -> Self {
        DataError::Syntax { line, message: message.into() }
    }
}

/// Bad match or experiment configuration.
#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("unknown map `{0}`")]
    UnknownMap(String),
    #[error("difficulty level {0} is outside 1..=10")]
    DifficultyOutOfRange(u8),
    #[error("invalid configuration: {0}")]
    Invalid(String),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}
