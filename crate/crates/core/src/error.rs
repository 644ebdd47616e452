use thiserror::Error;

#[derive(Debug, Error)]
pub enum LabError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("degenerate map: {0}")]
    DegenerateMap(String),
    #[error("root solver did not converge: {0}")]
    NoConvergence(String),
    #[error("degree cap exceeded: degree {degree} > cap {cap}")]
    DegreeCap { degree: usize, cap: usize },
    #[error("map mismatch: {0} vs {1}")]
    MapMismatch(String, String),
    #[error("registry entry `{entry}`: {message}")]
    Registry { entry: String, message: String },
    #[error("config field `{field}`: {message}")]
    Config { field: String, message: String },
    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{context}: {source}")]
    Json {
        context: String,
        #[source]
        source: serde_json::Error,
    },
    #[error("{0}")]
    Unbounded(String),
    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, LabError>;

impl LabError {
    pub fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        LabError::Io { context: context.into(), source }
    }

    pub fn json(context: impl Into<String>, source: serde_json::Error) -> Self {
        LabError::Json { context: context.into(), source }
    }
}
