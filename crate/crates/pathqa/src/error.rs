use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: invalid JSON: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("{path}: invalid TOML: {source}")]
    Toml {
        path: PathBuf,
        #[source]
        source: toml::de::Error,
    },
    /// A dataset record that does not fit the schema.
    #[error("record `{id}` field `{field}`: {message}")]
    Record { id: String, field: String, message: String },
    #[error("checkpoint {path}: {message}")]
    Checkpoint { path: PathBuf, message: String },
    /// Training stopped on a non-finite loss or gradient.
    #[error("training aborted: {0}")]
    Aborted(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] pathqa_core::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Self::Io {
            path: path.into(),
            source,
        }
    }

    /// Short machine-readable category.
    pub fn kind(&self) -> &'static str {
        match self {
            Self::Io { .. } => "io",
            Self::Json { .. } => "json",
            Self::Toml { .. } => "toml",
            Self::Record { .. } => "record",
            Self::Checkpoint { .. } => "checkpoint",
            Self::Aborted(_) => "aborted",
            Self::Config(_) => "config",
            Self::Core(_) => "model",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
