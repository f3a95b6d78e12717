use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("schema error in {source_name}: {message}")]
    Schema {
        source_name: String,
        message: String,
    },

    #[error("validation error: {0}")]
    Validation(String),

    #[error("usage error: {0}")]
    Usage(String),

    #[error("config error ({key}): {message}")]
    Config { key: String, message: String },

    #[error("backend {model} lacks {capability}; set `{config_key}` or use a backend that supports it{hint}")]
    Capability {
        model: String,
        capability: &'static str,
        config_key: String,
        hint: &'static str,
    },

    #[error("sampling failed after {} attempt(s): {}", attempts.len(), attempts.join(" | "))]
    Sampling { attempts: Vec<String> },

    #[error("backend error: {0}")]
    Backend(String),

    #[error("undefined correlation: {0}")]
    UndefinedCorrelation(String),

    #[error("missing cultures: {}", .0.join(", "))]
    MissingCultures(Vec<String>),

    #[error("stage `{stage}` requires `{missing}` to be run first ({detail})")]
    Dependency {
        stage: String,
        missing: String,
        detail: String,
    },

    #[error("artifact {} was modified after stage `{stage}` wrote it", path.display())]
    ArtifactModified { path: PathBuf, stage: String },

    #[error("workspace {} is locked by another run (remove {} if stale)", .0.display(), .0.join(".lock").display())]
    Locked(PathBuf),

    #[error("partial completion: {0}")]
    Partial(String),

    #[error("io error at {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code: 1 validation/config, 2 backend failure, 3 partial completion.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Sampling { .. } | Error::Backend(_) => 2,
            Error::Partial(_) => 3,
            _ => 1,
        }
    }
}
