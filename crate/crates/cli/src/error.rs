use std::path::PathBuf;

use thiserror::Error;

/// Errors of the command-line front end, tagged with the stage they come from.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("io: {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{what}: malformed JSON: {source}")]
    Json {
        what: &'static str,
        #[source]
        source: serde_json::Error,
    },

    #[error("model: {0}")]
    Model(String),

    #[error("model: unsupported layer `{0}` (only dense layers with relu or linear activation)")]
    UnsupportedLayer(String),

    #[error("image: {0}")]
    Image(String),

    #[error("config: {0}")]
    Config(String),

    #[error("results: {0}")]
    Results(String),

    #[error("render: {0}")]
    Render(String),

    #[error("core: {0}")]
    Core(#[from] attverify_core::Error),
}

impl CliError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = CliError> = std::result::Result<T, E>;
