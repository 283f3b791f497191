use thiserror::Error;

/// Errors produced anywhere in the laboratory.
#[derive(Debug, Error)]
pub enum Error {
    /// Invalid or inconsistent configuration. `key` names the offending setting.
    #[error("invalid configuration `{key}`: {message}")]
    Config { key: String, message: String },

    #[error("non-finite value at node ({i}, {j})")]
    NonFinite { i: usize, j: usize },

    #[error("fields are defined on different grids")]
    GridMismatch,

    /// A physical model cannot be built from the supplied data.
    #[error("model error: {0}")]
    Model(String),

    #[error("solution blew up at t = {t} (node ({i}, {j}))")]
    BlowUp { t: f64, i: usize, j: usize },

    #[error("winding undefined on plaquette ({i}, {j}): a corner value is zero")]
    UndefinedWinding { i: usize, j: usize },

    #[error("region mask excludes every node")]
    EmptyMask,

    /// An estimate was refused because its preconditions do not hold.
    #[error("estimation refused: {0}")]
    Refused(String),

    #[error("{path}: file not found")]
    FileNotFound { path: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Toml(#[from] toml::de::Error),
}

impl Error {
    pub(crate) fn config(key: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            message: message.into(),
        }
    }

    /// Whether the error stems from user input rather than a runtime failure.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::Config { .. } | Error::GridMismatch | Error::Model(_) | Error::Toml(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
