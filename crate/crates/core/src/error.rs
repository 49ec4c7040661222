use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("degenerate difficulty: p = {0} must lie strictly inside (0, 1)")]
    DegenerateDifficulty(f64),

    #[error("invalid value for `{key}`: {reason}")]
    InvalidConfig { key: String, reason: String },

    #[error("problem id {id} out of range for a policy over {count} problems")]
    ProblemOutOfRange { id: usize, count: usize },

    #[error("arm {arm} out of range for {num_arms} arms")]
    ArmOutOfRange { arm: usize, num_arms: usize },

    #[error("input points are not sorted by compute (index {0})")]
    Unsorted(usize),

    #[error("duplicate subsample index {0}")]
    DuplicateIndex(usize),

    #[error("subsample index {index} out of range for {len} rewards")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("enumeration of {0} outcomes exceeds the 1e6 limit")]
    EnumerationTooLarge(u128),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("need at least {needed} points, got {got}")]
    InsufficientPoints { needed: usize, got: usize },

    #[error("training diverged at step {0}: non-finite parameters")]
    Diverged(usize),

    #[error("{0}")]
    MissingInput(String),

    #[error("{failed} of {total} sweep runs failed; see the manifest for details")]
    RunsFailed { failed: usize, total: usize },

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("config parse: {0}")]
    Toml(#[from] toml::de::Error),
}

impl Error {
    pub(crate) fn config(key: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::InvalidConfig {
            key: key.into(),
            reason: reason.into(),
        }
    }

    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }

    /// Whether the error stems from user-supplied configuration rather than
    /// a runtime failure.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::InvalidConfig { .. }
                | Error::Toml(_)
                | Error::DegenerateDifficulty(_)
                | Error::MissingInput(_)
        )
    }
}
