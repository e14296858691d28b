use thiserror::Error;

/// Errors raised by the test engine, its oracles and the harness.
#[derive(Debug, Error)]
pub enum Error {
    /// A run or scenario parameter is out of its admissible range.
    #[error("configuration error: {0}")]
    Config(String),

    /// A scenario document could not be read. `field` names the offending location.
    #[error("parse error at `{field}`: {message}")]
    Parse { field: String, message: String },

    /// The requested computation is not available for this source/feature combination.
    #[error("capability error: {0}")]
    Capability(String),

    /// A caller broke a documented pre-condition (e.g. an increment outside [-1, 1]).
    #[error("contract violation: {0}")]
    Contract(String),

    /// A Monte Carlo trial failed; `seed` reproduces it.
    #[error("trial {index} (seed {seed}) failed: {source}")]
    Trial {
        index: u64,
        seed: u64,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn capability(msg: impl Into<String>) -> Self {
        Error::Capability(msg.into())
    }

    pub(crate) fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }

    pub(crate) fn parse(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Parse {
            field: field.into(),
            message: message.into(),
        }
    }
}

impl Error {
    /// The innermost error, looking through trial wrappers.
    pub fn root(&self) -> &Error {
        match self {
            Error::Trial { source, .. } => source.root(),
            other => other,
        }
    }

    /// Process exit code for the CLI: 2 for bad input, 3 for a broken contract.
    pub fn exit_code(&self) -> i32 {
        match self.root() {
            Error::Config(_) | Error::Parse { .. } | Error::Capability(_) => 2,
            Error::Contract(_) => 3,
            _ => 1,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
