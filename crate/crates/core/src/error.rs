use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("capacity exceeded: {0}")]
    Capacity(String),

    /// The likelihood matrix is singular at `rho >= 1/2`.
    #[error("flip probability {rho} makes the likelihood matrix singular (need rho < 1/2)")]
    Singular { rho: f64 },

    #[error("ill-conditioned debias system (rho = {rho}, l = {l}{}): {detail}",
        .step.map(|s| format!(", step = {s}")).unwrap_or_default())]
    Conditioning {
        rho: f64,
        l: usize,
        step: Option<usize>,
        detail: String,
    },

    #[error("estimator undefined on an empty sample collection")]
    EmptySamples,

    #[error("mechanism {0} has no closed-form output distribution")]
    Unsupported(String),

    #[error("serialization error: {0}")]
    Serde(String),
}

impl Error {
    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::Parameter(msg.into())
    }

    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }

    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Parameter(_) | Error::EmptySamples | Error::Unsupported(_) | Error::Parse { .. } => 2,
            Error::Io { .. } | Error::Serde(_) => 3,
            Error::Capacity(_) | Error::Singular { .. } | Error::Conditioning { .. } => 4,
        }
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        if e.is_io() {
            Error::Serde(e.to_string())
        } else {
            Error::Parse {
                line: e.line(),
                msg: e.to_string(),
            }
        }
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Serde(e.to_string())
    }
}
