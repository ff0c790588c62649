use thiserror::Error;

/// Errors raised across model construction, estimation and the oracle.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("enumeration needs {paths} paths, budget is {budget}")]
    EnumerationTooLarge { paths: f64, budget: f64 },

    #[error("scheme {scheme} is not applicable: {reason}")]
    SchemeInapplicable { scheme: String, reason: String },

    #[error("singular system while fitting {which} at t={t}: {detail}")]
    SingularSystem {
        t: usize,
        which: Bridge,
        detail: String,
    },

    #[error("no bridge solution for {which} at t={t}: residual {residual:.3e}")]
    NoSolution {
        t: usize,
        which: Bridge,
        residual: f64,
    },

    #[error("zero propensity P(A={action} | W) at t={t}")]
    ZeroPropensity { t: usize, action: usize },

    #[error("fold {fold} failed: {source}")]
    Fold {
        fold: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("invalid config field `{field}`: {reason}")]
    Config { field: String, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Which bridge function a solver failure refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Bridge {
    Q,
    H,
}

impl std::fmt::Display for Bridge {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Bridge::Q => write!(f, "q"),
            Bridge::H => write!(f, "h"),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
