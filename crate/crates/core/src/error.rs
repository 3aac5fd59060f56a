use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid geometry: {0}")]
    InvalidGeometry(String),

    #[error("invalid priors ({prior_static}, {prior_dynamic}): {reason}")]
    InvalidPriors {
        prior_static: f64,
        prior_dynamic: f64,
        reason: &'static str,
    },

    #[error("invalid belief ({p_static}, {p_dynamic})")]
    InvalidBelief { p_static: f64, p_dynamic: f64 },

    #[error("invalid transition kernel: {0}")]
    InvalidKernel(String),

    #[error("invalid scan: {0}")]
    InvalidScan(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("geometry mismatch: {0}")]
    GeometryMismatch(String),

    #[error("region {0:?} does not lie within the grid")]
    InvalidRegion(crate::grid::Region),

    #[error("degenerate update: measurement contradicts the prediction with certainty")]
    DegenerateUpdate,

    #[error("scan has no in-range returns to match")]
    EmptyScan,

    #[error("invalid scenario: {0}")]
    Scenario(String),

    #[error("invalid run configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("failed to parse scenario file: {0}")]
    Toml(#[from] toml::de::Error),

    #[error("failed to serialize scenario: {0}")]
    TomlSer(#[from] toml::ser::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
