use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid observation: {0}")]
    InvalidObservation(String),

    #[error("numerical degeneracy: {0}")]
    NumericalDegeneracy(String),

    #[error("insufficient data for {kind}: need at least {needed} samples, got {got}")]
    InsufficientData {
        kind: &'static str,
        needed: usize,
        got: usize,
    },

    /// A Q-value estimate at a grid point was not finite.
    #[error("non-finite Q-value {value} at grid index {grid_index}")]
    NonFiniteQValue { grid_index: usize, value: f64 },

    #[error("budget exceeded: {0}")]
    BudgetExceeded(String),

    /// Failure while building a value map; `state` is absent when the
    /// level-wide surface fit failed.
    #[error("value-map build failed at level {level}, state {state:?}: {source}")]
    MapBuild {
        level: usize,
        state: Option<usize>,
        #[source]
        source: Box<Error>,
    },

    #[error("incompatible value map: expected {expected}, found {found}")]
    IncompatibleMap { expected: String, found: String },

    #[error("protocol error: {message} (line: {line:?})")]
    Protocol { message: String, line: String },

    #[error("trainer startup failed: {message}; stderr: {stderr:?}")]
    StartupFailure { message: String, stderr: String },

    #[error("trainer failure: {message}; stderr: {stderr:?}")]
    TrainerFailure { message: String, stderr: String },

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Short machine-readable name of the variant.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidArgument(_) => "invalid-argument",
            Error::InvalidObservation(_) => "invalid-observation",
            Error::NumericalDegeneracy(_) => "numerical-degeneracy",
            Error::InsufficientData { .. } => "insufficient-data",
            Error::NonFiniteQValue { .. } => "non-finite-q-value",
            Error::BudgetExceeded(_) => "budget-exceeded",
            Error::MapBuild { .. } => "map-build",
            Error::IncompatibleMap { .. } => "incompatible-map",
            Error::Protocol { .. } => "protocol",
            Error::StartupFailure { .. } => "startup-failure",
            Error::TrainerFailure { .. } => "trainer-failure",
            Error::Config(_) => "config",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
