use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error in {what}: {msg}")]
    Parse { what: String, msg: String },

    #[error("{kind} '{id}': {msg}")]
    Schema {
        kind: &'static str,
        id: String,
        msg: String,
    },

    #[error("{kind} '{id}' references unknown bus '{bus}'")]
    DanglingReference {
        kind: &'static str,
        id: String,
        bus: String,
    },

    #[error("{kind} '{id}': {field} must be positive")]
    NonPositiveRating {
        kind: &'static str,
        id: String,
        field: &'static str,
    },

    #[error("duplicate {kind} id '{id}'")]
    DuplicateId { kind: &'static str, id: String },

    #[error("bus '{bus}' is not connected to the rest of the network")]
    Disconnected { bus: String },

    #[error("transformer '{id}': tap magnitude factor {factor} is not positive at tap {psi}")]
    TapRange { id: String, psi: f64, factor: f64 },

    #[error("branch '{id}': degenerate series impedance")]
    DegenerateImpedance { id: String },

    #[error("branch '{id}': shunt current bound {shunt} exceeds thermal limit {imax}")]
    ShuntDominated { id: String, shunt: f64, imax: f64 },

    #[error("external grid '{id}' has no affiliated elements")]
    IsolatedExternalGrid { id: String },

    #[error("power flow did not converge after {iterations} iterations (mismatch {mismatch:e})")]
    PowerFlowDiverged { iterations: usize, mismatch: f64 },

    #[error("singular system: {0}")]
    Singular(String),

    #[error("objective {0}: empty element set")]
    EmptySet(String),

    #[error("objective {0}: zero base quantity")]
    ZeroBase(String),

    #[error("invalid objective: {0}")]
    Objective(String),

    #[error("invalid weights: {0}")]
    Weights(String),

    #[error("transformer '{id}': fixed tap {psi} outside [{min}, {max}]")]
    FixedTapOutOfRange {
        id: String,
        psi: i32,
        min: i32,
        max: i32,
    },

    #[error("tap enumeration needs {combinations} solves, cap is {cap}")]
    CapExceeded { combinations: usize, cap: usize },

    #[error("cannot sample {count} cases from a population of {population}")]
    Sampling { count: usize, population: usize },

    #[error("study case {case}: {msg}")]
    Case { case: usize, msg: String },

    #[error("empty input: {0}")]
    Empty(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Short machine-readable tag used by the CLI error envelope.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Parse { .. } | Error::Json(_) | Error::Csv(_) => "parse",
            Error::Schema { .. }
            | Error::DanglingReference { .. }
            | Error::NonPositiveRating { .. }
            | Error::DuplicateId { .. }
            | Error::Disconnected { .. }
            | Error::TapRange { .. }
            | Error::DegenerateImpedance { .. }
            | Error::ShuntDominated { .. }
            | Error::IsolatedExternalGrid { .. } => "schema",
            Error::PowerFlowDiverged { .. } | Error::Singular(_) => "numerical",
            Error::EmptySet(_) | Error::ZeroBase(_) | Error::Objective(_) | Error::Weights(_) => {
                "objective"
            }
            Error::FixedTapOutOfRange { .. } | Error::CapExceeded { .. } => "taps",
            Error::Sampling { .. } | Error::Case { .. } | Error::Empty(_) => "data",
            Error::Config(_) => "config",
            Error::Io(_) => "io",
        }
    }
}
