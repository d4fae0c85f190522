use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("trial {trial_id} has no eligibility criteria text")]
    EmptyCriteria { trial_id: String },

    #[error("no number could be parsed from bound text {raw:?}")]
    UnparsableBound { raw: String },

    #[error("unit {unit:?} cannot be converted for variable {variable:?}")]
    UnknownUnit { variable: String, unit: String },

    #[error("no upper limit of normal configured for {variable:?}")]
    MissingUln { variable: String },

    #[error("{source_name}, line {line}: {message}")]
    Ingest {
        source_name: String,
        line: usize,
        message: String,
    },

    #[error("{source_name}: {rejected} of {total} rows rejected (more than 10%)")]
    TooManyRejects {
        source_name: String,
        rejected: usize,
        total: usize,
    },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("target cohort is empty, generalizability is undefined")]
    EmptyTargetCohort,

    #[error("invalid scenario: {0}")]
    InvalidScenario(String),

    #[error("scenarios are not comparable: {0}")]
    IncomparableScenarios(String),

    #[error("invalid population config: {0}")]
    Config(String),

    #[error("{source_name}: {message}")]
    Resource { source_name: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Stable machine-readable name, used in JSON error payloads.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::EmptyCriteria { .. } => "EmptyCriteria",
            Error::UnparsableBound { .. } => "UnparsableBound",
            Error::UnknownUnit { .. } => "UnknownUnit",
            Error::MissingUln { .. } => "MissingULN",
            Error::Ingest { .. } | Error::TooManyRejects { .. } => "IngestError",
            Error::InvalidParameter(_) => "InvalidParameter",
            Error::EmptyTargetCohort => "EmptyTargetCohort",
            Error::InvalidScenario(_) => "InvalidScenario",
            Error::IncomparableScenarios(_) => "IncomparableScenarios",
            Error::Config(_) => "ConfigError",
            Error::Resource { .. } => "ResourceError",
            Error::Io(_) => "IoError",
        }
    }
}
