use thiserror::Error;

/// Reason-coded rejection of a raw corpus record.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ValidationError {
    #[error("MISSING_FIELD({0})")]
    MissingField(&'static str),
    #[error("TEXT_TOO_LONG: {0} characters")]
    TextTooLong(usize),
    #[error("MALFORMED_TIMESTAMP({0})")]
    MalformedTimestamp(&'static str),
    #[error("NEGATIVE_COUNT({0})")]
    NegativeCount(&'static str),
    #[error("UNKNOWN_LOCATION({0})")]
    UnknownLocation(String),
}

impl ValidationError {
    pub fn code(&self) -> &'static str {
        match self {
            ValidationError::MissingField(_) => "MISSING_FIELD",
            ValidationError::TextTooLong(_) => "TEXT_TOO_LONG",
            ValidationError::MalformedTimestamp(_) => "MALFORMED_TIMESTAMP",
            ValidationError::NegativeCount(_) => "NEGATIVE_COUNT",
            ValidationError::UnknownLocation(_) => "UNKNOWN_LOCATION",
        }
    }
}

/// Problems loading or checking configuration tables.
#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("malformed location code `{0}`")]
    BadLocationCode(String),
    #[error("location registry needs at least 2 entries, got {0}")]
    RegistryTooSmall(usize),
    #[error("duplicate location `{0}`")]
    DuplicateLocation(String),
    #[error("location `{0}` is not registered")]
    UnknownLocation(String),
    #[error("missing column `{0}`")]
    MissingColumn(&'static str),
    #[error("population share for `{0}` is invalid: {1}")]
    BadShare(String, f64),
    #[error("population share missing for `{0}`")]
    MissingShare(String),
    #[error("population shares sum to {0}, expected 1")]
    SharesDoNotSumToOne(f64),
    #[error("partitions `{0}` and `{1}` overlap")]
    OverlappingPartitions(String, String),
    #[error("malformed time `{0}`")]
    BadTime(String),
    #[error("invalid policy: {0}")]
    BadPolicy(&'static str),
    #[error("invalid parameter: {0}")]
    BadParameter(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FilterError {
    #[error("EMPTY_SET")]
    EmptySet,
    #[error("post `{0}` has no location")]
    MissingLocation(String),
    #[error("invalid filter configuration: {0}")]
    BadConfig(&'static str),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CentralityError {
    #[error("DEGENERATE_COMPONENT: singular flow system over {0:?}")]
    DegenerateComponent(Vec<String>),
    #[error("NODE_MISMATCH")]
    NodeMismatch,
    #[error("invalid edge weight {0}")]
    BadWeight(f64),
    #[error("invalid total weight {0}")]
    BadTotal(f64),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LayoutError {
    #[error("EMPTY_ROW")]
    EmptyRow,
    #[error("BAD_WEIGHT: {0}")]
    BadWeight(f64),
    #[error("MISSING_POPULATION for `{0}`")]
    MissingPopulation(String),
    #[error("post `{0}` has no location")]
    MissingLocation(String),
    #[error("degenerate rectangle {0}x{1}")]
    BadRect(f64, f64),
}

#[derive(Debug, Error)]
pub enum BotError {
    #[error("EMPTY_SET")]
    EmptySet,
    #[error("digests are composed at minute {expected}, got minute {actual}")]
    WrongMinute { expected: u32, actual: u32 },
    #[error("invalid bot configuration: {0}")]
    BadConfig(String),
    #[error("transport: {0}")]
    Transport(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// Failures of the statistical routines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum FitError {
    #[error("NOT_CONVERGED after {0} iterations")]
    NotConverged(usize),
    #[error("SINGULAR_DESIGN: rank {rank} < {columns} columns")]
    SingularDesign { rank: usize, columns: usize },
    #[error("SEPARATION: coefficients diverge")]
    Separation,
    #[error("degenerate response: {0}")]
    Degenerate(&'static str),
    #[error("NESTING_VIOLATION: reduced model is not nested ({0} extra parameters)")]
    NestingViolation(i64),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("EMPTY_SET")]
    EmptySet,
    #[error("unknown column `{0}`")]
    UnknownColumn(String),
    #[error("bad formula: {0}")]
    BadFormula(String),
}

#[derive(Debug, Error)]
pub enum EventError {
    #[error("BAD_EVENT: {0}")]
    BadEvent(String),
    #[error("UNAUTHENTICATED")]
    Unauthenticated,
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}
