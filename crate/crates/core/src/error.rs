use thiserror::Error;

/// Failures while building point sets or geometric values.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeomError {
    #[error("point set needs at least {required} points, got {got}")]
    TooFewPoints { required: usize, got: usize },
    #[error("non-finite coordinate at index {0}")]
    NonFinite(usize),
    #[error("circle radius must be positive and finite, got {0}")]
    BadRadius(f64),
    #[error("line normal must be nonzero and finite")]
    BadNormal,
}

/// Evaluation outside the region where the polar objective is defined.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ObjectiveError {
    #[error("square-root argument {value} <= 0 at point {index}")]
    Domain { index: usize, value: f64 },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FitError {
    #[error("need at least {required} points, got {got}")]
    TooFewPoints { required: usize, got: usize },
    #[error("data are collinear; the algebraic normal equations are singular")]
    CollinearData,
    #[error("fitted radius squared is not positive ({0})")]
    NegativeRadicand(f64),
    #[error("all points coincide")]
    DegenerateScatter,
    #[error("two of the points coincide")]
    DuplicatePoints,
    #[error("x values have zero variance")]
    ZeroVariance,
    #[error("non-finite arithmetic in {0}")]
    NumericFailure(&'static str),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("generator spec mismatch: {0}")]
    SpecMismatch(String),
    #[error("need at least 3 distinct true angles, got {0}")]
    TooFewDistinctAngles(usize),
    #[error("invalid generator parameters: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LabError {
    #[error("only {retained} thresholds have enough exceedances (need 3)")]
    InsufficientTailData { retained: usize },
    #[error("fit failed at grid index {index}: {source}")]
    FitFailure { index: usize, source: FitError },
    #[error("trial {trial}: {source}")]
    Trial { trial: u64, source: FitError },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("invalid study config: {0}")]
    Config(String),
}
