//! Crate-wide error type.
//!
//! Variants are grouped by the stage that raises them: data ingestion and
//! validation, structural-model evaluation, starting-value computation, and
//! estimation. The CLI maps each group to its exit code via
//! [`Error::exit_class`].

use thiserror::Error;

/// Errors raised anywhere in the crate.
#[derive(Debug, Error)]
pub enum Error {
    // ---- data ingestion / validation -------------------------------------
    #[error("missing column `{0}`")]
    MissingColumn(String),
    #[error("non-numeric value in row {row}, column `{column}`: `{value}`")]
    NonNumericValue {
        row: usize,
        column: String,
        value: String,
    },
    #[error("dataset contains no data rows")]
    EmptyDataset,
    #[error("duplicate time point {time} for subject `{subject}`")]
    DuplicateTimePoint { subject: String, time: f64 },
    #[error("subject `{subject}` has no value for covariate `{name}`")]
    MissingCovariateValue { subject: String, name: String },
    #[error("covariate `{name}` varies over time for subject `{subject}`; only time-invariant covariates are supported")]
    TimeVaryingCovariate { subject: String, name: String },
    #[error("covariate `{0}` required by the model is not in the dataset")]
    MissingCovariate(String),
    #[error("non-finite {what} for subject `{subject}`")]
    NonFiniteValue { subject: String, what: String },

    // ---- structural model -------------------------------------------------
    #[error("domain error: {0}")]
    DomainError(String),
    #[error("transition system is singular (v = {0})")]
    SingularSystem(f64),

    // ---- starting values --------------------------------------------------
    #[error("degenerate time window: {0}")]
    DegenerateWindow(String),
    #[error("too few subjects for a mixed-model fit (need >= 2, got {0})")]
    TooFewSubjects(usize),
    #[error("quintile segmentation degenerate: {0}")]
    QuintileDegenerate(String),
    #[error("invalid start values: {0}")]
    InvalidStart(String),

    // ---- estimation ---------------------------------------------------------
    #[error("estimation diverged: {0}")]
    NonConvergence(String),
    #[error("singular design: {0}")]
    SingularDesign(String),
    #[error("importance-sampling weights degenerate after {retries} retries (min ESS {ess:.1})")]
    DegenerateWeights { retries: usize, ess: f64 },
    #[error("standard error must be positive, got {0}")]
    InvalidSE(f64),
    #[error("singular marginal covariance for subject `{0}`")]
    SingularCovariance(String),
    #[error("no converged fits to aggregate")]
    NoConvergedFits,
    #[error("inclusion criterion infeasible: {0}")]
    InfeasibleInclusion(String),

    // ---- reporting ----------------------------------------------------------
    #[error("unknown group variable `{0}`")]
    UnknownGroupVariable(String),
    #[error("group variable `{0}` is constant")]
    ConstantGroupVariable(String),

    // ---- plumbing -----------------------------------------------------------
    #[error("usage error: {0}")]
    Usage(String),
    #[error("config error: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

/// Coarse error class used for CLI exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    /// Bad invocation or configuration (exit 1).
    Usage,
    /// Problems with the input data (exit 2).
    Data,
    /// Estimation or numerical failures (exit 3).
    Estimation,
}

impl Error {
    /// Exit-code class for the CLI contract (1 usage, 2 data, 3 estimation).
    pub fn exit_class(&self) -> ErrorClass {
        use Error::*;
        match self {
            Usage(_) | Config(_) => ErrorClass::Usage,
            MissingColumn(_)
            | NonNumericValue { .. }
            | EmptyDataset
            | DuplicateTimePoint { .. }
            | MissingCovariateValue { .. }
            | TimeVaryingCovariate { .. }
            | MissingCovariate(_)
            | NonFiniteValue { .. }
            | Io(_)
            | Csv(_)
            | UnknownGroupVariable(_)
            | ConstantGroupVariable(_) => ErrorClass::Data,
            DomainError(_)
            | SingularSystem(_)
            | DegenerateWindow(_)
            | TooFewSubjects(_)
            | QuintileDegenerate(_)
            | InvalidStart(_)
            | NonConvergence(_)
            | SingularDesign(_)
            | DegenerateWeights { .. }
            | InvalidSE(_)
            | SingularCovariance(_)
            | NoConvergedFits
            | InfeasibleInclusion(_) => ErrorClass::Estimation,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
