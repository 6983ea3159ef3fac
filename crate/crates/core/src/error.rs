use thiserror::Error;

/// Errors raised by the sieve toolkit.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum SieveError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("point coordinate {value} on axis {axis} lies outside the domain [{lo}, {hi}]")]
    OutsideDomain {
        axis: usize,
        value: f64,
        lo: f64,
        hi: f64,
    },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("row {row}: {source}")]
    AtRow {
        row: usize,
        #[source]
        source: Box<SieveError>,
    },

    #[error("more basis functions than tasks: T = {tasks} < P = {params}")]
    Underdetermined { tasks: usize, params: usize },

    #[error("ill-conditioned matrix: lambda_min = {lambda_min:e}, lambda_max = {lambda_max:e}")]
    IllConditioned { lambda_min: f64, lambda_max: f64 },

    #[error("task {task} is pinned by the basis (leverage {leverage})")]
    Leverage { task: usize, leverage: f64 },

    #[error("identification failure: {0}")]
    Identification(String),

    #[error("inconsistent constraint system: dependent row {row} disagrees with its target by {gap:e}")]
    InconsistentConstraints { row: usize, gap: f64 },

    #[error("no testable restriction (effective rank 0)")]
    NoRestriction,

    #[error("basis family mismatch: {0}")]
    FamilyMismatch(String),

    #[error("unsupported dimension {dim}: at most {max} axes are supported")]
    UnsupportedDimension { dim: usize, max: usize },

    #[error("grid of {points} points exceeds the cap of {cap}")]
    GridTooLarge { points: u128, cap: usize },

    #[error("matrix is not symmetric (max deviation {0:e})")]
    Asymmetric(f64),

    #[error("matrix is not positive semi-definite (lambda_min = {0:e})")]
    NotPsd(f64),

    #[error("smoothness precondition violated: {0}")]
    Smoothness(String),

    #[error("incomplete panel at subject {subject}, task {task}")]
    IncompletePanel { subject: usize, task: usize },

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("basis ordering mismatch: {0}")]
    Ordering(String),

    #[error("order selection failed: no candidate satisfied the preconditions")]
    SelectionFailed,
}

pub type Result<T> = std::result::Result<T, SieveError>;

impl SieveError {
    pub(crate) fn at_row(row: usize, err: SieveError) -> Self {
        SieveError::AtRow {
            row,
            source: Box::new(err),
        }
    }
}
