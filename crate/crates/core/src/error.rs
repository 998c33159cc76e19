use thiserror::Error;

/// Errors raised by the CAP library. Each variant maps to a contract
/// violation of one module; [`CapError::module`] names it.
#[derive(Debug, Error)]
pub enum CapError {
    #[error("column {0} has zero sample variance")]
    ConstantColumn(usize),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("invalid data: {0}")]
    InvalidData(String),
    #[error("group norms are not uniform across groups")]
    NormMismatch,
    #[error("invalid norm: {0}")]
    InvalidNorm(String),
    #[error("index {index} out of range for p = {p}")]
    IndexOutOfRange { index: usize, p: usize },
    #[error("invalid grouping: {0}")]
    InvalidGrouping(String),
    #[error("hierarchy graph contains a cycle")]
    CyclicGraph,
    #[error("invalid hierarchy graph: {0}")]
    InvalidGraph(String),
    #[error("invalid shape: {0}")]
    InvalidShape(String),
    #[error("index {0} belongs to no hierarchy node")]
    UnknownIndex(usize),
    #[error("degenerate design: {0}")]
    DegenerateDesign(String),
    #[error("grouping has overlapping groups")]
    OverlappingGroups,
    #[error("wrong norms for this solver: {0}")]
    WrongNorms(String),
    #[error("hierarchy graph is not a tree")]
    NotATree,
    #[error("norms below 1 give a non-convex penalty")]
    NonConvexNorms,
    #[error("step budget of {0} steps exceeded")]
    StepBudgetExceeded(usize),
    #[error("unsupported solver for this operation: {0}")]
    UnsupportedSolver(String),
    #[error("unsupported penalty configuration: {0}")]
    Unsupported(String),
    #[error("no admissible candidate for model selection")]
    EmptyCandidateSet,
    #[error("fold too small: {0}")]
    FoldTooSmall(String),
    #[error("fold scheme unavailable: {0}")]
    SchemeUnavailable(String),
    #[error("invalid number of clusters k = {k} for p = {p}")]
    InvalidK { k: usize, p: usize },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("covariance matrix is not positive semidefinite")]
    NotPsd,
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl CapError {
    /// Name of the module whose contract was violated.
    pub fn module(&self) -> &'static str {
        use CapError::*;
        match self {
            ConstantColumn(_) | DimensionMismatch(_) | InvalidData(_) | NormMismatch
            | InvalidGrouping(_) => "core_model",
            InvalidNorm(_) | IndexOutOfRange { .. } | Unsupported(_) => "penalty",
            CyclicGraph | InvalidGraph(_) | InvalidShape(_) | UnknownIndex(_) => "hierarchy",
            DegenerateDesign(_) | OverlappingGroups | WrongNorms(_) | NotATree => "path_exact",
            NonConvexNorms | StepBudgetExceeded(_) => "path_blasso",
            UnsupportedSolver(_) | EmptyCandidateSet | FoldTooSmall(_) | SchemeUnavailable(_) => {
                "model_selection"
            }
            InvalidK { .. } => "grouping_estimation",
            ShapeMismatch(_) | NotPsd => "simulation",
            InvalidConfig(_) => "cli",
            Io(_) | Csv(_) | Json(_) => "io",
        }
    }

    /// True for errors caused by malformed input data or files rather than
    /// by the numerical work.
    pub fn is_data_error(&self) -> bool {
        use CapError::*;
        matches!(
            self,
            ConstantColumn(_)
                | DimensionMismatch(_)
                | InvalidData(_)
                | IndexOutOfRange { .. }
                | InvalidGrouping(_)
                | InvalidGraph(_)
                | CyclicGraph
                | UnknownIndex(_)
                | ShapeMismatch(_)
                | Io(_)
                | Csv(_)
                | Json(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, CapError>;
