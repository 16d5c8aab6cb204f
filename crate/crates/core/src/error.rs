use ntn_convex::SolverError;

#[derive(Debug, thiserror::Error)]
pub enum NtnError {
    #[error("invalid parameter `{field}`: {reason}")]
    InvalidParam { field: String, reason: String },
    #[error("shape mismatch in {what}: expected {expected}, found {found}")]
    Shape {
        what: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("device and UAV positions coincide")]
    CoincidentPositions,
    #[error("detector Gram matrix is singular")]
    SingularGram,
    #[error("g-transform undefined for C = 0 and eta_L = 1")]
    UndefinedTransform,
    #[error("route mode {mode:?} does not allow the given ratios at u={u}, t={t}")]
    ModeMismatch {
        mode: crate::latency::RouteMode,
        u: usize,
        t: usize,
    },
    #[error("expansion point violates the stream constraints")]
    InfeasibleExpansionPoint,
    #[error("all branches failed")]
    AllBranchesFailed,
    #[error("invalid configuration:\n{}", .0.join("\n"))]
    InvalidConfig(Vec<String>),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl NtnError {
    pub(crate) fn param(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Self::InvalidParam {
            field: field.into(),
            reason: reason.into(),
        }
    }
}

pub type Result<T, E = NtnError> = std::result::Result<T, E>;
