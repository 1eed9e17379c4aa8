use thiserror::Error;

/// Errors produced while building, fitting or evaluating a historical model.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("node index {index} out of range for a mesh with {count} nodes")]
    NodeOutOfRange { index: usize, count: usize },

    #[error("point (s={s}, t={t}) lies outside the domain 0 <= s <= t <= {horizon}")]
    OutsideDomain { s: f64, t: f64, horizon: f64 },

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("singular system: {0}")]
    Singular(String),

    #[error("zero norm of initial coefficients on group A_{group}; use simple weights instead")]
    ZeroGroupNorm { group: usize },

    #[error("coordinate descent did not converge after {sweeps} sweeps (KKT residual {kkt_residual:.3e})")]
    LassoNotConverged { sweeps: usize, kkt_residual: f64 },

    #[error("group bridge iteration did not converge after {iterations} outer iterations")]
    BridgeNotConverged {
        iterations: usize,
        objective_trace: Vec<f64>,
    },

    #[error("{failed} of {total} bootstrap replications failed (limit is 10%)")]
    BootstrapFailures { failed: usize, total: usize },

    #[error("all {count} tuning candidates failed; last error: {last}")]
    AllCandidatesFailed { count: usize, last: String },

    #[error("malformed input: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Short machine-readable tag, used in CLI error reports.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidConfig(_) => "invalid_config",
            Error::NodeOutOfRange { .. } => "node_out_of_range",
            Error::OutsideDomain { .. } => "outside_domain",
            Error::GridMismatch(_) => "grid_mismatch",
            Error::Dimension(_) => "dimension_mismatch",
            Error::Singular(_) => "singular",
            Error::ZeroGroupNorm { .. } => "zero_group_norm",
            Error::LassoNotConverged { .. } => "lasso_not_converged",
            Error::BridgeNotConverged { .. } => "bridge_not_converged",
            Error::BootstrapFailures { .. } => "bootstrap_failures",
            Error::AllCandidatesFailed { .. } => "all_candidates_failed",
            Error::Parse(_) => "parse",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
            Error::Csv(_) => "csv",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
