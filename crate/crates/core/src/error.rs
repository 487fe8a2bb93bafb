use thiserror::Error;

/// Errors raised while building or evaluating a control problem.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("control {u} lies outside the control set")]
    ControlOutOfDomain { u: f64 },
    #[error("ellipticity violated at x={x}, u={u}: |sigma|={value} < lambda={lambda}")]
    Ellipticity { x: f64, u: f64, value: f64, lambda: f64 },
    #[error("cost growth bound violated at x={x}, u={u}: |l|={value} > {bound}")]
    Growth { x: f64, u: f64, value: f64, bound: f64 },
    #[error("non-finite coefficient value at x={x}, u={u}")]
    NonFinite { x: f64, u: f64 },
    #[error("invalid field `{field}`: {reason}")]
    InvalidField { field: String, reason: String },
}

impl ModelError {
    pub(crate) fn field(field: impl Into<String>, reason: impl Into<String>) -> Self {
        ModelError::InvalidField { field: field.into(), reason: reason.into() }
    }
}

/// Errors raised by the grid solver.
#[derive(Debug, Error)]
pub enum SolveError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("invalid solver input `{field}`: {reason}")]
    InvalidInput { field: String, reason: String },
    #[error("singular tridiagonal system at row {row}")]
    Singular { row: usize },
    #[error("policy iteration did not converge in {iterations} iterations (last change {last_change:e})")]
    NotConverged {
        iterations: usize,
        last_change: f64,
        last: Box<crate::solver::Solution>,
    },
}

impl SolveError {
    pub(crate) fn input(field: impl Into<String>, reason: impl Into<String>) -> Self {
        SolveError::InvalidInput { field: field.into(), reason: reason.into() }
    }
}

/// Errors raised by the path simulator and Monte Carlo estimators.
#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("invalid simulation config `{field}`: {reason}")]
    Config { field: String, reason: String },
    #[error("state became non-finite at step {step} of path {path}")]
    Diverged { path: u64, step: usize },
}

impl SimError {
    pub(crate) fn config(field: impl Into<String>, reason: impl Into<String>) -> Self {
        SimError::Config { field: field.into(), reason: reason.into() }
    }
}

/// Errors raised while running verification checks.
#[derive(Debug, Error)]
pub enum VerifyError {
    #[error(transparent)]
    Solve(#[from] SolveError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Errors raised while reading or writing output artifacts.
#[derive(Debug, Error)]
pub enum ArtifactError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error("malformed artifact: {0}")]
    Format(String),
}
