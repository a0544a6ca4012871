use thiserror::Error;

/// Errors shared across the analytic engine, the Fock-space oracle and the
/// batch harness.
#[derive(Debug, Error)]
pub enum Error {
    #[error("moment order {0} exceeds the configured degree bound")]
    DegreeTooLarge(usize),

    #[error("Fock tail weight {weight:.3e} beyond cutoff {cutoff} exceeds tolerance {tol:.1e}")]
    Truncation {
        weight: f64,
        cutoff: usize,
        tol: f64,
    },

    #[error("cutoff leakage {weight:.3e} exceeds tolerance {tol:.1e} ({context}); grow the photon cutoff")]
    CutoffLeakage {
        weight: f64,
        tol: f64,
        context: &'static str,
    },

    #[error("post-selection probability {0:.3e} below threshold")]
    ZeroProbability(f64),

    #[error("singular post-selection: |<phi'|phi>| = {0:.3e}")]
    SingularPostSelection(f64),

    #[error("no real beam-splitter solution for weak value {0}")]
    NoRealSolution(f64),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("subpulse weights must satisfy sum(theta_j^2) = 1, got {0}")]
    WeightConstraintViolated(f64),

    #[error("optimizer budget exhausted after {0} evaluations")]
    BudgetExhausted(usize),

    #[error("config parse error: {0}")]
    Parse(String),

    #[error("config validation error: {0}")]
    Validation(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("sweep point {value}: {source}")]
    AtPoint { value: f64, source: Box<Error> },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Process exit code contract used by the CLI: 2 for bad input,
    /// 3 for numeric failures, 4 is reserved for oracle tolerance failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Parse(_) | Error::Validation(_) | Error::Domain(_)
            | Error::WeightConstraintViolated(_) => 2,
            Error::AtPoint { source, .. } => source.exit_code(),
            _ => 3,
        }
    }
}
