use thiserror::Error;

/// Errors raised by the toolkit.
///
/// Variants are grouped by the kind of failure: invalid input data,
/// violated mathematical preconditions, and numerical divergence. The CLI
/// maps each group to its own exit code via [`Error::category`].
#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix is not row-stochastic: {0}")]
    NotStochastic(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("pmf is invalid: {0}")]
    InvalidPmf(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("transition matrix is not irreducible")]
    NotIrreducible,

    #[error("transition matrix is not aperiodic (period {period})")]
    NotAperiodic { period: usize },

    #[error("linear system is singular")]
    SingularSystem,

    #[error("pmf has zero mass at state {state}")]
    ZeroMass { state: usize },

    #[error("support violation at ({row}, {col}): P > 0 where P0 = 0")]
    SupportViolation { row: usize, col: usize },

    #[error("log-normalizer is not finite at state {state}")]
    NonFinite { state: usize },

    #[error("adjoint product P†P is not irreducible; the SPD map is undefined")]
    AdjointProductReducible,

    #[error("design ODE diverged at zeta = {zeta}: {reason}")]
    IntegrationDiverged { zeta: f64, reason: String },

    #[error("zeta = {zeta} is outside the family grid [{min}, {max}]")]
    OutOfGrid { zeta: f64, min: f64, max: f64 },

    #[error("z is (numerically) an eigenvalue of A")]
    NearSingular,

    #[error("linearization has a pole on or outside the unit circle (|λ| = {radius})")]
    UnstablePole { radius: f64 },

    #[error("duty cycle of {target_hours} h cannot be reached with the sojourn ladder")]
    InfeasibleDutyCycle { target_hours: f64 },

    #[error("temperature lattice mismatch: {0}")]
    LatticeMismatch(String),

    #[error("cutoffs must satisfy 0 < lp < hp < Nyquist (lp = {lp}, hp = {hp})")]
    BadCutoffs { lp: f64, hp: f64 },

    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

/// Coarse classification used for process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Category {
    /// Unreadable or malformed input.
    Parse,
    /// Well-formed input that fails a model constraint.
    Validation,
    /// A mathematical precondition does not hold.
    Precondition,
    /// Numerical integration or evaluation diverged.
    Divergence,
}

impl Error {
    pub fn category(&self) -> Category {
        use Error::*;
        match self {
            Json(_) | Csv(_) | Io(_) | Format(_) => Category::Parse,
            NotStochastic(_)
            | DimensionMismatch { .. }
            | InvalidPmf(_)
            | InvalidParameter(_)
            | InfeasibleDutyCycle { .. }
            | LatticeMismatch(_)
            | BadCutoffs { .. } => Category::Validation,
            NotIrreducible
            | NotAperiodic { .. }
            | SingularSystem
            | ZeroMass { .. }
            | SupportViolation { .. }
            | AdjointProductReducible
            | OutOfGrid { .. }
            | NearSingular
            | UnstablePole { .. } => Category::Precondition,
            NonFinite { .. } | IntegrationDiverged { .. } => Category::Divergence,
        }
    }
}
