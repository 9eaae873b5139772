use core::fmt;

pub type Result<T> = core::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// Two inputs disagree on the number of species or vector length.
    DimensionMismatch { expected: usize, found: usize },
    /// A diffusion coefficient is non-positive, non-finite or asymmetric.
    InvalidDiffusion { i: usize, j: usize, reason: &'static str },
    /// A composition leaves the simplex.
    InvalidComposition { reason: &'static str, defect: f64 },
    /// The species gradients do not sum to zero.
    InconsistentGradient { defect: f64 },
    /// The bordered force-flux system lost rank beyond its one-dimensional kernel.
    SingularComposition,
    DeltaNonpositive(f64),
    /// The regularization shift is outside the admissible window `(0, upper)`.
    DeltaOutOfRange { delta: f64, upper: f64 },
    GridMismatch,
    MeshMismatch,
    InvalidGrid(&'static str),
    CflViolation { dt: f64, limit: f64 },
    PositivityFailure { clipped_mass: f64, budget: f64 },
    EpsilonTooSmallForGrid { epsilon: f64, spacing: f64 },
    /// A mollifier scale that is not positive and finite.
    InvalidScale(f64),
    InvalidScenario(&'static str),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::DimensionMismatch { expected, found } => {
                write!(f, "dimension mismatch: expected {expected}, found {found}")
            }
            Error::InvalidDiffusion { i, j, reason } => {
                write!(f, "invalid diffusion coefficient D[{}][{}]: {reason}", i + 1, j + 1)
            }
            Error::InvalidComposition { reason, defect } => {
                write!(f, "invalid composition ({reason}, defect {defect:e})")
            }
            Error::InconsistentGradient { defect } => {
                write!(f, "species gradients do not sum to zero (defect {defect:e})")
            }
            Error::SingularComposition => {
                write!(f, "force-flux system is rank deficient beyond its kernel")
            }
            Error::DeltaNonpositive(d) => write!(f, "shift must be positive, got {d}"),
            Error::DeltaOutOfRange { delta, upper } => {
                write!(f, "shift {delta} outside admissible range (0, {upper})")
            }
            Error::GridMismatch => write!(f, "states live on different grids"),
            Error::MeshMismatch => write!(f, "trajectories have different time meshes"),
            Error::InvalidGrid(why) => write!(f, "invalid grid: {why}"),
            Error::CflViolation { dt, limit } => {
                write!(f, "time step {dt:e} exceeds stability limit {limit:e}")
            }
            Error::PositivityFailure { clipped_mass, budget } => {
                write!(f, "clipped mass {clipped_mass:e} exceeds budget {budget:e}")
            }
            Error::EpsilonTooSmallForGrid { epsilon, spacing } => {
                write!(f, "mollifier scale {epsilon} below twice the spacing {spacing}")
            }
            Error::InvalidScale(e) => write!(f, "mollifier scale must be positive, got {e}"),
            Error::InvalidScenario(why) => write!(f, "invalid scenario: {why}"),
        }
    }
}

impl core::error::Error for Error {}
