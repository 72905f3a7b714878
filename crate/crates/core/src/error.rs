use std::fmt;

/// Errors surfaced by the numerical routines.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// A parameter violated a documented precondition.
    InvalidParameter(String),
    /// The scalar fixed-point solver exhausted its iteration budget.
    /// Carries the final residuals of both equations.
    FixedPointDiverged { residual_tau2: f64, residual_gamma: f64 },
    /// A root bracket could not be established where theory guarantees one.
    BracketingFailure(String),
    /// A quantizer breakpoint collides with the clamp edge `±a`.
    BreakpointCollision { breakpoint: f64, clamp: f64 },
    /// The determinant bound `t0 < 0` failed, indicating a corrupted fixed point.
    DeterminantSign { t0: f64, a: f64 },
    /// An iterative solver hit its cap; the reported residual bounds the
    /// distance to the optimum via the projected-gradient error bound.
    IterationCap { residual: f64 },
    /// A NaN or infinity appeared in an iterate.
    NonFinite { iteration: usize },
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::InvalidParameter(msg) => write!(f, "invalid parameter: {msg}"),
            Error::FixedPointDiverged { residual_tau2, residual_gamma } => write!(
                f,
                "fixed-point solver did not converge (residuals {residual_tau2:.3e}, {residual_gamma:.3e})"
            ),
            Error::BracketingFailure(msg) => write!(f, "root bracketing failed: {msg}"),
            Error::BreakpointCollision { breakpoint, clamp } => write!(
                f,
                "quantizer breakpoint {breakpoint} collides with clamp edge ±{clamp}"
            ),
            Error::DeterminantSign { t0, a } => {
                write!(f, "determinant t0 = {t0:.3e} is not negative at a = {a}")
            }
            Error::IterationCap { residual } => {
                write!(f, "iteration cap exceeded, residual {residual:.3e}")
            }
            Error::NonFinite { iteration } => {
                write!(f, "non-finite iterate at iteration {iteration}")
            }
        }
    }
}

impl std::error::Error for Error {}

pub type Result<T> = std::result::Result<T, Error>;
