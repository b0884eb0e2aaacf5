use thiserror::Error;

/// Failures raised by chart evaluation, curvature and analysis routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("point {point:?} lies outside the chart domain")]
    OutsideDomain { point: Vec<f64> },

    #[error("non-finite {what} at {point:?}")]
    NonFinite { what: &'static str, point: Vec<f64> },

    #[error("metric is ill-conditioned at {point:?} (condition number {condition:.3e})")]
    IllConditioned { point: Vec<f64>, condition: f64 },

    #[error("metric is not positive definite at {point:?}")]
    NotPositiveDefinite { point: Vec<f64> },

    #[error("seed vectors are linearly dependent")]
    DegenerateFrame,

    #[error("tangent vectors span a degenerate plane")]
    DegeneratePlane,

    #[error("vector field vanishes (norm {norm:.3e}) at {point:?}")]
    VanishingField { point: Vec<f64>, norm: f64 },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("integrator step size underflow at t = {t}")]
    StepUnderflow { t: f64 },

    #[error("geodesic start {point:?} is outside the integration region")]
    DegenerateTrajectory { point: Vec<f64> },

    #[error("construction failed: {0}")]
    Construction(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
}

pub type Result<T> = std::result::Result<T, GeometryError>;
