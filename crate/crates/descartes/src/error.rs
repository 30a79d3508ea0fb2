//! Crate-wide error taxonomy.

use thiserror::Error;

/// Everything that can go wrong across the library.
///
/// Variants are deliberately coarse: each names a *situation* the caller can
/// react to, with human-readable detail attached. Numerical residual failures
/// that indicate a bug in the library itself (two independent computation
/// routes disagreeing) are reported as [`DescartesError::InternalInconsistency`]
/// rather than silently picking one route.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum DescartesError {
    /// Source text could not be parsed; `offset` is a byte offset into the input.
    #[error("syntax error at byte {offset}: {message}")]
    Syntax { offset: usize, message: String },

    /// Evaluation hit a domain boundary (log of a non-positive number,
    /// square root of a negative number, division by zero, …).
    #[error("domain error: {message} in `{at}`")]
    Domain { message: String, at: String },

    /// A metric failed its positive-definiteness check at some probe point.
    #[error("metric not positive definite: {detail}")]
    SingularMetric { detail: String },

    /// The constraint frame matrix is numerically singular at a point.
    #[error("constraint frame singular at {point:?}: |det| = {det:e} ≤ {threshold:e}")]
    FrameSingular {
        point: Vec<f64>,
        det: f64,
        threshold: f64,
    },

    /// Evaluation was requested too close to a coordinate-chart singularity.
    #[error("chart singularity ({chart}): {detail}")]
    ChartSingular { chart: String, detail: String },

    /// An iterative procedure (quadrature, step-size control) failed to converge.
    #[error("no convergence: {what}")]
    NonConvergence { what: String },

    /// The caller supplied data that violates a documented precondition.
    #[error("inconsistent input: {message}")]
    InconsistentInput { message: String },

    /// Two independent internal computations disagreed beyond tolerance.
    #[error("internal inconsistency: {message}")]
    InternalInconsistency { message: String },
}

pub type Result<T> = std::result::Result<T, DescartesError>;
