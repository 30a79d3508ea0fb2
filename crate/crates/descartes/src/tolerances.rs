//! Central numeric tolerances.
//!
//! Every comparison threshold used by the library lives here so that the
//! invariants enforced across modules stay mutually consistent. Tests pin
//! these values; changing one is an API-visible event.

/// Relative agreement required between a symbolic derivative and a central
/// finite difference with step [`FD_STEP_SCALE`].
pub const DERIVATIVE_FD_REL: f64 = 1e-6;

/// Scale factor for finite-difference steps: `h = FD_STEP_SCALE * (1 + |x|)`.
pub const FD_STEP_SCALE: f64 = 1e-5;

/// Exact-arithmetic identities (linearity of differentiation, raise∘lower).
pub const ALGEBRAIC_IDENTITY: f64 = 1e-12;

/// d∘d = 0 and related exterior-calculus residuals, scaled by coefficient size.
pub const EXTERIOR_IDENTITY: f64 = 1e-10;

/// Orthogonality of the Nambu-Jacobi bracket to its arguments, scaled.
pub const BRACKET_ORTHOGONALITY: f64 = 1e-10;

/// Curl of a gradient under the identity metric.
pub const CURL_OF_GRADIENT: f64 = 1e-8;

/// Frame degeneracy: |det M| ≤ FRAME_SINGULAR_REL · Π_j ‖row_j‖ is an error.
pub const FRAME_SINGULAR_REL: f64 = 1e-10;

/// Relative agreement between the linear-solve and determinant routes for v.
pub const VELOCITY_ROUTE_REL: f64 = 1e-10;

/// Antisymmetry of the structure matrix and the MᵀAM reconstruction of H.
pub const STRUCTURE_MATRIX_REL: f64 = 1e-10;

/// Relative agreement between the two transported-multiplier routes.
pub const LAMBDA_ROUTE_REL: f64 = 1e-8;

/// Admissibility residuals on verification grids.
pub const CONSISTENCY_GRID: f64 = 1e-8;

/// Residual gate for closed-form reference solutions substituted into the
/// classical equations of motion.
pub const SUBSTITUTION_GATE: f64 = 1e-8;

/// Distance to a chart singularity at which catalog evaluations abort.
pub const CHART_GUARD: f64 = 1e-6;

/// Constraint satisfaction required of initial data for second-order runs.
pub const CLASSICAL_PRECONDITION: f64 = 1e-10;

/// Orthogonality precondition (∇S, ∇f_j)_G = 0 for the shared-surface route.
pub const SURFACE_ORTHOGONALITY: f64 = 1e-8;

/// Absolute tolerance of the adaptive Simpson quadrature.
pub const QUADRATURE_TOL: f64 = 1e-10;

/// Endpoint inset δ for quadratures on the open interval (−1, 1).
pub const ENDPOINT_INSET: f64 = 1e-6;

/// Residual gate for synthesized radial profiles substituted into their ODE.
pub const PROFILE_ODE_GATE: f64 = 1e-6;

/// Allowed drift of orbit-family functions under a synthesized force.
pub const ORBIT_INVARIANCE: f64 = 1e-6;
