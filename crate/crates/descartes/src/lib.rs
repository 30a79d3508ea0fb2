//! First-order ("Cartesian") vector fields for mechanical systems with linear
//! velocity constraints.
//!
//! A constrained system on an N-dimensional configuration space is described by
//! M given constraint one-forms `Ω_1..Ω_M` (the admissible velocities are their
//! common kernel), completed by N−M auxiliary one-forms and multiplier
//! functions `λ_{M+1}..λ_N`. The crate constructs the first-order field
//!
//! ```text
//! v(x) = M(x)⁻¹ (0, …, 0, λ_{M+1}(x), …, λ_N(x))ᵀ,   M[j][k] = Ω_j(∂_k),
//! ```
//!
//! whose integral curves — when the multipliers satisfy a pointwise-checkable
//! admissibility condition — coincide with the trajectories of the classical
//! second-order constrained equations of motion. The crate provides:
//!
//! * [`exprlang`] — a small closed-form expression language (AST, parser,
//!   evaluator, symbolic differentiation) used for every symbolic input;
//! * [`geometry`] — metrics, one-forms, exterior derivatives, curl and the
//!   Nambu-Jacobi bracket;
//! * [`cartesian`] — the constraint-frame machinery: structure matrix,
//!   multiplier transport, admissibility residuals;
//! * [`dynamics`] — fixed- and adaptive-step integrators for both the
//!   first-order field and the classical second-order formulation, plus
//!   residual monitors tying the two together;
//! * [`catalog`] — ready-made benchmark systems (sleigh, skate, Suslov, …)
//!   with multiplier presets and closed-form reference solutions;
//! * [`inverse`] — force and potential synthesis from a prescribed orbit
//!   family (Dainelli/Joukovski/Stäckel/Bertrand routes).

pub mod cartesian;
pub mod catalog;
pub mod dynamics;
pub mod error;
pub mod exprlang;
pub mod geometry;
pub mod inverse;
pub mod rng;
pub mod tolerances;

pub use error::DescartesError;
pub use exprlang::Expr;
