//! Interim reduced forms for single-item allocation: feasibility and extremality checks along the
//! principal curve, score-based implementation, and revenue-optimal design by a path-following
//! solver in log coordinates.
//!
//! All numerical types are generic over [`Scalar`] (`f32` or `f64`); the `*64` aliases below fix
//! the scalar to `f64`, which is what the documented tolerances assume.

pub mod allocation;
pub mod environments;
pub mod error;
pub mod feasibility;
pub mod fixtures;
pub mod monotone;
pub mod numeric;
pub mod oracle;
mod scalar;
pub mod solver;
pub mod transforms;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type MonotoneFn64 = monotone::MonotoneFn<f64>;
pub type PsiFn64 = transforms::PsiFn<f64>;
pub type DeltaPath64 = transforms::DeltaPath<f64>;
pub type PrincipalCurve64 = feasibility::PrincipalCurve<f64>;
pub type ScoreRule64 = allocation::ScoreRule<f64>;
pub type Environment64 = environments::Environment<f64>;
pub type SolverPath64 = solver::SolverPath<f64>;
