//! Distributionally robust confidence intervals for statistical functionals.
//!
//! A functional `ψ` is presented through its influence functions at the
//! empirical measure ([`influence`]). The interval endpoints are the optimal
//! values of a pair of problems that perturb the empirical weights inside a
//! φ-divergence ball ([`dro`]), whose radius can be chosen to cancel the
//! leading coverage error ([`correction`]). [`experiments`] runs the Monte
//! Carlo studies that measure coverage.

// `!(x > 0.0)` style guards are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod correction;
pub mod divergence;
pub mod dro;
pub mod error;
pub mod experiments;
pub mod influence;
pub mod sample;

pub use divergence::{Divergence, DivergenceKind};
pub use error::{Error, Result};
pub use influence::{InfluenceModel, ModelSpec};
pub use sample::Sample;
