//! Ball-size selection: the first-order χ² calibration, its Bartlett-type
//! correction through the coverage polynomial `A(x)`, and the t-factor form
//! for smooth functions of a mean.

mod bartlett;
mod interval;
mod quantile;
mod tfactors;

pub use bartlett::{a_eval, corrected_q, CorrectedQ, CoveragePolynomial};
pub use interval::{
    confidence_interval, interval_at, normal_half_width, Bounds, select_q, BallSizeRule, CIResult, MomentSource, QSelection, RuleKind,
    SolverKind,
};
pub use quantile::{chi2_quantile_1df, normal_quantile, q_exact};
pub use tfactors::{standardize, t_factors, whiten, StandardizedModel, T5Sign, TFactors, Whitening};
