use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("unknown divergence `{0}` (expected kl, reverse-kl, chi2 or cressie-read:<lambda>)")]
    UnknownDivergence(String),

    #[error("cressie-read parameter {0} is degenerate; use kl (0) or reverse-kl (-1)")]
    DegenerateCressieReadParameter(f64),

    #[error("argument outside the domain: {0}")]
    DomainError(String),

    #[error("invalid sample: {0}")]
    InvalidSample(String),

    #[error("unknown model `{0}`")]
    UnknownModel(String),

    #[error("derivative of order {order} is not available for `{name}`")]
    DerivativeUnavailable { name: String, order: usize },

    #[error("minimizer search did not converge (|mean gradient| = {gradient:e})")]
    MinimizerNotFound { gradient: f64 },

    #[error("mean second derivative {0:e} at the minimizer is not positive")]
    SingularHessian(f64),

    #[error("first-order influence function has (numerically) zero variance")]
    DegenerateVariance,

    #[error("solver did not converge: {0}")]
    NoConvergence(String),

    #[error("ball size too large for the divergence domain: {0}")]
    InfeasibleBall(String),

    #[error("third-order moment requested but the model has no third-order influence function")]
    MissingThirdOrderMoment,

    #[error("target {target} not reachable with ball size up to q = {q_cap}")]
    TargetUnreachable { target: f64, q_cap: f64 },

    #[error("covariance is rank deficient; cannot standardize")]
    SingularWhitening,

    #[error("invalid configuration: {0}")]
    ConfigError(String),
}
