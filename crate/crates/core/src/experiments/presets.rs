use super::coverage::ScenarioConfig;
use super::law::DataLaw;
use crate::correction::{RuleKind, SolverKind};
use crate::error::{Error, Result};
use crate::Divergence;

/// Names accepted by [`preset`].
pub const PRESETS: &[&str] = &["gamma-kernel", "sin-kernel", "regression", "linear-plus-square"];

/// The benchmark scenarios at sample size `n`, with 10,000 replications at
/// levels 0.80, 0.90 and 0.95.
///
/// - `gamma-kernel`: `E min(12, (X−Y)² + X + Y)` under Gamma(2, 1), reverse-kl.
/// - `sin-kernel`: `E sin(X² + Y)` under t₃, chi2.
/// - `regression`: `inf_x E(Y − xZ)²` with `Z ~ χ²₂`, `Y = Z + ε`, reverse-kl.
/// - `linear-plus-square`: `x + y²` of a bivariate standard normal mean,
///   reverse-kl, comparing the two t-factor signs.
pub fn preset(name: &str, n: usize) -> Result<ScenarioConfig> {
    let (model, divergence, data_law, methods) = match name {
        "gamma-kernel" => ("vstat:gamma-kernel", Divergence::reverse_kl(), DataLaw::Gamma21, eb_tb()),
        "sin-kernel" => ("vstat:sin-kernel", Divergence::chi2(), DataLaw::StudentT3, eb_tb()),
        "regression" => ("optim:lsq-loss", Divergence::reverse_kl(), DataLaw::Regression, eb_tb()),
        "linear-plus-square" => (
            "smooth:x+y^2",
            Divergence::reverse_kl(),
            DataLaw::BivariateNormal,
            vec![RuleKind::Exact, RuleKind::BartlettTheoretical, RuleKind::BartlettDicc],
        ),
        other => return Err(Error::ConfigError(format!("unknown preset `{other}` (expected one of {PRESETS:?})"))),
    };
    Ok(ScenarioConfig {
        model: model.parse()?,
        divergence,
        data_law,
        n,
        nominal_levels: vec![0.80, 0.90, 0.95],
        methods,
        reps: 10_000,
        base_seed: 20_240_601,
        oracle_reps: 5000,
        truth: None,
        solver: SolverKind::Exact,
    })
}

fn eb_tb() -> Vec<RuleKind> {
    vec![RuleKind::Exact, RuleKind::BartlettEstimated, RuleKind::BartlettTheoretical]
}
