use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::bartlett::{corrected_q, scaled};
use super::quantile::{chi2_quantile_1df, q_exact};
use super::tfactors::TFactors;
use crate::divergence::{Divergence, DivergenceKind};
use crate::dro::{dro_value_expansion, expansion_coefficients, solve_dro_exact, Direction};
use crate::error::{Error, Result};
use crate::influence::{estimate_moments, InfluenceModel, MomentSet, SecondOrderMoments};

/// How the ball size is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RuleKind {
    /// `φ''(1) χ²`, first-order calibration (EL).
    Exact,
    /// Bartlett correction with sample moments (EB).
    BartlettEstimated,
    /// Bartlett correction with externally supplied moments (TB).
    BartlettTheoretical,
    /// Smooth-function-model correction with the prior-literature `t₅`
    /// sign (TB2).
    BartlettDicc,
}

impl RuleKind {
    /// Short method label: el, eb, tb or tb2.
    pub fn label(self) -> &'static str {
        match self {
            RuleKind::Exact => "el",
            RuleKind::BartlettEstimated => "eb",
            RuleKind::BartlettTheoretical => "tb",
            RuleKind::BartlettDicc => "tb2",
        }
    }
}

impl fmt::Display for RuleKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl Serialize for RuleKind {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(self.label())
    }
}

impl<'de> Deserialize<'de> for RuleKind {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

impl FromStr for RuleKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "el" | "exact" => Ok(RuleKind::Exact),
            "eb" | "bartlett-estimated" => Ok(RuleKind::BartlettEstimated),
            "tb" | "bartlett-theoretical" => Ok(RuleKind::BartlettTheoretical),
            "tb2" | "bartlett-dicc" => Ok(RuleKind::BartlettDicc),
            other => Err(Error::ConfigError(format!("unknown method `{other}` (expected el, eb, tb or tb2)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BallSizeRule {
    pub kind: RuleKind,
    pub nominal: f64,
    /// Moments fed to the theoretical correction.
    pub oracle_moments: Option<MomentSet>,
    /// Prior-literature t-factors fed to the TB2 correction.
    pub dicc_factors: Option<TFactors>,
}

impl BallSizeRule {
    pub fn exact(nominal: f64) -> Self {
        Self { kind: RuleKind::Exact, nominal, oracle_moments: None, dicc_factors: None }
    }

    pub fn estimated(nominal: f64) -> Self {
        Self { kind: RuleKind::BartlettEstimated, ..Self::exact(nominal) }
    }

    pub fn theoretical(nominal: f64, oracle: MomentSet) -> Self {
        Self { kind: RuleKind::BartlettTheoretical, oracle_moments: Some(oracle), ..Self::exact(nominal) }
    }

    pub fn dicc(nominal: f64, factors: TFactors) -> Self {
        Self { kind: RuleKind::BartlettDicc, dicc_factors: Some(factors), ..Self::exact(nominal) }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.nominal > 0.0 && self.nominal < 1.0) {
            return Err(Error::ConfigError(format!("nominal level {} must lie in (0, 1)", self.nominal)));
        }
        if self.oracle_moments.is_some() != (self.kind == RuleKind::BartlettTheoretical) {
            return Err(Error::ConfigError("oracle moments are required for, and only for, the theoretical rule".into()));
        }
        if self.dicc_factors.is_some() != (self.kind == RuleKind::BartlettDicc) {
            return Err(Error::ConfigError("t-factors are required for, and only for, the tb2 rule".into()));
        }
        Ok(())
    }
}

/// Which moments fed the correction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MomentSource {
    None,
    Sample,
    Oracle,
    SmoothFactors,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QSelection {
    pub q: f64,
    pub source: MomentSource,
    pub warnings: Vec<String>,
}

/// Ball size under `rule`. `sample_moments` is only read by the estimated
/// rule.
pub fn select_q(
    rule: &BallSizeRule,
    phi: &Divergence,
    sample_moments: Option<&SecondOrderMoments>,
    n: usize,
) -> Result<QSelection> {
    rule.validate()?;
    let mut warnings = Vec::new();
    let (q, source) = match rule.kind {
        RuleKind::Exact => (q_exact(rule.nominal, phi)?, MomentSource::None),
        RuleKind::BartlettEstimated | RuleKind::BartlettTheoretical => {
            let (moments, source) = if rule.kind == RuleKind::BartlettEstimated {
                let m = sample_moments
                    .ok_or_else(|| Error::ConfigError("the estimated rule needs sample moments".into()))?;
                (m, MomentSource::Sample)
            } else {
                (&rule.oracle_moments.as_ref().expect("validated").second, MomentSource::Oracle)
            };
            if !phi.is_bartlett_correctable() {
                warnings.push(format!(
                    "{phi} is not Bartlett correctable; the corrected ball size depends on the level"
                ));
            }
            let c = corrected_q(rule.nominal, phi, moments, n)?;
            if c.clamped {
                warnings.push(clamp_warning());
            }
            (c.q, source)
        }
        RuleKind::BartlettDicc => {
            if n < 2 {
                return Err(Error::DomainError(format!("sample size {n} is below 2")));
            }
            if phi.kind() != DivergenceKind::ReverseKl {
                warnings.push(format!("the tb2 factor is derived for reverse-kl, not {phi}"));
            }
            let factor = rule.dicc_factors.expect("validated").factor;
            let c = scaled(q_exact(rule.nominal, phi)?, 1.0 + factor / n as f64);
            if c.clamped {
                warnings.push(clamp_warning());
            }
            (c.q, MomentSource::SmoothFactors)
        }
    };
    Ok(QSelection { q, source, warnings })
}

fn clamp_warning() -> String {
    "correction drove the ball size below a tenth of the uncorrected value; clamped".into()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SolverKind {
    /// Solve both optimization problems.
    #[default]
    Exact,
    /// Third-order expansion of the optimal values.
    Expansion,
}

impl fmt::Display for SolverKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SolverKind::Exact => "exact",
            SolverKind::Expansion => "expansion",
        })
    }
}

impl FromStr for SolverKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exact" => Ok(SolverKind::Exact),
            "expansion" => Ok(SolverKind::Expansion),
            other => Err(Error::ConfigError(format!("unknown solver `{other}` (expected exact or expansion)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CIResult {
    pub lower: f64,
    pub upper: f64,
    pub psi_hat: f64,
    pub q_used: f64,
    pub method: RuleKind,
    pub solver: SolverKind,
    pub moment_source: MomentSource,
    pub warnings: Vec<String>,
}

/// `[ψ_min, ψ_max]` with the ball size picked by `rule`.
pub fn confidence_interval(
    model: &InfluenceModel,
    phi: &Divergence,
    rule: &BallSizeRule,
    solver: SolverKind,
) -> Result<CIResult> {
    rule.validate()?;
    let needs_moments = rule.kind == RuleKind::BartlettEstimated || solver == SolverKind::Expansion;
    let moments = if needs_moments { Some(estimate_moments(model)?) } else { None };
    let QSelection { q, source, mut warnings } = select_q(rule, phi, moments.as_ref().map(|m| &m.second), model.n())?;
    let bounds = interval_at(model, phi, q, solver, moments.as_ref())?;
    warnings.extend(bounds.warnings);
    Ok(CIResult {
        lower: bounds.lower,
        upper: bounds.upper,
        psi_hat: model.psi_hat(),
        q_used: q,
        method: rule.kind,
        solver,
        moment_source: source,
        warnings,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Bounds {
    pub lower: f64,
    pub upper: f64,
    pub warnings: Vec<String>,
}

/// `[ψ_min(q), ψ_max(q)]` for a given ball size. `moments` is only read by
/// the expansion solver, which estimates them when absent.
pub fn interval_at(
    model: &InfluenceModel,
    phi: &Divergence,
    q: f64,
    solver: SolverKind,
    moments: Option<&MomentSet>,
) -> Result<Bounds> {
    let psi_hat = model.psi_hat();
    let n = model.n();
    let mut warnings = Vec::new();
    let (mut lower, mut upper) = match solver {
        SolverKind::Exact => (
            solve_dro_exact(model, phi, q, Direction::Min)?.objective,
            solve_dro_exact(model, phi, q, Direction::Max)?.objective,
        ),
        SolverKind::Expansion => {
            let owned;
            let moments = match moments {
                Some(m) => m,
                None => {
                    owned = estimate_moments(model)?;
                    &owned
                }
            };
            let coeffs = expansion_coefficients(moments, phi, false)?;
            if coeffs.c3.is_none() {
                warnings.push("model has no third-order influence function; expansion truncated after s²".into());
            }
            (
                dro_value_expansion(Direction::Min, psi_hat, &coeffs, phi, q, n),
                dro_value_expansion(Direction::Max, psi_hat, &coeffs, phi, q, n),
            )
        }
    };
    // The expansion is not an optimum, so it can land on the wrong side of
    // ψ̂ when the curvature term dominates.
    if lower > psi_hat || upper < psi_hat {
        warnings.push("expansion endpoint crossed the plug-in estimate; widened to include it".into());
        lower = lower.min(psi_hat);
        upper = upper.max(psi_hat);
    }
    Ok(Bounds { lower, upper, warnings })
}

/// Normal-theory half-width `z √(κ̂₂ / n)` at `nominal`.
pub fn normal_half_width(kappa2: f64, n: usize, nominal: f64) -> Result<f64> {
    Ok((chi2_quantile_1df(nominal)? * kappa2 / n as f64).sqrt())
}
