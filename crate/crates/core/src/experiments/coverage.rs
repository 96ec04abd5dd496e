use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::law::{sample_law, DataLaw};
use super::seed::{stream_seed, Stream};
use super::truth::{default_truth, estimate_truth, Truth};
use crate::correction::{interval_at, select_q, standardize, t_factors, BallSizeRule, RuleKind, SolverKind, T5Sign};
use crate::divergence::Divergence;
use crate::error::{Error, Result};
use crate::influence::{estimate_moments, MomentSet, ModelClass, ModelSpec};

/// Failure rate at or above which a report is flagged.
pub const FLAG_FAILURE_RATE: f64 = 1e-3;

fn default_oracle_reps() -> usize {
    5000
}

/// One coverage study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub model: ModelSpec,
    pub divergence: Divergence,
    pub data_law: DataLaw,
    pub n: usize,
    pub nominal_levels: Vec<f64>,
    pub methods: Vec<RuleKind>,
    pub reps: usize,
    pub base_seed: u64,
    /// Size of the sample behind the tb and tb2 corrections.
    #[serde(default = "default_oracle_reps")]
    pub oracle_reps: usize,
    /// Population value; see [`default_truth`] when absent.
    #[serde(default)]
    pub truth: Option<Truth>,
    #[serde(default)]
    pub solver: SolverKind,
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::ConfigError(m));
        if self.reps < 100 {
            return bad(format!("reps = {} is below 100", self.reps));
        }
        if self.n < 5 {
            return bad(format!("n = {} is below 5", self.n));
        }
        if self.nominal_levels.is_empty() || self.methods.is_empty() {
            return bad("at least one level and one method are required".into());
        }
        if let Some(l) = self.nominal_levels.iter().find(|l| !(**l > 0.0 && **l < 1.0)) {
            return bad(format!("nominal level {l} must lie in (0, 1)"));
        }
        if self.model.dim() != self.data_law.dim() {
            return bad(format!(
                "model `{}` takes {}-dimensional data but {} is {}-dimensional",
                self.model,
                self.model.dim(),
                self.data_law,
                self.data_law.dim()
            ));
        }
        let needs_oracle = self.methods.iter().any(|m| matches!(m, RuleKind::BartlettTheoretical | RuleKind::BartlettDicc));
        if needs_oracle && self.oracle_reps < 10 {
            return bad(format!("oracle_reps = {} is too small", self.oracle_reps));
        }
        if self.methods.contains(&RuleKind::BartlettDicc) && self.model.class() != ModelClass::Smooth {
            return bad(format!("tb2 is defined for smooth-function models only, not `{}`", self.model));
        }
        Ok(())
    }
}

/// Coverage of one (method, level) pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageCell {
    pub method: RuleKind,
    pub level: f64,
    /// Fraction of valid replications whose interval contains the truth.
    pub coverage: f64,
    /// Half-width of the 95% normal-approximation binomial interval.
    pub half_width: f64,
    pub covered: usize,
    /// Replications that produced an interval.
    pub reps_completed: usize,
    /// Replications that failed; excluded from `coverage`.
    pub failures: usize,
    pub mean_width: f64,
    pub mean_q: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageReport {
    pub config: ScenarioConfig,
    pub truth: f64,
    pub truth_std_error: f64,
    pub cells: Vec<CoverageCell>,
    /// Some cell failed in at least [`FLAG_FAILURE_RATE`] of replications.
    pub flagged: bool,
}

impl CoverageReport {
    pub fn cell(&self, method: RuleKind, level: f64) -> Option<&CoverageCell> {
        self.cells.iter().find(|c| c.method == method && c.level == level)
    }
}

#[derive(Debug, Clone, Copy)]
enum Outcome {
    Interval { covered: bool, width: f64, q: f64 },
    Failed,
}

/// Runs the study on the global rayon pool.
pub fn run_coverage(config: &ScenarioConfig) -> Result<CoverageReport> {
    run(config, None)
}

/// Runs the study on a dedicated pool of `threads` workers. The report is
/// identical for every thread count.
pub fn run_coverage_on(config: &ScenarioConfig, threads: usize) -> Result<CoverageReport> {
    run(config, Some(threads.max(1)))
}

fn run(config: &ScenarioConfig, threads: Option<usize>) -> Result<CoverageReport> {
    config.validate()?;
    let truth_mode = match config.truth {
        Some(t) => t,
        None => default_truth(&config.model, config.data_law)?,
    };
    let truth = estimate_truth(&config.model, config.data_law, truth_mode, config.base_seed)?;
    let rules = oracle_rules(config)?;

    let replicate = |r: usize| replication(config, &rules, truth.value, r);
    let outcomes: Vec<Vec<Outcome>> = match threads {
        None => (0..config.reps).into_par_iter().map(replicate).collect(),
        Some(t) => rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build()
            .map_err(|e| Error::ConfigError(format!("cannot start worker pool: {e}")))?
            .install(|| (0..config.reps).into_par_iter().map(replicate).collect()),
    };

    // Sequential aggregation in replication order keeps floating-point sums
    // independent of the schedule.
    let mut cells = Vec::with_capacity(rules.len());
    let mut flagged = false;
    for (k, rule) in rules.iter().enumerate() {
        let (mut covered, mut valid, mut failures) = (0usize, 0usize, 0usize);
        let (mut width, mut q) = (0.0, 0.0);
        for rep in &outcomes {
            match rep[k] {
                Outcome::Interval { covered: c, width: w, q: qq } => {
                    valid += 1;
                    covered += c as usize;
                    width += w;
                    q += qq;
                }
                Outcome::Failed => failures += 1,
            }
        }
        let p = if valid > 0 { covered as f64 / valid as f64 } else { 0.0 };
        let half_width = if valid > 0 { 1.96 * (p * (1.0 - p) / valid as f64).sqrt() } else { 0.0 };
        flagged |= valid == 0 || failures as f64 >= FLAG_FAILURE_RATE * config.reps as f64;
        let denom = valid.max(1) as f64;
        cells.push(CoverageCell {
            method: rule.kind,
            level: rule.nominal,
            coverage: p,
            half_width,
            covered,
            reps_completed: valid,
            failures,
            mean_width: width / denom,
            mean_q: q / denom,
        });
    }
    Ok(CoverageReport { config: config.clone(), truth: truth.value, truth_std_error: truth.std_error, cells, flagged })
}

/// One rule per (method, level), methods outermost. The tb and tb2
/// corrections are estimated once per scenario from an independent sample.
fn oracle_rules(config: &ScenarioConfig) -> Result<Vec<BallSizeRule>> {
    let setup = |e: Error| Error::ConfigError(format!("oracle sample: {e}"));
    let needs = |k| config.methods.contains(&k);
    let oracle = (needs(RuleKind::BartlettTheoretical) || needs(RuleKind::BartlettDicc))
        .then(|| sample_law(config.data_law, config.oracle_reps, stream_seed(config.base_seed, Stream::Oracle, 0)));

    let oracle_moments = match (&oracle, needs(RuleKind::BartlettTheoretical)) {
        (Some(sample), true) => Some(MomentSet::from_model(&config.model.build(sample).map_err(setup)?)),
        _ => None,
    };
    let factors = match (&oracle, needs(RuleKind::BartlettDicc)) {
        (Some(sample), true) => {
            let f = config.model.smooth_function().expect("validated");
            let m = standardize(sample, f.as_ref()).map_err(setup)?;
            Some(t_factors(&m, T5Sign::PriorLiterature).map_err(setup)?)
        }
        _ => None,
    };

    let mut rules = Vec::new();
    for &method in &config.methods {
        for &level in &config.nominal_levels {
            rules.push(match method {
                RuleKind::Exact => BallSizeRule::exact(level),
                RuleKind::BartlettEstimated => BallSizeRule::estimated(level),
                RuleKind::BartlettTheoretical => BallSizeRule::theoretical(level, oracle_moments.expect("computed")),
                RuleKind::BartlettDicc => BallSizeRule::dicc(level, factors.expect("computed")),
            });
        }
    }
    Ok(rules)
}

fn replication(config: &ScenarioConfig, rules: &[BallSizeRule], truth: f64, r: usize) -> Vec<Outcome> {
    let sample = sample_law(config.data_law, config.n, stream_seed(config.base_seed, Stream::Replication, r as u64));
    let model = match config.model.build(&sample) {
        Ok(m) => m,
        Err(_) => return vec![Outcome::Failed; rules.len()],
    };
    let needs_moments =
        config.solver == SolverKind::Expansion || rules.iter().any(|r| r.kind == RuleKind::BartlettEstimated);
    let moments = needs_moments.then(|| estimate_moments(&model));
    let phi = &config.divergence;

    rules
        .iter()
        .map(|rule| {
            let m = moments.as_ref().and_then(|m| m.as_ref().ok());
            if rule.kind == RuleKind::BartlettEstimated && m.is_none() {
                return Outcome::Failed;
            }
            let interval = select_q(rule, phi, m.map(|m| &m.second), config.n)
                .and_then(|sel| interval_at(&model, phi, sel.q, config.solver, m).map(|b| (sel.q, b)));
            match interval {
                Ok((q, b)) => Outcome::Interval { covered: b.lower <= truth && truth <= b.upper, width: b.upper - b.lower, q },
                Err(_) => Outcome::Failed,
            }
        })
        .collect()
}
