use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};
use dro_ci::correction::{
    confidence_interval, standardize, t_factors, BallSizeRule, RuleKind, SolverKind, T5Sign,
};
use dro_ci::dro::{solve_dro_exact, Direction};
use dro_ci::experiments::{run_coverage, run_coverage_on, ScenarioConfig};
use dro_ci::influence::{MomentSet, ModelClass};
use dro_ci::{Divergence, ModelSpec};
use serde::Serialize;
use thiserror::Error;

use crate::csvio::{parse_csv, CsvError};
use crate::output::{coverage_csv, to_json};

#[derive(Debug, Parser)]
#[command(name = "dro-ci", version, about = "Distributionally robust confidence intervals with ball-size corrections")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Confidence interval for a functional of a data set.
    Ci {
        #[arg(long)]
        data: PathBuf,
        /// smooth:<name> | vstat:<name> | optim:<name>
        #[arg(long)]
        model: ModelSpec,
        /// kl | reverse-kl | chi2 | cressie-read:<lambda>
        #[arg(long)]
        divergence: Divergence,
        #[arg(long)]
        level: f64,
        /// el | eb | tb | tb2
        #[arg(long, default_value = "el")]
        method: RuleKind,
        /// Independent sample behind the tb and tb2 corrections.
        #[arg(long)]
        oracle_data: Option<PathBuf>,
        #[arg(long, default_value = "exact")]
        solver: SolverKind,
    },
    /// Solve one worst-case problem at a given ball size.
    Solve {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        model: ModelSpec,
        #[arg(long)]
        divergence: Divergence,
        /// Ball size; the constraint is Ê φ(L) ≤ q / (2n).
        #[arg(long)]
        q: f64,
        #[arg(long, default_value = "max")]
        direction: Direction,
    },
    /// Monte Carlo coverage study from a JSON scenario file.
    Coverage {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        reps: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, value_enum, default_value_t = OutputFormat::Json)]
        out: OutputFormat,
    },
    /// Derivatives at 1 and the Bartlett-correctability verdict.
    CheckDivergence {
        /// kl | reverse-kl | chi2 | cressie-read:<lambda>
        name: Divergence,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OutputFormat {
    Json,
    Csv,
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Compute(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Compute(_) => 1,
        }
    }
}

impl From<dro_ci::Error> for CliError {
    fn from(e: dro_ci::Error) -> Self {
        CliError::Compute(e.to_string())
    }
}

impl From<CsvError> for CliError {
    fn from(e: CsvError) -> Self {
        CliError::Compute(e.to_string())
    }
}

#[derive(Serialize)]
struct DivergenceReport {
    name: String,
    d2: f64,
    d3: f64,
    d4: f64,
    bartlett_correctable: bool,
}

#[derive(Serialize)]
struct Residuals {
    divergence: f64,
    mean: f64,
}

#[derive(Serialize)]
struct SolveReport {
    objective: f64,
    alpha_tilde: f64,
    beta: f64,
    residuals: Residuals,
    iterations: usize,
    constraint_active: bool,
    #[serde(rename = "L")]
    l: Vec<f64>,
}

/// Runs one invocation and returns what goes to stdout.
pub fn execute(cli: Cli) -> Result<String, CliError> {
    match cli.command {
        Command::CheckDivergence { name } => Ok(to_json(&DivergenceReport {
            name: name.to_string(),
            d2: name.d2(),
            d3: name.d3(),
            d4: name.d4(),
            bartlett_correctable: name.is_bartlett_correctable(),
        })),
        Command::Solve { data, model, divergence, q, direction } => {
            let m = model.build(&parse_csv(&data)?)?;
            let s = solve_dro_exact(&m, &divergence, q, direction)?;
            Ok(to_json(&SolveReport {
                objective: s.objective,
                alpha_tilde: s.alpha_tilde,
                beta: s.beta,
                residuals: Residuals { divergence: s.residual_divergence, mean: s.residual_mean },
                iterations: s.iterations,
                constraint_active: s.constraint_active,
                l: s.l,
            }))
        }
        Command::Ci { data, model, divergence, level, method, oracle_data, solver } => {
            if !(level > 0.0 && level < 1.0) {
                return Err(CliError::Usage(format!("--level {level} must lie in (0, 1)")));
            }
            let sample = parse_csv(&data)?;
            let rule = match method {
                RuleKind::Exact => BallSizeRule::exact(level),
                RuleKind::BartlettEstimated => BallSizeRule::estimated(level),
                RuleKind::BartlettTheoretical | RuleKind::BartlettDicc => {
                    let path = oracle_data
                        .ok_or_else(|| CliError::Usage(format!("--method {method} needs --oracle-data")))?;
                    let oracle = parse_csv(&path)?;
                    if method == RuleKind::BartlettTheoretical {
                        BallSizeRule::theoretical(level, MomentSet::from_model(&model.build(&oracle)?))
                    } else {
                        if model.class() != ModelClass::Smooth {
                            return Err(CliError::Usage("tb2 needs a smooth:<name> model".into()));
                        }
                        let f = model.smooth_function().expect("smooth model");
                        let factors = t_factors(&standardize(&oracle, f.as_ref())?, T5Sign::PriorLiterature)?;
                        BallSizeRule::dicc(level, factors)
                    }
                }
            };
            let m = model.build(&sample)?;
            Ok(to_json(&confidence_interval(&m, &divergence, &rule, solver)?))
        }
        Command::Coverage { config, reps, seed, out } => {
            let text = std::fs::read_to_string(&config)
                .map_err(|e| CliError::Compute(format!("cannot read {}: {e}", config.display())))?;
            let mut scenario: ScenarioConfig = serde_json::from_str(&text)
                .map_err(|e| CliError::Compute(format!("{}: {e}", config.display())))?;
            if let Some(r) = reps {
                scenario.reps = r;
            }
            if let Some(s) = seed {
                scenario.base_seed = s;
            }
            let report = match threads_from_env()? {
                Some(t) => run_coverage_on(&scenario, t)?,
                None => run_coverage(&scenario)?,
            };
            Ok(match out {
                OutputFormat::Json => to_json(&report),
                OutputFormat::Csv => coverage_csv(&report).trim_end().to_string(),
            })
        }
    }
}

fn threads_from_env() -> Result<Option<usize>, CliError> {
    match std::env::var("DRO_CI_THREADS") {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(t) if t > 0 => Ok(Some(t)),
            _ => Err(CliError::Usage(format!("DRO_CI_THREADS=`{v}` is not a positive integer"))),
        },
        Err(_) => Ok(None),
    }
}
