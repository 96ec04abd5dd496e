//! Browser bindings: interval for pasted data, the worst-case weights behind
//! one endpoint, and the divergence check. Each binding wraps a plain
//! function that returns JSON, so the logic is testable off the browser.

use dro_ci::correction::{confidence_interval, BallSizeRule, RuleKind, SolverKind};
use dro_ci::dro::{solve_dro_exact, Direction};
use dro_ci::{Divergence, ModelSpec, Sample};
use serde::Serialize;
use wasm_bindgen::prelude::*;

/// Parses whitespace-, comma- or semicolon-separated numbers, one
/// observation per line. Lines starting with `#` and non-numeric header
/// lines at the top are skipped.
pub fn parse_values(text: &str) -> Result<Sample, String> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (k, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let cells: Vec<&str> = line.split(|c: char| c == ',' || c == ';' || c.is_whitespace()).filter(|c| !c.is_empty()).collect();
        let parsed: Result<Vec<f64>, _> = cells.iter().map(|c| c.parse::<f64>()).collect();
        match parsed {
            Ok(row) => rows.push(row),
            Err(_) if rows.is_empty() => continue,
            Err(_) => return Err(format!("line {}: not a list of numbers", k + 1)),
        }
    }
    if rows.is_empty() {
        return Err("no data".into());
    }
    Sample::from_rows(&rows).map_err(|e| e.to_string())
}

fn parse<T: std::str::FromStr>(s: &str) -> Result<T, String>
where
    T::Err: std::fmt::Display,
{
    s.parse().map_err(|e: T::Err| e.to_string())
}

/// Interval at `level` with the el or eb rule, as JSON.
pub fn interval_json(data: &str, model: &str, divergence: &str, level: f64, method: &str) -> Result<String, String> {
    let sample = parse_values(data)?;
    let spec: ModelSpec = parse(model)?;
    let phi: Divergence = parse(divergence)?;
    let rule = match parse::<RuleKind>(method)? {
        RuleKind::Exact => BallSizeRule::exact(level),
        RuleKind::BartlettEstimated => BallSizeRule::estimated(level),
        other => return Err(format!("{other} needs an oracle sample; use el or eb here")),
    };
    let m = spec.build(&sample).map_err(|e| e.to_string())?;
    let ci = confidence_interval(&m, &phi, &rule, SolverKind::Exact).map_err(|e| e.to_string())?;
    serde_json::to_string(&ci).map_err(|e| e.to_string())
}

#[derive(Serialize)]
struct Weights {
    objective: f64,
    psi_hat: f64,
    weights: Vec<f64>,
    constraint_active: bool,
}

/// Worst-case probability weights `Lᵢ / n` for one direction, as JSON.
pub fn worst_case_json(data: &str, model: &str, divergence: &str, q: f64, direction: &str) -> Result<String, String> {
    let sample = parse_values(data)?;
    let spec: ModelSpec = parse(model)?;
    let phi: Divergence = parse(divergence)?;
    let dir: Direction = parse(direction)?;
    let m = spec.build(&sample).map_err(|e| e.to_string())?;
    let s = solve_dro_exact(&m, &phi, q, dir).map_err(|e| e.to_string())?;
    let n = s.l.len() as f64;
    let out = Weights {
        objective: s.objective,
        psi_hat: m.psi_hat(),
        weights: s.l.iter().map(|l| l / n).collect(),
        constraint_active: s.constraint_active,
    };
    serde_json::to_string(&out).map_err(|e| e.to_string())
}

#[derive(Serialize)]
struct DivergenceCheck {
    name: String,
    d2: f64,
    d3: f64,
    d4: f64,
    bartlett_correctable: bool,
}

pub fn check_divergence_json(name: &str) -> Result<String, String> {
    let phi: Divergence = parse(name)?;
    serde_json::to_string(&DivergenceCheck {
        name: phi.to_string(),
        d2: phi.d2(),
        d3: phi.d3(),
        d4: phi.d4(),
        bartlett_correctable: phi.is_bartlett_correctable(),
    })
    .map_err(|e| e.to_string())
}

#[wasm_bindgen]
pub fn interval(data: &str, model: &str, divergence: &str, level: f64, method: &str) -> Result<String, JsError> {
    interval_json(data, model, divergence, level, method).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn worst_case(data: &str, model: &str, divergence: &str, q: f64, direction: &str) -> Result<String, JsError> {
    worst_case_json(data, model, divergence, q, direction).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn check_divergence(name: &str) -> Result<String, JsError> {
    check_divergence_json(name).map_err(|e| JsError::new(&e))
}
