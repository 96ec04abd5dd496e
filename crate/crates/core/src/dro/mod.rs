//! The robust optimization pair over likelihood ratios.
//!
//! For a model with influence functions at `P̂`, the upper (lower) endpoint
//! is the max (min) of the truncated expansion of `ψ(P̂ L)` over weights `L`
//! with `Ê φ(L) ≤ q / (2n)` and `Ê L = 1`.

mod expansion;
mod profile;
mod solver;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;

pub use expansion::{dro_value_expansion, expansion_coefficients, ExpansionCoefficients};
pub use profile::{el_profile, ProfileOptions};
pub use solver::{solve_dro_exact, solve_dro_with, LikelihoodRatioSolution, SolverOptions};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Max,
    Min,
}

impl Direction {
    /// `+1` for the maximization, `−1` for the minimization.
    pub fn sign(self) -> f64 {
        match self {
            Direction::Max => 1.0,
            Direction::Min => -1.0,
        }
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Direction::Max => "max",
            Direction::Min => "min",
        })
    }
}

impl FromStr for Direction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        match s {
            "max" => Ok(Direction::Max),
            "min" => Ok(Direction::Min),
            _ => Err(Error::ConfigError(format!("unknown direction `{s}`"))),
        }
    }
}
