use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Exp1, Gamma, StandardNormal, StudentT};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::Sample;

/// Data-generating distributions of the coverage studies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DataLaw {
    /// Gamma with shape 2 and scale 1.
    #[serde(rename = "gamma(2,1)")]
    Gamma21,
    /// Student t with 3 degrees of freedom.
    #[serde(rename = "student-t(3)")]
    StudentT3,
    /// `(Y, Z)` with `Z ~ χ²₂` and `Y = Z + ε`, `ε ~ N(0, 1)`.
    #[serde(rename = "regression")]
    Regression,
    /// Standard normal.
    #[serde(rename = "standard-normal")]
    StandardNormal,
    /// `(X, Y)` independent standard normals.
    #[serde(rename = "bivariate-standard-normal")]
    BivariateNormal,
}

impl DataLaw {
    pub const ALL: [DataLaw; 5] =
        [DataLaw::Gamma21, DataLaw::StudentT3, DataLaw::StandardNormal, DataLaw::Regression, DataLaw::BivariateNormal];

    pub fn dim(self) -> usize {
        match self {
            DataLaw::Gamma21 | DataLaw::StudentT3 | DataLaw::StandardNormal => 1,
            DataLaw::Regression | DataLaw::BivariateNormal => 2,
        }
    }

    pub fn mean(self) -> Vec<f64> {
        match self {
            DataLaw::Gamma21 => vec![2.0],
            DataLaw::StudentT3 | DataLaw::StandardNormal => vec![0.0],
            DataLaw::Regression => vec![2.0, 2.0],
            DataLaw::BivariateNormal => vec![0.0, 0.0],
        }
    }

    /// Component variances.
    pub fn variance(self) -> Vec<f64> {
        match self {
            DataLaw::Gamma21 => vec![2.0],
            DataLaw::StudentT3 => vec![3.0],
            DataLaw::StandardNormal => vec![1.0],
            DataLaw::Regression => vec![5.0, 4.0],
            DataLaw::BivariateNormal => vec![1.0, 1.0],
        }
    }

    /// Appends one observation to `out`.
    pub fn draw<R: Rng + ?Sized>(self, rng: &mut R, out: &mut Vec<f64>) {
        match self {
            DataLaw::Gamma21 => out.push(rng.sample(Gamma::new(2.0, 1.0).expect("valid parameters"))),
            DataLaw::StudentT3 => out.push(rng.sample(StudentT::new(3.0).expect("valid parameters"))),
            DataLaw::StandardNormal => out.push(rng.sample(StandardNormal)),
            DataLaw::Regression => {
                let z = 2.0 * rng.sample::<f64, _>(Exp1);
                let e: f64 = rng.sample(StandardNormal);
                out.extend([z + e, z]);
            }
            DataLaw::BivariateNormal => {
                out.push(rng.sample(StandardNormal));
                out.push(rng.sample(StandardNormal));
            }
        }
    }
}

/// `n` independent draws from `law`, reproducible from `seed`.
pub fn sample_law(law: DataLaw, n: usize, seed: u64) -> Sample {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut data = Vec::with_capacity(n * law.dim());
    for _ in 0..n {
        law.draw(&mut rng, &mut data);
    }
    Sample::new(data, law.dim()).expect("draws are finite")
}

impl fmt::Display for DataLaw {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DataLaw::Gamma21 => "gamma(2,1)",
            DataLaw::StudentT3 => "student-t(3)",
            DataLaw::StandardNormal => "standard-normal",
            DataLaw::Regression => "regression",
            DataLaw::BivariateNormal => "bivariate-standard-normal",
        })
    }
}

impl FromStr for DataLaw {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "gamma(2,1)" | "gamma" => Ok(DataLaw::Gamma21),
            "student-t(3)" | "t3" | "student-t" => Ok(DataLaw::StudentT3),
            "standard-normal" | "normal" => Ok(DataLaw::StandardNormal),
            "regression" => Ok(DataLaw::Regression),
            "bivariate-standard-normal" | "normal2" => Ok(DataLaw::BivariateNormal),
            other => Err(Error::ConfigError(format!("unknown data law `{other}`"))),
        }
    }
}
