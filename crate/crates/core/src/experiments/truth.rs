use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::law::DataLaw;
use super::seed::{stream_seed, Stream};
use crate::error::{Error, Result};
use crate::influence::{ModelClass, ModelSpec};

/// How the population value of the functional is obtained.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Truth {
    Analytic(f64),
    /// Mean of the kernel over independent pairs.
    MonteCarlo { pairs: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TruthEstimate {
    pub value: f64,
    /// Zero for analytic values.
    pub std_error: f64,
}

/// The truth used when a scenario does not set one: closed forms where the
/// law allows, otherwise a million-pair Monte Carlo mean.
pub fn default_truth(model: &ModelSpec, law: DataLaw) -> Result<Truth> {
    check_dims(model, law)?;
    match model.class() {
        ModelClass::Smooth => {
            let f = model.smooth_function().expect("smooth model");
            Ok(Truth::Analytic(f.value(&law.mean())))
        }
        ModelClass::Vstat => Ok(Truth::MonteCarlo { pairs: 1_000_000 }),
        ModelClass::Optim => match (model.name(), law) {
            // E[YZ] / E[Z²] with Y = Z + ε
            ("lsq-loss", DataLaw::Regression) => Ok(Truth::Analytic(1.0)),
            ("sq-loss", _) => Ok(Truth::Analytic(law.variance()[0])),
            _ => Err(Error::ConfigError(format!("no closed-form truth for `{model}` under {law}; set one"))),
        },
    }
}

fn check_dims(model: &ModelSpec, law: DataLaw) -> Result<()> {
    if model.dim() != law.dim() {
        return Err(Error::ConfigError(format!(
            "model `{model}` takes {}-dimensional data but {law} is {}-dimensional",
            model.dim(),
            law.dim()
        )));
    }
    Ok(())
}

/// Evaluates `truth`. Monte Carlo truths are only defined for V-statistics,
/// whose population value is `E h(X, Y)` over independent `X, Y`.
pub fn estimate_truth(model: &ModelSpec, law: DataLaw, truth: Truth, base_seed: u64) -> Result<TruthEstimate> {
    check_dims(model, law)?;
    match truth {
        Truth::Analytic(value) => Ok(TruthEstimate { value, std_error: 0.0 }),
        Truth::MonteCarlo { pairs } => {
            let kernel = model
                .kernel()
                .ok_or_else(|| Error::ConfigError(format!("monte-carlo truth needs a V-statistic, not `{model}`")))?;
            if pairs < 2 {
                return Err(Error::ConfigError("monte-carlo truth needs at least 2 pairs".into()));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(base_seed, Stream::Truth, 0));
            let (mut x, mut y) = (Vec::with_capacity(law.dim()), Vec::with_capacity(law.dim()));
            // Welford
            let (mut mean, mut m2) = (0.0, 0.0);
            for k in 1..=pairs {
                x.clear();
                y.clear();
                law.draw(&mut rng, &mut x);
                law.draw(&mut rng, &mut y);
                let h = kernel.eval(&x, &y);
                let d = h - mean;
                mean += d / k as f64;
                m2 += d * (h - mean);
            }
            let var = m2 / (pairs - 1) as f64;
            Ok(TruthEstimate { value: mean, std_error: (var / pairs as f64).sqrt() })
        }
    }
}
