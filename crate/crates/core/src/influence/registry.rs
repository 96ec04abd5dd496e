//! Name-keyed registry of smooth functions, kernels and losses.
//!
//! Models are named `smooth:<name>`, `vstat:<name>` or `optim:<name>`.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{
    optim_model, smooth_model, vstat_model, GammaKernel, Identity, InfluenceModel, Kernel, LeastSquaresLoss,
    LinearPlusSquare, Loss, ProductKernel, SinKernel, SmoothFunction, Square, SquaredErrorLoss,
};
use crate::error::{Error, Result};
use crate::Sample;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelClass {
    Smooth,
    Vstat,
    Optim,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ModelSpec {
    class: ModelClass,
    name: String,
}

const SMOOTH: &[&str] = &["identity", "z^2", "x+y^2"];
const VSTAT: &[&str] = &["product", "gamma-kernel", "sin-kernel"];
const OPTIM: &[&str] = &["lsq-loss", "sq-loss"];

impl ModelSpec {
    pub fn new(class: ModelClass, name: &str) -> Result<Self> {
        let known = match class {
            ModelClass::Smooth => SMOOTH,
            ModelClass::Vstat => VSTAT,
            ModelClass::Optim => OPTIM,
        };
        if known.contains(&name) {
            Ok(Self { class, name: name.to_string() })
        } else {
            Err(Error::UnknownModel(format!("{class}:{name}")))
        }
    }

    pub fn class(&self) -> ModelClass {
        self.class
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    /// Every registered model.
    pub fn all() -> Vec<ModelSpec> {
        let mut out = Vec::new();
        for (class, names) in [(ModelClass::Smooth, SMOOTH), (ModelClass::Vstat, VSTAT), (ModelClass::Optim, OPTIM)] {
            out.extend(names.iter().map(|n| ModelSpec { class, name: n.to_string() }));
        }
        out
    }

    /// Number of columns an observation must have.
    pub fn dim(&self) -> usize {
        match self.class {
            ModelClass::Smooth => self.smooth_function().map_or(1, |f| f.dim()),
            ModelClass::Vstat => self.kernel().map_or(1, |k| k.dim()),
            ModelClass::Optim => self.loss().map_or(1, |l| l.dim()),
        }
    }

    pub fn smooth_function(&self) -> Option<Box<dyn SmoothFunction>> {
        if self.class != ModelClass::Smooth {
            return None;
        }
        Some(match self.name.as_str() {
            "identity" => Box::new(Identity),
            "z^2" => Box::new(Square),
            "x+y^2" => Box::new(LinearPlusSquare),
            _ => return None,
        })
    }

    pub fn kernel(&self) -> Option<Arc<dyn Kernel>> {
        if self.class != ModelClass::Vstat {
            return None;
        }
        Some(match self.name.as_str() {
            "product" => Arc::new(ProductKernel),
            "gamma-kernel" => Arc::new(GammaKernel),
            "sin-kernel" => Arc::new(SinKernel),
            _ => return None,
        })
    }

    pub fn loss(&self) -> Option<Box<dyn Loss>> {
        if self.class != ModelClass::Optim {
            return None;
        }
        Some(match self.name.as_str() {
            "lsq-loss" => Box::new(LeastSquaresLoss),
            "sq-loss" => Box::new(SquaredErrorLoss),
            _ => return None,
        })
    }

    /// Builds the influence model of this functional on `sample`.
    pub fn build(&self, sample: &Sample) -> Result<InfluenceModel> {
        if sample.dim() != self.dim() {
            return Err(Error::InvalidSample(format!(
                "model `{self}` needs {} column(s), data has {}",
                self.dim(),
                sample.dim()
            )));
        }
        match self.class {
            ModelClass::Smooth => smooth_model(sample, self.smooth_function().expect("registered").as_ref()),
            ModelClass::Vstat => Ok(vstat_model(sample, self.kernel().expect("registered"))),
            ModelClass::Optim => optim_model(sample, self.loss().expect("registered").as_ref()),
        }
    }
}

impl fmt::Display for ModelClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ModelClass::Smooth => "smooth",
            ModelClass::Vstat => "vstat",
            ModelClass::Optim => "optim",
        })
    }
}

impl fmt::Display for ModelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.class, self.name)
    }
}

impl FromStr for ModelSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (class, name) = s.trim().split_once(':').ok_or_else(|| Error::UnknownModel(s.to_string()))?;
        let class = match class {
            "smooth" => ModelClass::Smooth,
            "vstat" => ModelClass::Vstat,
            "optim" => ModelClass::Optim,
            _ => return Err(Error::UnknownModel(s.to_string())),
        };
        Self::new(class, name)
    }
}

impl Serialize for ModelSpec {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for ModelSpec {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_and_display() {
        for spec in ModelSpec::all() {
            let round: ModelSpec = spec.to_string().parse().unwrap();
            assert_eq!(round, spec);
        }
        assert!(matches!("vstat:nope".parse::<ModelSpec>(), Err(Error::UnknownModel(_))));
        assert!(matches!("identity".parse::<ModelSpec>(), Err(Error::UnknownModel(_))));
    }

    #[test]
    fn dimensions() {
        assert_eq!("smooth:x+y^2".parse::<ModelSpec>().unwrap().dim(), 2);
        assert_eq!("optim:lsq-loss".parse::<ModelSpec>().unwrap().dim(), 2);
        assert_eq!("vstat:gamma-kernel".parse::<ModelSpec>().unwrap().dim(), 1);
    }

    #[test]
    fn build_checks_columns() {
        let s = Sample::from_scalars(vec![1.0, 2.0, 3.0]).unwrap();
        let spec: ModelSpec = "smooth:x+y^2".parse().unwrap();
        assert!(matches!(spec.build(&s), Err(Error::InvalidSample(_))));
        assert!("smooth:identity".parse::<ModelSpec>().unwrap().build(&s).is_ok());
    }
}
