//! Smooth functions of the mean, `ψ(P) = f(E_P Z)`.

use super::{InfluenceModel, SecondOrder, ThirdOrder};
use crate::error::{Error, Result};
use crate::Sample;

/// A function of the mean vector with partial derivatives up to order 3.
///
/// Hessians are row-major `d × d`, third derivatives row-major `d × d × d`.
pub trait SmoothFunction: Send + Sync {
    fn name(&self) -> &str;
    fn dim(&self) -> usize;
    fn value(&self, z: &[f64]) -> f64;
    fn gradient(&self, z: &[f64]) -> Vec<f64>;
    fn hessian(&self, z: &[f64]) -> Option<Vec<f64>>;
    fn third(&self, z: &[f64]) -> Option<Vec<f64>>;
}

/// `f(z) = z`
#[derive(Debug, Clone, Copy, Default)]
pub struct Identity;

impl SmoothFunction for Identity {
    fn name(&self) -> &str {
        "identity"
    }
    fn dim(&self) -> usize {
        1
    }
    fn value(&self, z: &[f64]) -> f64 {
        z[0]
    }
    fn gradient(&self, _: &[f64]) -> Vec<f64> {
        vec![1.0]
    }
    fn hessian(&self, _: &[f64]) -> Option<Vec<f64>> {
        Some(vec![0.0])
    }
    fn third(&self, _: &[f64]) -> Option<Vec<f64>> {
        Some(vec![0.0])
    }
}

/// `f(z) = z²`
#[derive(Debug, Clone, Copy, Default)]
pub struct Square;

impl SmoothFunction for Square {
    fn name(&self) -> &str {
        "z^2"
    }
    fn dim(&self) -> usize {
        1
    }
    fn value(&self, z: &[f64]) -> f64 {
        z[0] * z[0]
    }
    fn gradient(&self, z: &[f64]) -> Vec<f64> {
        vec![2.0 * z[0]]
    }
    fn hessian(&self, _: &[f64]) -> Option<Vec<f64>> {
        Some(vec![2.0])
    }
    fn third(&self, _: &[f64]) -> Option<Vec<f64>> {
        Some(vec![0.0])
    }
}

/// `f(x, y) = x + y²`
#[derive(Debug, Clone, Copy, Default)]
pub struct LinearPlusSquare;

impl SmoothFunction for LinearPlusSquare {
    fn name(&self) -> &str {
        "x+y^2"
    }
    fn dim(&self) -> usize {
        2
    }
    fn value(&self, z: &[f64]) -> f64 {
        z[0] + z[1] * z[1]
    }
    fn gradient(&self, z: &[f64]) -> Vec<f64> {
        vec![1.0, 2.0 * z[1]]
    }
    fn hessian(&self, _: &[f64]) -> Option<Vec<f64>> {
        Some(vec![0.0, 0.0, 0.0, 2.0])
    }
    fn third(&self, _: &[f64]) -> Option<Vec<f64>> {
        Some(vec![0.0; 8])
    }
}

/// Influence functions of `f(Ê Z)`:
/// `IF_k(Z⁽¹⁾…Z⁽ᵏ⁾) = Σ f_{i₁…iₖ}(ÊZ) ∏ⱼ (Z⁽ʲ⁾_{iⱼ} − ÊZ_{iⱼ})`.
///
/// The centered products have zero empirical marginals, so no further
/// canonicalization is applied.
pub fn smooth_model(sample: &Sample, f: &dyn SmoothFunction) -> Result<InfluenceModel> {
    let d = f.dim();
    if sample.dim() != d {
        return Err(Error::InvalidSample(format!(
            "`{}` needs {d} column(s), sample has {}",
            f.name(),
            sample.dim()
        )));
    }
    let mean = sample.mean();
    let unavailable = |order| Error::DerivativeUnavailable { name: f.name().to_string(), order };
    let grad = f.gradient(&mean);
    let hess = f.hessian(&mean).ok_or_else(|| unavailable(2))?;
    let third = f.third(&mean).ok_or_else(|| unavailable(3))?;

    let mut centered = Vec::with_capacity(sample.len() * d);
    for row in sample.rows() {
        centered.extend(row.iter().zip(&mean).map(|(x, m)| x - m));
    }
    let if1 = centered.chunks_exact(d).map(|c| super::dot(c, &grad)).collect();

    let if2 = if hess.iter().all(|&v| v == 0.0) {
        SecondOrder::Zero
    } else {
        SecondOrder::Factored { rank: d, factors: centered.clone(), weights: hess }
    };
    let if3 = if third.iter().all(|&v| v == 0.0) {
        ThirdOrder::Zero
    } else {
        ThirdOrder::Factored { dim: d, factors: centered, tensor: third }
    };
    Ok(InfluenceModel::from_parts(f.value(&mean), if1, if2, if3, sample.scale()))
}
