//! Degree-2 V-statistics, `ψ(P) = E h(X₁, X₂)` with `X₁, X₂` i.i.d. from `P`.

use std::sync::Arc;

use super::{canonicalize, InfluenceModel, LazyKernel, SecondOrder, ThirdOrder};
use crate::Sample;

/// Above this sample size the second-order influence function is evaluated
/// from the kernel on demand rather than stored as an `n × n` matrix.
pub const DENSE_KERNEL_LIMIT: usize = 2048;

pub trait Kernel: Send + Sync {
    fn name(&self) -> &str;
    fn dim(&self) -> usize;
    fn eval(&self, x: &[f64], y: &[f64]) -> f64;

    /// Whether `eval(x, y) == eval(y, x)` for all inputs.
    fn is_symmetric(&self) -> bool {
        false
    }

    /// Symmetrized kernel `(h(x, y) + h(y, x)) / 2`.
    fn eval_sym(&self, x: &[f64], y: &[f64]) -> f64 {
        if self.is_symmetric() {
            self.eval(x, y)
        } else {
            0.5 * (self.eval(x, y) + self.eval(y, x))
        }
    }
}

/// `h(x, y) = x·y`
#[derive(Debug, Clone, Copy, Default)]
pub struct ProductKernel;

impl Kernel for ProductKernel {
    fn name(&self) -> &str {
        "product"
    }
    fn dim(&self) -> usize {
        1
    }
    fn eval(&self, x: &[f64], y: &[f64]) -> f64 {
        x[0] * y[0]
    }
    fn is_symmetric(&self) -> bool {
        true
    }
}

/// `h(x, y) = min{12, (x − y)² + x + y}`
#[derive(Debug, Clone, Copy, Default)]
pub struct GammaKernel;

impl Kernel for GammaKernel {
    fn name(&self) -> &str {
        "gamma-kernel"
    }
    fn dim(&self) -> usize {
        1
    }
    fn eval(&self, x: &[f64], y: &[f64]) -> f64 {
        let (x, y) = (x[0], y[0]);
        ((x - y) * (x - y) + x + y).min(12.0)
    }
    fn is_symmetric(&self) -> bool {
        true
    }
}

/// `h(x, y) = sin(x² + y)`, used through its symmetrization.
#[derive(Debug, Clone, Copy, Default)]
pub struct SinKernel;

impl Kernel for SinKernel {
    fn name(&self) -> &str {
        "sin-kernel"
    }
    fn dim(&self) -> usize {
        1
    }
    fn eval(&self, x: &[f64], y: &[f64]) -> f64 {
        (x[0] * x[0] + y[0]).sin()
    }
}

/// Canonical influence functions of the V-statistic with kernel `h`.
///
/// The raw functions `IF₁(x) = 2 Ê h(x, X)` and `IF₂(x, y) = 2 h(x, y)` are
/// projected onto canonical form; the third-order term of a degree-2 kernel
/// vanishes after projection.
///
/// # Panics
///
/// If the sample dimension does not match the kernel.
pub fn vstat_model(sample: &Sample, kernel: Arc<dyn Kernel>) -> InfluenceModel {
    assert_eq!(sample.dim(), kernel.dim(), "kernel `{}` dimension mismatch", kernel.name());
    let n = sample.len();
    if n > DENSE_KERNEL_LIMIT {
        return vstat_model_lazy(sample, kernel);
    }
    let mut h = vec![0.0; n * n];
    for i in 0..n {
        for j in i..n {
            let v = kernel.eval_sym(sample.row(i), sample.row(j));
            h[i * n + j] = v;
            h[j * n + i] = v;
        }
    }
    let psi_hat = h.iter().sum::<f64>() / (n * n) as f64;
    let row_means: Vec<f64> = h.chunks_exact(n).map(|r| r.iter().sum::<f64>() / n as f64).collect();
    let if1 = canonicalize(1, n, |i| 2.0 * row_means[i[0]]).into_values();
    let if2 = canonicalize(2, n, |ij| 2.0 * h[ij[0] * n + ij[1]]).into_values();
    InfluenceModel::from_parts(psi_hat, if1, SecondOrder::Dense(if2), ThirdOrder::Zero, sample.scale())
}

// Large-n variant: one O(n²) pass for the row means, nothing stored.
pub(crate) fn vstat_model_lazy(sample: &Sample, kernel: Arc<dyn Kernel>) -> InfluenceModel {
    let n = sample.len();
    let mut row_means = vec![0.0; n];
    for i in 0..n {
        let xi = sample.row(i);
        row_means[i] = (0..n).map(|j| kernel.eval_sym(xi, sample.row(j))).sum::<f64>() / n as f64;
    }
    let psi_hat = row_means.iter().sum::<f64>() / n as f64;
    let if1 = row_means.iter().map(|g| 2.0 * (g - psi_hat)).collect();
    let lazy = LazyKernel { kernel, sample: sample.clone(), row_means, psi_hat };
    InfluenceModel::from_parts(psi_hat, if1, SecondOrder::Kernel(lazy), ThirdOrder::Zero, sample.scale())
}
