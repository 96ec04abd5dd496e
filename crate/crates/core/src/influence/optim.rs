//! Optimal values of stochastic programs, `ψ(P) = inf_x E_P ℓ(x, ξ)`, with a
//! scalar decision variable.

use super::{InfluenceModel, SecondOrder, ThirdOrder};
use crate::error::{Error, Result};
use crate::Sample;

const MAX_ITER: usize = 200;
const GRADIENT_TOL: f64 = 1e-11;
const HESSIAN_FLOOR: f64 = 1e-10;

/// A loss `ℓ(x, ξ)` with its first two derivatives in the scalar decision `x`.
pub trait Loss: Send + Sync {
    fn name(&self) -> &str;
    /// Dimension of an observation `ξ`.
    fn dim(&self) -> usize;
    fn value(&self, x: f64, xi: &[f64]) -> f64;
    fn dx(&self, x: f64, xi: &[f64]) -> f64;
    fn dxx(&self, x: f64, xi: &[f64]) -> f64;
}

/// `ℓ(x, (y, z)) = (y − x z)²`
#[derive(Debug, Clone, Copy, Default)]
pub struct LeastSquaresLoss;

impl Loss for LeastSquaresLoss {
    fn name(&self) -> &str {
        "lsq-loss"
    }
    fn dim(&self) -> usize {
        2
    }
    fn value(&self, x: f64, xi: &[f64]) -> f64 {
        let r = xi[0] - x * xi[1];
        r * r
    }
    fn dx(&self, x: f64, xi: &[f64]) -> f64 {
        -2.0 * xi[1] * (xi[0] - x * xi[1])
    }
    fn dxx(&self, _: f64, xi: &[f64]) -> f64 {
        2.0 * xi[1] * xi[1]
    }
}

/// `ℓ(x, ξ) = (x − ξ)²`
#[derive(Debug, Clone, Copy, Default)]
pub struct SquaredErrorLoss;

impl Loss for SquaredErrorLoss {
    fn name(&self) -> &str {
        "sq-loss"
    }
    fn dim(&self) -> usize {
        1
    }
    fn value(&self, x: f64, xi: &[f64]) -> f64 {
        (x - xi[0]) * (x - xi[0])
    }
    fn dx(&self, x: f64, xi: &[f64]) -> f64 {
        2.0 * (x - xi[0])
    }
    fn dxx(&self, _: f64, _: &[f64]) -> f64 {
        2.0
    }
}

fn mean_over(sample: &Sample, f: impl Fn(&[f64]) -> f64) -> f64 {
    sample.rows().map(f).sum::<f64>() / sample.len() as f64
}

/// Minimizes `Ê ℓ(x, ξ)` over scalar `x`: Newton on `Ê ℓ_x = 0`, kept inside
/// a sign-change bracket and falling back to bisection when a step leaves it.
pub fn minimize_mean_loss(sample: &Sample, loss: &dyn Loss) -> Result<f64> {
    let grad = |x: f64| mean_over(sample, |xi| loss.dx(x, xi));
    let curv = |x: f64| mean_over(sample, |xi| loss.dxx(x, xi));
    // gradient terms can be large; judge convergence relative to their size
    let grad_scale = |x: f64| mean_over(sample, |xi| loss.dx(x, xi).abs()).max(1.0);

    // Bracket by doubling outward from 0.
    let x0 = 0.0;
    let g0 = grad(x0);
    if g0 == 0.0 {
        return Ok(x0);
    }
    let dir = if g0 > 0.0 { -1.0 } else { 1.0 };
    let mut step = 1.0;
    let mut far = x0 + dir * step;
    let mut iters = 0;
    while grad(far).signum() == g0.signum() {
        step *= 2.0;
        far = x0 + dir * step;
        iters += 1;
        if iters > 100 || !far.is_finite() {
            return Err(Error::MinimizerNotFound { gradient: g0 });
        }
    }
    let (mut lo, mut hi) = if dir > 0.0 { (x0, far) } else { (far, x0) };

    let mut x = 0.5 * (lo + hi);
    for _ in 0..MAX_ITER {
        let g = grad(x);
        if g.abs() <= GRADIENT_TOL * grad_scale(x) {
            // one more Newton step usually lands on the rounding floor
            let c = curv(x);
            if c > 0.0 {
                let polished = x - g / c;
                if grad(polished).abs() < g.abs() {
                    return Ok(polished);
                }
            }
            return Ok(x);
        }
        if g < 0.0 {
            lo = x;
        } else {
            hi = x;
        }
        let c = curv(x);
        let newton = x - g / c;
        x = if c > 0.0 && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
        if hi - lo <= f64::EPSILON * x.abs().max(1.0) {
            break;
        }
    }
    let g = grad(x);
    if g.abs() <= GRADIENT_TOL * grad_scale(x) {
        Ok(x)
    } else {
        Err(Error::MinimizerNotFound { gradient: g })
    }
}

/// Influence functions of the optimal value at the empirical minimizer `x*`:
/// `IF₁(ξ) = ℓ(x*, ξ) − Ê ℓ(x*, ·)` and
/// `IF₂(ξ₁, ξ₂) = −2 ℓ_x(x*, ξ₁) ℓ_x(x*, ξ₂) / Ê ℓ_xx(x*, ·)`.
///
/// No third-order influence function is provided for this class.
pub fn optim_model(sample: &Sample, loss: &dyn Loss) -> Result<InfluenceModel> {
    if sample.dim() != loss.dim() {
        return Err(Error::InvalidSample(format!(
            "`{}` needs {} column(s), sample has {}",
            loss.name(),
            loss.dim(),
            sample.dim()
        )));
    }
    let x_star = minimize_mean_loss(sample, loss)?;
    let curvature = mean_over(sample, |xi| loss.dxx(x_star, xi));
    if curvature <= HESSIAN_FLOOR {
        return Err(Error::SingularHessian(curvature));
    }
    let values: Vec<f64> = sample.rows().map(|xi| loss.value(x_star, xi)).collect();
    let psi_hat = values.iter().sum::<f64>() / values.len() as f64;
    let if1 = values.iter().map(|v| v - psi_hat).collect();
    let slopes: Vec<f64> = sample.rows().map(|xi| loss.dx(x_star, xi)).collect();
    // −ℓ_x ℓ_x / Ê ℓ_xx: the second Gateaux derivative along δ − P̂ (envelope
    // theorem plus the first-order change of the minimizer).
    let if2 = SecondOrder::Factored { rank: 1, factors: slopes, weights: vec![-1.0 / curvature] };
    Ok(InfluenceModel::from_parts(psi_hat, if1, if2, ThirdOrder::Absent, sample.scale()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn least_squares_slope() {
        let rows = vec![vec![1.0, 0.5], vec![2.1, 1.9], vec![-0.3, -0.4], vec![3.2, 2.8], vec![0.9, 1.1]];
        let s = Sample::from_rows(&rows).unwrap();
        let x = minimize_mean_loss(&s, &LeastSquaresLoss).unwrap();
        let want = rows.iter().map(|r| r[0] * r[1]).sum::<f64>() / rows.iter().map(|r| r[1] * r[1]).sum::<f64>();
        assert!((x - want).abs() < 1e-9, "{x} vs {want}");
        let m = optim_model(&s, &LeastSquaresLoss).unwrap();
        assert!(!m.has_if3());
        assert!(m.canonical_defect() < 1e-9);
    }

    #[test]
    fn squared_error_gives_variance() {
        let xs = vec![1.0, 4.0, 2.5, -0.5, 3.0];
        let s = Sample::from_scalars(xs.clone()).unwrap();
        let m = optim_model(&s, &SquaredErrorLoss).unwrap();
        let mean = xs.iter().sum::<f64>() / 5.0;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / 5.0;
        assert!((m.psi_hat() - var).abs() < 1e-12);
        for i in 0..5 {
            for j in 0..5 {
                // second-order influence function of the variance
                let want = -2.0 * (mean - xs[i]) * (mean - xs[j]);
                assert!((m.if2(i, j) - want).abs() < 1e-10, "{i} {j}: {} vs {want}", m.if2(i, j));
            }
        }
    }

    #[test]
    fn flat_loss_is_singular() {
        let s = Sample::from_rows(&[vec![1.0, 0.0], vec![2.0, 0.0], vec![3.0, 0.0]]).unwrap();
        assert!(matches!(optim_model(&s, &LeastSquaresLoss), Err(Error::SingularHessian(_))));
    }
}
