use serde::{Deserialize, Serialize};

use super::quantile::chi2_quantile_1df;
use crate::divergence::Divergence;
use crate::error::{Error, Result};
use crate::influence::SecondOrderMoments;

/// Coefficients of the odd polynomial `A(x) = a₁x + a₃x³ + a₅x⁵` in the
/// `n⁻¹` term of the coverage probability.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoveragePolynomial {
    pub a1: f64,
    pub a3: f64,
    pub a5: f64,
}

impl CoveragePolynomial {
    pub fn new(phi: &Divergence, m: &SecondOrderMoments) -> Self {
        let (d2, d3, d4) = (phi.d2(), phi.d3(), phi.d4());
        let SecondOrderMoments { kappa2: k, gamma: g, mu4, mu2a, mu2b, mu2c, mu2d, mu22, mu12d } = *m;
        let k3 = k * k * k;
        let s = 2.0 * d2 + d3;

        let a5 = -(s * s * g * g) / (36.0 * d2 * d2 * k3);
        let bracket3 = 4.0 * (d2 + d3) * s * g * g
            + 3.0 * (-2.0 * d2 * d2 - 4.0 * d2 * d3 - 3.0 * d3 * d3 + d2 * d4) * k * mu4
            + 9.0 * s * s * k3
            + 6.0 * d2 * s * g * mu2c
            - 6.0 * d2 * s * g * k * mu2d;
        let a3 = -bracket3 / (36.0 * d2 * d2 * k3);
        let bracket1 = -12.0 * g * g + 18.0 * k * mu4 + 36.0 * k * (mu2a + 2.0 * mu2b)
            - 36.0 * g * mu2c
            - 9.0 * mu2c * mu2c
            - 18.0 * k * mu2c * mu2d
            + 9.0 * k * k * (-2.0 * mu22 + mu2d * mu2d - 4.0 * mu12d);
        let a1 = -bracket1 / (36.0 * k3);
        Self { a1, a3, a5 }
    }

    pub fn eval(&self, x: f64) -> f64 {
        let x2 = x * x;
        x * (self.a1 + x2 * (self.a3 + x2 * self.a5))
    }
}

/// `A(x)` for divergence `phi` and the given influence moments.
pub fn a_eval(x: f64, phi: &Divergence, moments: &SecondOrderMoments) -> f64 {
    CoveragePolynomial::new(phi, moments).eval(x)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorrectedQ {
    pub q: f64,
    /// The correction would have made `q` nonpositive; `q` was floored at a
    /// tenth of the uncorrected value.
    pub clamped: bool,
}

/// Ball size with the `n⁻¹` coverage error removed:
/// `φ''(1) χ² (1 − A(√χ²) / (n √χ²))`.
pub fn corrected_q(nominal: f64, phi: &Divergence, moments: &SecondOrderMoments, n: usize) -> Result<CorrectedQ> {
    if n < 2 {
        return Err(Error::DomainError(format!("sample size {n} is below 2")));
    }
    if !(moments.kappa2 > 0.0) {
        return Err(Error::DegenerateVariance);
    }
    let chi2 = chi2_quantile_1df(nominal)?;
    let x = chi2.sqrt();
    let factor = 1.0 - a_eval(x, phi, moments) / (n as f64 * x);
    Ok(scaled(phi.d2() * chi2, factor))
}

pub(crate) fn scaled(q0: f64, factor: f64) -> CorrectedQ {
    let q = q0 * factor;
    if q.is_finite() && q > 0.1 * q0 {
        CorrectedQ { q, clamped: false }
    } else {
        CorrectedQ { q: 0.1 * q0, clamped: true }
    }
}
