use serde::{Deserialize, Serialize};

use super::Direction;
use crate::divergence::Divergence;
use crate::error::{Error, Result};
use crate::influence::MomentSet;

/// Coefficients of the optimal-value expansion in powers of `√(q / (n φ''(1)))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExpansionCoefficients {
    pub c1: f64,
    pub c2: f64,
    /// `None` when the third-order moment is unavailable.
    pub c3: Option<f64>,
}

/// Computes `c₁, c₂, c₃` from the influence moments.
///
/// In strict mode a missing `mu3c` is an error; otherwise `c₃` is `None`.
pub fn expansion_coefficients(moments: &MomentSet, phi: &Divergence, strict: bool) -> Result<ExpansionCoefficients> {
    let m = &moments.second;
    let k = m.kappa2;
    if !(k > 0.0) || !k.is_finite() {
        return Err(Error::DegenerateVariance);
    }
    let (d2, d3, d4) = (phi.d2(), phi.d3(), phi.d4());
    let r = d3 / d2;

    let c1 = k.sqrt();
    let c2 = (-r * m.gamma / 6.0 + m.mu2c / 2.0) / k;
    let c3 = match moments.mu3c {
        Some(mu3c) => {
            let bracket = mu3c / 6.0 - r / 2.0 * m.mu2b
                + r / (3.0 * k) * m.gamma * m.mu2c
                + (r * r / 8.0 - d4 / (24.0 * d2)) * m.mu4
                + m.mu2a / 2.0
                - r * r * m.gamma * m.gamma / (18.0 * k)
                - r * r * k * k / 8.0
                - m.mu2c * m.mu2c / (2.0 * k);
            Some(bracket / (k * k.sqrt()))
        }
        None if strict => return Err(Error::MissingThirdOrderMoment),
        None => None,
    };
    Ok(ExpansionCoefficients { c1, c2, c3 })
}

/// `ψ̂ ± c₁ s + c₂ s² ± c₃ s³` with `s = √(q / (n φ''(1)))`; the odd terms
/// flip sign for the minimization. A missing `c₃` contributes nothing.
pub fn dro_value_expansion(
    direction: Direction,
    psi_hat: f64,
    coeffs: &ExpansionCoefficients,
    phi: &Divergence,
    q: f64,
    n: usize,
) -> f64 {
    let s = (q / (n as f64 * phi.d2())).sqrt();
    let sign = direction.sign();
    psi_hat + sign * coeffs.c1 * s + coeffs.c2 * s * s + sign * coeffs.c3.unwrap_or(0.0) * s * s * s
}
