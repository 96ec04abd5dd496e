use serde::{Deserialize, Serialize};

use super::solver::{solve_dro_with, SolverOptions};
use super::Direction;
use crate::divergence::Divergence;
use crate::error::{Error, Result};
use crate::influence::InfluenceModel;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProfileOptions {
    /// Largest ball size searched.
    pub q_cap: f64,
    /// Absolute tolerance on the returned `q / (2n)`.
    pub tol: f64,
    pub solver: SolverOptions,
}

impl Default for ProfileOptions {
    fn default() -> Self {
        Self { q_cap: 50.0, tol: 1e-10, solver: SolverOptions::default() }
    }
}

/// Profile divergence `min { D_φ(P ‖ P̂) : ψ(P) = ψ₁ }`, found as the
/// smallest ball whose robust interval reaches `psi_target`, returned on the
/// `q / (2n)` scale.
pub fn el_profile(model: &InfluenceModel, phi: &Divergence, psi_target: f64, opts: &ProfileOptions) -> Result<f64> {
    let psi_hat = model.psi_hat();
    if psi_target == psi_hat {
        return Ok(0.0);
    }
    let n = model.n() as f64;
    let direction = if psi_target > psi_hat { Direction::Max } else { Direction::Min };
    let sign = direction.sign();
    // The endpoint is close to linear in √q; search on that scale.
    let gap = |s: f64| -> Result<f64> {
        match solve_dro_with(model, phi, s * s, direction, &opts.solver) {
            Ok(sol) => Ok(sign * (sol.objective - psi_target)),
            Err(Error::InfeasibleBall(_)) => Ok(f64::INFINITY),
            Err(e) => Err(e),
        }
    };

    let unreachable = || Error::TargetUnreachable { target: psi_target, q_cap: opts.q_cap };
    let (mut lo, mut f_lo) = (0.0f64, sign * (psi_hat - psi_target));
    let mut hi = opts.q_cap.sqrt();
    let mut f_hi = gap(hi)?;
    if f_hi < 0.0 {
        return Err(unreachable());
    }

    // Illinois variant of regula falsi, falling back to bisection for
    // infinite values.
    let s_tol = opts.tol * 2.0 * n;
    let mut side = 0i8;
    for _ in 0..200 {
        let mid = if f_hi.is_finite() {
            let m = (lo * f_hi - hi * f_lo) / (f_hi - f_lo);
            if m > lo && m < hi {
                m
            } else {
                0.5 * (lo + hi)
            }
        } else {
            0.5 * (lo + hi)
        };
        let f_mid = gap(mid)?;
        if f_mid == 0.0 {
            lo = mid;
            hi = mid;
            break;
        }
        if f_mid < 0.0 {
            lo = mid;
            f_lo = f_mid;
            if side == -1 && f_hi.is_finite() {
                f_hi *= 0.5;
            }
            side = -1;
        } else {
            hi = mid;
            f_hi = f_mid;
            if side == 1 {
                f_lo *= 0.5;
            }
            side = 1;
        }
        // tolerance on q = s²
        if (hi * hi - lo * lo) <= s_tol {
            break;
        }
    }
    if !f_hi.is_finite() {
        return Err(unreachable());
    }
    let s = 0.5 * (lo + hi);
    Ok(s * s / (2.0 * n))
}
