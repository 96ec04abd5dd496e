use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::influence::SmoothFunction;
use crate::Sample;

/// Sign convention for the `t₅` cross term.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum T5Sign {
    /// `(δ−M)(δ−M) − 2(δ−M)(δ−M)`, the corrected form.
    Corrected,
    /// The `+2` variant found in earlier literature.
    PriorLiterature,
}

/// Smooth function of a standardized mean: derivatives of `θ` at the mean
/// and the central moments of the whitened variable (covariance `I`).
#[derive(Debug, Clone, PartialEq)]
pub struct StandardizedModel {
    pub dim: usize,
    /// `θ_j`
    pub grad: Vec<f64>,
    /// `θ_jk`, row-major
    pub hess: Vec<f64>,
    /// `α^{jkl}`, row-major
    pub alpha3: Vec<f64>,
    /// `α^{jklm}`, row-major
    pub alpha4: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TFactors {
    pub t1: f64,
    pub t2: f64,
    pub t3: f64,
    pub t4: f64,
    pub t5: f64,
    /// `(5/3)t₁ − 2t₂ + t₃/2 − t₄ + t₅/4`, which equals `−A(x)/x` under
    /// reverse-KL.
    pub factor: f64,
}

pub fn t_factors(m: &StandardizedModel, sign: T5Sign) -> Result<TFactors> {
    let d = m.dim;
    let norm2: f64 = m.grad.iter().map(|g| g * g).sum();
    if !(norm2 > 0.0) {
        return Err(Error::DegenerateVariance);
    }
    let q = 1.0 / norm2;
    let mm = |i: usize, j: usize| q * m.grad[i] * m.grad[j];
    let nn = |i: usize| q * m.grad[i];
    // P = I − M
    let p = |i: usize, j: usize| if i == j { 1.0 } else { 0.0 } - mm(i, j);
    let a3 = |j: usize, k: usize, l: usize| m.alpha3[(j * d + k) * d + l];
    let a4 = |j: usize, k: usize, l: usize, o: usize| m.alpha4[((j * d + k) * d + l) * d + o];
    let h = |j: usize, k: usize| m.hess[j * d + k];

    let (mut t1, mut t2, mut t3, mut t4, mut t5) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for j in 0..d {
        for k in 0..d {
            for l in 0..d {
                let ajkl = a3(j, k, l);
                for mi in 0..d {
                    t3 += a4(j, k, l, mi) * mm(j, k) * mm(l, mi);
                    for o in 0..d {
                        t4 += ajkl * nn(j) * h(mi, o) * p(mi, k) * p(o, l);
                    }
                    if ajkl == 0.0 {
                        continue;
                    }
                    for nj in 0..d {
                        for o in 0..d {
                            let amno = a3(mi, nj, o);
                            t1 += ajkl * amno * mm(j, mi) * mm(k, nj) * mm(l, o);
                            t2 += ajkl * amno * mm(j, k) * mm(l, mi) * mm(nj, o);
                        }
                    }
                }
            }
        }
    }
    let cross = match sign {
        T5Sign::Corrected => -2.0,
        T5Sign::PriorLiterature => 2.0,
    };
    for j in 0..d {
        for k in 0..d {
            for l in 0..d {
                for mi in 0..d {
                    t5 += q * h(j, k) * h(l, mi) * (p(j, k) * p(l, mi) + cross * p(j, l) * p(k, mi));
                }
            }
        }
    }
    let factor = 5.0 / 3.0 * t1 - 2.0 * t2 + 0.5 * t3 - t4 + 0.25 * t5;
    Ok(TFactors { t1, t2, t3, t4, t5, factor })
}

/// Affine standardization `W = C⁻¹(Z − Z̄)` with `C Cᵀ` the (1/n)
/// covariance of the sample.
#[derive(Debug, Clone)]
pub struct Whitening {
    pub mean: Vec<f64>,
    /// Lower Cholesky factor `C`, row-major.
    pub chol: Vec<f64>,
    /// Whitened rows, row-major `n × d`.
    pub data: Vec<f64>,
}

pub fn whiten(sample: &Sample) -> Result<Whitening> {
    let (n, d) = (sample.len(), sample.dim());
    let mean = sample.mean();
    let mut cov = DMatrix::<f64>::zeros(d, d);
    for row in sample.rows() {
        let c = DVector::from_iterator(d, row.iter().zip(&mean).map(|(x, m)| x - m));
        cov += &c * c.transpose();
    }
    cov /= n as f64;
    let trace = cov.trace();
    let chol = cov.clone().cholesky().ok_or(Error::SingularWhitening)?;
    let l = chol.l();
    if !(trace > 0.0) || l.diagonal().iter().any(|&v| !(v * v > 1e-10 * trace)) {
        return Err(Error::SingularWhitening);
    }
    let mut data = Vec::with_capacity(n * d);
    for row in sample.rows() {
        let c = DVector::from_iterator(d, row.iter().zip(&mean).map(|(x, m)| x - m));
        let w = l.solve_lower_triangular(&c).ok_or(Error::SingularWhitening)?;
        data.extend(w.iter());
    }
    let chol = (0..d).flat_map(|i| (0..d).map(move |j| (i, j))).map(|(i, j)| l[(i, j)]).collect();
    Ok(Whitening { mean, chol, data })
}

/// Standardized description of `f(E Z)` at the empirical distribution of
/// `sample`: `θ(w) = f(Z̄ + C w)`.
pub fn standardize(sample: &Sample, f: &dyn SmoothFunction) -> Result<StandardizedModel> {
    let d = f.dim();
    if sample.dim() != d {
        return Err(Error::InvalidSample(format!("{} expects dimension {d}, sample has {}", f.name(), sample.dim())));
    }
    let w = whiten(sample)?;
    let c = |i: usize, j: usize| w.chol[i * d + j];
    let grad_f = f.gradient(&w.mean);
    let hess_f = f.hessian(&w.mean).ok_or(Error::DerivativeUnavailable { name: f.name().into(), order: 2 })?;

    let mut grad = vec![0.0; d];
    let mut hess = vec![0.0; d * d];
    for j in 0..d {
        grad[j] = (0..d).map(|a| grad_f[a] * c(a, j)).sum();
        for k in 0..d {
            let mut s = 0.0;
            for a in 0..d {
                for b in 0..d {
                    s += hess_f[a * d + b] * c(a, j) * c(b, k);
                }
            }
            hess[j * d + k] = s;
        }
    }

    let n = sample.len() as f64;
    let mut alpha3 = vec![0.0; d * d * d];
    let mut alpha4 = vec![0.0; d * d * d * d];
    for r in w.data.chunks_exact(d) {
        for j in 0..d {
            for k in 0..d {
                let jk = r[j] * r[k];
                for l in 0..d {
                    let jkl = jk * r[l];
                    alpha3[(j * d + k) * d + l] += jkl / n;
                    for o in 0..d {
                        alpha4[((j * d + k) * d + l) * d + o] += jkl * r[o] / n;
                    }
                }
            }
        }
    }
    Ok(StandardizedModel { dim: d, grad, hess, alpha3, alpha4 })
}
