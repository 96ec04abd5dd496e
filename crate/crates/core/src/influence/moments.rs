use serde::{Deserialize, Serialize};

use super::{InfluenceModel, SecondOrder, ThirdOrder};
use crate::error::{Error, Result};

/// Moments of the first two influence functions. These are everything the
/// coverage correction needs; the third-order moment is deliberately not
/// part of this type.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct SecondOrderMoments {
    /// `Ê IF₁²`
    pub kappa2: f64,
    /// `Ê IF₁³`
    pub gamma: f64,
    /// `Ê IF₁⁴`
    pub mu4: f64,
    /// `Ê IF₁(X) IF₁(Z) IF₂(X, Y) IF₂(Y, Z)`
    pub mu2a: f64,
    /// `Ê IF₁(X) IF₁(Y)² IF₂(X, Y)`
    pub mu2b: f64,
    /// `Ê IF₁(X) IF₁(Y) IF₂(X, Y)`
    pub mu2c: f64,
    /// `Ê IF₂(X, X)`
    pub mu2d: f64,
    /// `Ê IF₂(X, Y)²`
    pub mu22: f64,
    /// `Ê IF₁(X) IF₂(X, X)`
    pub mu12d: f64,
}

/// All moments entering the optimal-value expansion.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct MomentSet {
    #[serde(flatten)]
    pub second: SecondOrderMoments,
    /// `Ê IF₁(X) IF₁(Y) IF₁(Z) IF₃(X, Y, Z)`; `None` when the model has no
    /// third-order influence function.
    pub mu3c: Option<f64>,
}

impl MomentSet {
    /// Exact empirical moments of `model`, without the degeneracy check of
    /// [`estimate_moments`].
    pub fn from_model(model: &InfluenceModel) -> Self {
        let n = model.n();
        let nf = n as f64;
        let if1 = model.if1();

        let (mut kappa2, mut gamma, mut mu4) = (0.0, 0.0, 0.0);
        for &v in if1 {
            let v2 = v * v;
            kappa2 += v2;
            gamma += v2 * v;
            mu4 += v2 * v2;
        }

        // v(j) = (1/n) Σᵢ IF₁(i) IF₂(i, j); every IF₂ moment with two IF₁
        // factors contracts through it.
        let mut v = vec![0.0; n];
        model.apply_if2(if1, &mut v);
        let (mut mu2a, mut mu2b, mut mu2c) = (0.0, 0.0, 0.0);
        for (&vj, &fj) in v.iter().zip(if1) {
            mu2a += vj * vj;
            mu2b += vj * fj * fj;
            mu2c += vj * fj;
        }

        let (mut mu2d, mut mu12d) = (0.0, 0.0);
        for (i, &fi) in if1.iter().enumerate() {
            let d = model.if2(i, i);
            mu2d += d;
            mu12d += fi * d;
        }

        let mu22 = match model.if2_repr() {
            SecondOrder::Zero => 0.0,
            SecondOrder::Dense(m) => m.iter().map(|x| x * x).sum::<f64>() / (nf * nf),
            SecondOrder::Factored { rank, factors, weights } => {
                // tr(W S W S) with S = (1/n) Σ fᵢ fᵢᵀ
                let r = *rank;
                let mut s = vec![0.0; r * r];
                for f in factors.chunks_exact(r) {
                    for a in 0..r {
                        for b in 0..r {
                            s[a * r + b] += f[a] * f[b] / nf;
                        }
                    }
                }
                let ws = matmul(weights, &s, r);
                let prod = matmul(&ws, &ws, r);
                (0..r).map(|a| prod[a * r + a]).sum()
            }
            SecondOrder::Kernel(_) => {
                let mut acc = 0.0;
                for i in 0..n {
                    let mut row = 0.0;
                    for j in 0..n {
                        let x = model.if2(i, j);
                        row += x * x;
                    }
                    acc += row;
                }
                acc / (nf * nf)
            }
        };

        let mu3c = match model.if3_repr() {
            ThirdOrder::Absent => None,
            ThirdOrder::Zero => Some(0.0),
            ThirdOrder::Dense(t) => {
                let mut acc = 0.0;
                for i in 0..n {
                    for j in 0..n {
                        let row = &t[(i * n + j) * n..(i * n + j + 1) * n];
                        acc += if1[i] * if1[j] * super::dot(row, if1);
                    }
                }
                Some(acc / (nf * nf * nf))
            }
            ThirdOrder::Factored { dim, factors, tensor } => {
                let d = *dim;
                let mut u = vec![0.0; d];
                for (f, &fi) in factors.chunks_exact(d).zip(if1) {
                    for (acc, fa) in u.iter_mut().zip(f) {
                        *acc += fa * fi / nf;
                    }
                }
                let mut s = 0.0;
                for a in 0..d {
                    for b in 0..d {
                        for c in 0..d {
                            s += tensor[(a * d + b) * d + c] * u[a] * u[b] * u[c];
                        }
                    }
                }
                Some(s)
            }
        };

        MomentSet {
            second: SecondOrderMoments {
                kappa2: kappa2 / nf,
                gamma: gamma / nf,
                mu4: mu4 / nf,
                mu2a: mu2a / nf,
                mu2b: mu2b / nf,
                mu2c: mu2c / nf,
                mu2d: mu2d / nf,
                mu22,
                mu12d: mu12d / nf,
            },
            mu3c,
        }
    }

    /// `mu3c`, or an error when the model has no third-order term.
    pub fn mu3c_strict(&self) -> Result<f64> {
        self.mu3c.ok_or(Error::MissingThirdOrderMoment)
    }
}

/// Empirical influence-function moments of `model`.
///
/// Fails with [`Error::DegenerateVariance`] when `Ê IF₁²` is negligible
/// relative to the squared data scale.
pub fn estimate_moments(model: &InfluenceModel) -> Result<MomentSet> {
    let moments = MomentSet::from_model(model);
    let scale = model.data_scale();
    if !(moments.second.kappa2 >= 1e-12 * scale * scale) {
        return Err(Error::DegenerateVariance);
    }
    Ok(moments)
}

fn matmul(a: &[f64], b: &[f64], r: usize) -> Vec<f64> {
    let mut out = vec![0.0; r * r];
    for i in 0..r {
        for k in 0..r {
            let aik = a[i * r + k];
            for j in 0..r {
                out[i * r + j] += aik * b[k * r + j];
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::influence::{smooth_model, vstat_model, Identity, ProductKernel};
    use crate::Sample;

    #[test]
    fn identity_on_three_points() {
        let s = Sample::from_scalars(vec![-1.0, 0.0, 1.0]).unwrap();
        let m = estimate_moments(&smooth_model(&s, &Identity).unwrap()).unwrap();
        let mo = m.second;
        assert!((mo.kappa2 - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(mo.gamma, 0.0);
        assert!((mo.mu4 - 2.0 / 3.0).abs() < 1e-15);
        for v in [mo.mu2a, mo.mu2b, mo.mu2c, mo.mu2d, mo.mu22, mo.mu12d] {
            assert_eq!(v, 0.0);
        }
        assert_eq!(m.mu3c, Some(0.0));
    }

    #[test]
    fn product_kernel_moments() {
        let s = Sample::from_scalars(vec![1.0, -1.0]).unwrap();
        let m = MomentSet::from_model(&vstat_model(&s, Arc::new(ProductKernel))).second;
        assert_eq!(m.mu2d, 2.0);
        assert_eq!(m.mu22, 4.0);
        assert_eq!((m.mu2a, m.mu2b, m.mu2c), (0.0, 0.0, 0.0));
    }

    #[test]
    fn degenerate_variance() {
        let s = Sample::from_scalars(vec![2.0, 2.0, 2.0]).unwrap();
        let model = smooth_model(&s, &Identity).unwrap();
        assert_eq!(estimate_moments(&model), Err(Error::DegenerateVariance));
    }

    #[test]
    fn strict_third_moment() {
        let m = MomentSet { second: SecondOrderMoments::default(), mu3c: None };
        assert_eq!(m.mu3c_strict(), Err(Error::MissingThirdOrderMoment));
    }
}
