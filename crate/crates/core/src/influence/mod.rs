//! Statistical functionals presented through canonical influence functions
//! at the empirical measure.
//!
//! A model stores `ψ(P̂)` and `IF₁, IF₂, IF₃` evaluated on the sample. The
//! second- and third-order functions are kept in whichever representation
//! the model class produces naturally (dense, low-rank factored, or computed
//! lazily from a kernel), since the solver only ever needs them through the
//! contractions in [`InfluenceModel::gradient`] and [`InfluenceModel::objective`].

mod canonical;
mod moments;
mod optim;
mod registry;
mod smooth;
mod vstat;

use std::sync::Arc;

pub use canonical::{canonicalize, CanonicalTensor};
pub use moments::{estimate_moments, MomentSet, SecondOrderMoments};
pub use optim::{minimize_mean_loss, optim_model, LeastSquaresLoss, Loss, SquaredErrorLoss};
pub use registry::{ModelClass, ModelSpec};
pub use smooth::{smooth_model, Identity, LinearPlusSquare, SmoothFunction, Square};
pub use vstat::{vstat_model, GammaKernel, Kernel, ProductKernel, SinKernel, DENSE_KERNEL_LIMIT};

/// Second-order influence function `IF₂(Xᵢ, Xⱼ; P̂)`.
#[derive(Clone)]
pub enum SecondOrder {
    Zero,
    /// Row-major `n × n` matrix.
    Dense(Vec<f64>),
    /// `IF₂(i, j) = fᵢᵀ W fⱼ` with `fᵢ ∈ ℝʳ` and symmetric `W`.
    Factored { rank: usize, factors: Vec<f64>, weights: Vec<f64> },
    /// Canonical degree-2 V-statistic kernel evaluated on demand:
    /// `IF₂(i, j) = 2(h(Xᵢ, Xⱼ) − gᵢ − gⱼ + ψ̂)`.
    Kernel(LazyKernel),
}

#[derive(Clone)]
pub struct LazyKernel {
    kernel: Arc<dyn Kernel>,
    sample: crate::Sample,
    row_means: Vec<f64>,
    psi_hat: f64,
}

impl LazyKernel {
    fn get(&self, i: usize, j: usize) -> f64 {
        let h = self.kernel.eval_sym(self.sample.row(i), self.sample.row(j));
        2.0 * (h - self.row_means[i] - self.row_means[j] + self.psi_hat)
    }
}

/// Third-order influence function `IF₃(Xᵢ, Xⱼ, Xₖ; P̂)`.
#[derive(Clone)]
pub enum ThirdOrder {
    /// The model class provides no third-order term.
    Absent,
    Zero,
    /// Row-major `n × n × n` array.
    Dense(Vec<f64>),
    /// `IF₃(i, j, k) = Σ T_abc f_ia f_jb f_kc`.
    Factored { dim: usize, factors: Vec<f64>, tensor: Vec<f64> },
}

/// A functional evaluated through its influence functions at `P̂`.
#[derive(Clone)]
pub struct InfluenceModel {
    psi_hat: f64,
    if1: Vec<f64>,
    if2: SecondOrder,
    if3: ThirdOrder,
    data_scale: f64,
}

impl std::fmt::Debug for InfluenceModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("InfluenceModel")
            .field("n", &self.n())
            .field("psi_hat", &self.psi_hat)
            .field("has_if3", &self.has_if3())
            .finish_non_exhaustive()
    }
}

impl InfluenceModel {
    /// Assembles a model from precomputed pieces. The caller is responsible
    /// for supplying canonical influence functions.
    pub fn from_parts(psi_hat: f64, if1: Vec<f64>, if2: SecondOrder, if3: ThirdOrder, data_scale: f64) -> Self {
        Self { psi_hat, if1, if2, if3, data_scale }
    }

    pub fn n(&self) -> usize {
        self.if1.len()
    }

    pub fn psi_hat(&self) -> f64 {
        self.psi_hat
    }

    pub fn if1(&self) -> &[f64] {
        &self.if1
    }

    pub fn if2_repr(&self) -> &SecondOrder {
        &self.if2
    }

    pub fn if3_repr(&self) -> &ThirdOrder {
        &self.if3
    }

    pub fn has_if3(&self) -> bool {
        !matches!(self.if3, ThirdOrder::Absent)
    }

    pub fn data_scale(&self) -> f64 {
        self.data_scale
    }

    pub fn if2(&self, i: usize, j: usize) -> f64 {
        let n = self.n();
        match &self.if2 {
            SecondOrder::Zero => 0.0,
            SecondOrder::Dense(m) => m[i * n + j],
            SecondOrder::Factored { rank, factors, weights } => {
                let fi = &factors[i * rank..(i + 1) * rank];
                let fj = &factors[j * rank..(j + 1) * rank];
                bilinear(fi, weights, fj)
            }
            SecondOrder::Kernel(k) => k.get(i, j),
        }
    }

    /// `IF₃(i, j, k)`, or `None` for models without a third-order term.
    pub fn if3(&self, i: usize, j: usize, k: usize) -> Option<f64> {
        let n = self.n();
        match &self.if3 {
            ThirdOrder::Absent => None,
            ThirdOrder::Zero => Some(0.0),
            ThirdOrder::Dense(t) => Some(t[(i * n + j) * n + k]),
            ThirdOrder::Factored { dim, factors, tensor } => {
                let d = *dim;
                let (fi, fj, fk) = (&factors[i * d..(i + 1) * d], &factors[j * d..(j + 1) * d], &factors[k * d..(k + 1) * d]);
                let mut s = 0.0;
                for a in 0..d {
                    for b in 0..d {
                        for c in 0..d {
                            s += tensor[(a * d + b) * d + c] * fi[a] * fj[b] * fk[c];
                        }
                    }
                }
                Some(s)
            }
        }
    }

    /// `out[i] = (1/n) Σⱼ IF₂(i, j) v[j]`.
    pub fn apply_if2(&self, v: &[f64], out: &mut [f64]) {
        let n = self.n();
        let inv_n = 1.0 / n as f64;
        match &self.if2 {
            SecondOrder::Zero => out.iter_mut().for_each(|o| *o = 0.0),
            SecondOrder::Dense(m) => {
                for (o, row) in out.iter_mut().zip(m.chunks_exact(n)) {
                    *o = dot(row, v) * inv_n;
                }
            }
            SecondOrder::Factored { rank, factors, weights } => {
                let r = *rank;
                let mut s = vec![0.0; r];
                for (f, &vj) in factors.chunks_exact(r).zip(v) {
                    for (acc, fa) in s.iter_mut().zip(f) {
                        *acc += fa * vj;
                    }
                }
                let ws: Vec<f64> = (0..r).map(|a| dot(&weights[a * r..(a + 1) * r], &s) * inv_n).collect();
                for (o, f) in out.iter_mut().zip(factors.chunks_exact(r)) {
                    *o = dot(f, &ws);
                }
            }
            SecondOrder::Kernel(k) => {
                let sum_v: f64 = v.iter().sum();
                let gv = dot(&k.row_means, v);
                for (i, o) in out.iter_mut().enumerate() {
                    let xi = k.sample.row(i);
                    let hv: f64 = (0..n).map(|j| k.kernel.eval_sym(xi, k.sample.row(j)) * v[j]).sum();
                    *o = 2.0 * (hv - (k.row_means[i] - k.psi_hat) * sum_v - gv) * inv_n;
                }
            }
        }
    }

    /// `out[i] = (1/(2n²)) Σⱼₖ IF₃(i, j, k) v[j] v[k]`. Zero when the model has
    /// no third-order term.
    pub fn apply_if3(&self, v: &[f64], out: &mut [f64]) {
        let n = self.n();
        match &self.if3 {
            ThirdOrder::Absent | ThirdOrder::Zero => out.iter_mut().for_each(|o| *o = 0.0),
            ThirdOrder::Dense(t) => {
                let scale = 0.5 / (n * n) as f64;
                for (i, o) in out.iter_mut().enumerate() {
                    let mut s = 0.0;
                    for j in 0..n {
                        let row = &t[(i * n + j) * n..(i * n + j + 1) * n];
                        s += v[j] * dot(row, v);
                    }
                    *o = s * scale;
                }
            }
            ThirdOrder::Factored { dim, factors, tensor } => {
                let d = *dim;
                let inv_n = 1.0 / n as f64;
                let mut w = vec![0.0; d];
                for (f, &vj) in factors.chunks_exact(d).zip(v) {
                    for (acc, fa) in w.iter_mut().zip(f) {
                        *acc += fa * vj * inv_n;
                    }
                }
                // c_a = ½ Σ_bc T_abc w_b w_c
                let c: Vec<f64> = (0..d)
                    .map(|a| {
                        let mut s = 0.0;
                        for b in 0..d {
                            for cc in 0..d {
                                s += tensor[(a * d + b) * d + cc] * w[b] * w[cc];
                            }
                        }
                        0.5 * s
                    })
                    .collect();
                for (o, f) in out.iter_mut().zip(factors.chunks_exact(d)) {
                    *o = dot(f, &c);
                }
            }
        }
    }

    /// Gradient `Dᵢ = n ∂ψ(P̂L)/∂Lᵢ` of the truncated expansion at
    /// `L = 1 + delta`. Also returns the two contraction vectors so the
    /// caller can evaluate the objective without recomputing them.
    pub fn gradient(&self, delta: &[f64], grad: &mut [f64], scratch: &mut Workspace) {
        self.apply_if2(delta, &mut scratch.second);
        self.apply_if3(delta, &mut scratch.third);
        for (i, g) in grad.iter_mut().enumerate() {
            *g = self.if1[i] + scratch.second[i] + scratch.third[i];
        }
    }

    /// Row-major `∂Dᵢ/∂δₘ = (1/n) IF₂(i, m) + (1/n²) Σₖ IF₃(i, m, k) δₖ`.
    pub fn gradient_jacobian(&self, delta: &[f64]) -> Vec<f64> {
        let n = self.n();
        let inv_n = 1.0 / n as f64;
        let mut jac = vec![0.0; n * n];
        for i in 0..n {
            for m in 0..n {
                jac[i * n + m] = self.if2(i, m) * inv_n;
            }
        }
        match &self.if3 {
            ThirdOrder::Absent | ThirdOrder::Zero => {}
            ThirdOrder::Dense(t) => {
                let scale = inv_n * inv_n;
                for i in 0..n {
                    for m in 0..n {
                        let row = &t[(i * n + m) * n..(i * n + m + 1) * n];
                        jac[i * n + m] += dot(row, delta) * scale;
                    }
                }
            }
            ThirdOrder::Factored { dim, factors, tensor } => {
                let d = *dim;
                let mut w = vec![0.0; d];
                for (f, &dk) in factors.chunks_exact(d).zip(delta) {
                    for (acc, fa) in w.iter_mut().zip(f) {
                        *acc += fa * dk * inv_n;
                    }
                }
                // M_ab = Σ_c T_abc w_c
                let mut mat = vec![0.0; d * d];
                for a in 0..d {
                    for b in 0..d {
                        mat[a * d + b] = dot(&tensor[(a * d + b) * d..(a * d + b + 1) * d], &w);
                    }
                }
                for i in 0..n {
                    let fi = &factors[i * d..(i + 1) * d];
                    for m in 0..n {
                        jac[i * n + m] += bilinear(fi, &mat, &factors[m * d..(m + 1) * d]) * inv_n;
                    }
                }
            }
        }
        jac
    }

    /// Truncated expansion
    /// `ψ̂ + Ê[IF₁ δ] + ½ Ê[IF₂ δδ] + ⅙ Ê[IF₃ δδδ]` at `L = 1 + delta`.
    pub fn objective(&self, delta: &[f64]) -> f64 {
        let n = self.n();
        let mut second = vec![0.0; n];
        let mut third = vec![0.0; n];
        self.apply_if2(delta, &mut second);
        self.apply_if3(delta, &mut third);
        let inv_n = 1.0 / n as f64;
        let mut s = 0.0;
        for i in 0..n {
            s += delta[i] * (self.if1[i] + 0.5 * second[i] + third[i] / 3.0);
        }
        self.psi_hat + s * inv_n
    }

    /// Largest violation of the marginal-zero and symmetry conditions, over
    /// every order the model provides. Quadratic (or cubic for dense `IF₃`)
    /// in `n`; intended for validation.
    pub fn canonical_defect(&self) -> f64 {
        let n = self.n();
        let nf = n as f64;
        let mut worst = (self.if1.iter().sum::<f64>() / nf).abs();
        for i in 0..n {
            let mut row = 0.0;
            let mut col = 0.0;
            for j in 0..n {
                row += self.if2(i, j);
                col += self.if2(j, i);
                worst = worst.max((self.if2(i, j) - self.if2(j, i)).abs());
            }
            worst = worst.max((row / nf).abs()).max((col / nf).abs());
        }
        if self.has_if3() && n <= 60 {
            for i in 0..n {
                for j in 0..n {
                    let mut s = [0.0; 3];
                    for k in 0..n {
                        s[0] += self.if3(k, i, j).unwrap();
                        s[1] += self.if3(i, k, j).unwrap();
                        s[2] += self.if3(i, j, k).unwrap();
                        let v = self.if3(i, j, k).unwrap();
                        worst = worst.max((v - self.if3(j, i, k).unwrap()).abs());
                        worst = worst.max((v - self.if3(k, j, i).unwrap()).abs());
                    }
                    for v in s {
                        worst = worst.max((v / nf).abs());
                    }
                }
            }
        }
        worst
    }
}

/// Scratch buffers reused across gradient evaluations.
#[derive(Debug, Clone)]
pub struct Workspace {
    second: Vec<f64>,
    third: Vec<f64>,
}

impl Workspace {
    pub fn new(n: usize) -> Self {
        Self { second: vec![0.0; n], third: vec![0.0; n] }
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn bilinear(x: &[f64], w: &[f64], y: &[f64]) -> f64 {
    let r = x.len();
    let mut s = 0.0;
    for a in 0..r {
        if x[a] == 0.0 {
            continue;
        }
        s += x[a] * dot(&w[a * r..(a + 1) * r], y);
    }
    s
}
