use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use super::Direction;
use crate::divergence::Divergence;
use crate::error::{Error, Result};
use crate::influence::{InfluenceModel, SecondOrder, ThirdOrder, Workspace};

/// Distance kept from the edge of the slope domain of `(φ')⁻¹`.
const DOMAIN_MARGIN: f64 = 1e-9;
const MAX_HALVINGS: usize = 30;
const FD_STEP: f64 = 1e-7;
/// The inner Newton fallback builds a dense `n × n` system.
const INNER_NEWTON_LIMIT: usize = 2000;
const EARLY_INTERIOR_LIMIT: usize = 200;
/// Sweeps shrinking the step by less than this factor hand over to Newton,
/// for systems small enough that a dense solve is cheap.
const SLOW_CONTRACTION: f64 = 0.3;
const DENSE_INNER_LIMIT: usize = 300;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    /// Max-change stopping rule for the inner fixed point.
    pub inner_tol: f64,
    /// Sweeps allowed before the inner fixed point is declared stuck.
    pub max_inner: usize,
    pub max_outer: usize,
    /// Required `|Ê φ(L) − q/(2n)|`.
    pub divergence_tol: f64,
    /// Required `|Ê L − 1|`.
    pub mean_tol: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self { inner_tol: 1e-14, max_inner: 200, max_outer: 500, divergence_tol: 1e-10, mean_tol: 1e-12 }
    }
}

/// Optimal likelihood ratio with its KKT multipliers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LikelihoodRatioSolution {
    #[serde(rename = "L")]
    pub l: Vec<f64>,
    pub alpha_tilde: f64,
    pub beta: f64,
    pub objective: f64,
    pub residual_divergence: f64,
    pub residual_mean: f64,
    pub iterations: usize,
    /// False when the optimum lies strictly inside the ball; the multiplier
    /// `α̃` is then infinite and `residual_divergence` is the unused budget.
    pub constraint_active: bool,
}

#[derive(Debug)]
enum InnerFailure {
    Domain,
    Stuck,
}

struct Point {
    a: f64,
    b: f64,
    delta: Vec<f64>,
    /// `(Ê φ(L) − q/(2n), Ê L − 1)`
    r: [f64; 2],
}

enum Continuation {
    Solved(Point, usize),
    /// The divergence multiplier reached zero before the full budget.
    Slack,
    Failed,
}

struct Solver<'a> {
    model: &'a InfluenceModel,
    phi: &'a Divergence,
    n: usize,
    target: f64,
    opts: SolverOptions,
    limit: f64,
    ws: Workspace,
    grad: Vec<f64>,
    next: Vec<f64>,
    inner_sweeps: usize,
    low_rank: Option<LowRank<'a>>,
}

/// Quadratic objective with `IF₂(i, j) = fᵢᵀ W fⱼ` of small rank `r`: the
/// gradient is `IF₁ + F W u` with `u = Ê[f δ]`, so the inner fixed point
/// reduces to `r` unknowns.
struct LowRank<'a> {
    r: usize,
    factors: &'a [f64],
    weights: &'a [f64],
}

impl<'a> LowRank<'a> {
    const MAX_RANK: usize = 4;

    fn of(model: &'a InfluenceModel) -> Option<Self> {
        if !matches!(model.if3_repr(), ThirdOrder::Absent | ThirdOrder::Zero) {
            return None;
        }
        match model.if2_repr() {
            SecondOrder::Factored { rank, factors, weights } if *rank <= Self::MAX_RANK => {
                Some(Self { r: *rank, factors, weights })
            }
            _ => None,
        }
    }
}

impl<'a> Solver<'a> {
    /// Maps a slope to `h(t)`, refusing slopes within the margin of the
    /// domain edge.
    fn h(&self, t: f64) -> std::result::Result<f64, InnerFailure> {
        if t >= self.limit - DOMAIN_MARGIN {
            return Err(InnerFailure::Domain);
        }
        self.phi.h(t).filter(|v| v.is_finite()).ok_or(InnerFailure::Domain)
    }

    /// Solves `δ = h(a (D(δ) − b))` starting from `delta`.
    fn inner(&mut self, a: f64, b: f64, delta: &mut [f64]) -> std::result::Result<(), InnerFailure> {
        if self.low_rank.is_some() && self.inner_low_rank(a, b, delta) {
            return Ok(());
        }
        let start = delta.to_vec();
        let mut prev_change = f64::INFINITY;
        for sweep in 0..self.opts.max_inner {
            self.inner_sweeps += 1;
            self.model.gradient(delta, &mut self.grad, &mut self.ws);
            let mut change = 0.0f64;
            for i in 0..self.n {
                let v = self.h(a * (self.grad[i] - b))?;
                change = change.max((v - delta[i]).abs());
                self.next[i] = v;
            }
            delta.copy_from_slice(&self.next);
            if change <= self.opts.inner_tol {
                return Ok(());
            }
            // Sub-tolerance noise: the contract only asks for 1e−12.
            if change <= 1e-12 && change >= prev_change {
                return Ok(());
            }
            if !change.is_finite() || change > 1e6 {
                break;
            }
            // Slow contraction: finish with Newton from the current iterate,
            // which is already in the basin of the same fixed point.
            if sweep >= 8 && change > SLOW_CONTRACTION * prev_change && self.n <= DENSE_INNER_LIMIT {
                // If Newton cannot finish from here, the fallback below
                // would not either.
                return self.inner_newton(a, b, delta);
            }
            prev_change = change;
        }
        if self.n <= INNER_NEWTON_LIMIT {
            delta.copy_from_slice(&start);
            return self.inner_newton(a, b, delta);
        }
        Err(InnerFailure::Stuck)
    }

    /// Newton on `u = Ê[f h(a (IF₁ + F W u − b))]`. A solution is accepted
    /// only on the branch reachable from `a = 0` without passing a fold, the
    /// same one the plain sweep follows.
    fn inner_low_rank(&mut self, a: f64, b: f64, delta: &mut [f64]) -> bool {
        let Some(lr) = self.low_rank.as_ref() else {
            return false;
        };
        let (r, factors, weights) = (lr.r, lr.factors, lr.weights);
        let n = self.n;
        let nf = n as f64;
        let if1 = self.model.if1();
        let f = |i: usize| &factors[i * r..(i + 1) * r];
        let wu = |u: &[f64]| -> Vec<f64> { (0..r).map(|k| (0..r).map(|l| weights[k * r + l] * u[l]).sum()).collect() };

        // δ(u), its residual `Ê[f δ(u)] − u` and `Ê[f fᵀ h′] `
        let eval = |this: &Self, u: &[f64], out: &mut [f64]| -> Option<(Vec<f64>, Vec<f64>)> {
            let g = wu(u);
            let mut res: Vec<f64> = u.iter().map(|x| -x).collect();
            let mut m = vec![0.0; r * r];
            for i in 0..n {
                let fi = f(i);
                let t = a * (if1[i] + fi.iter().zip(&g).map(|(x, y)| x * y).sum::<f64>() - b);
                let d = this.h(t).ok()?;
                let hp = this.phi.h_prime(t)?;
                out[i] = d;
                for k in 0..r {
                    res[k] += fi[k] * d / nf;
                    for l in 0..r {
                        m[k * r + l] += fi[k] * fi[l] * hp / nf;
                    }
                }
            }
            Some((res, m))
        };

        let mut u: Vec<f64> = (0..r).map(|k| (0..n).map(|i| f(i)[k] * delta[i]).sum::<f64>() / nf).collect();
        let mut out = vec![0.0; n];
        let Some((mut res, mut m)) = eval(self, &u, &mut out) else {
            return false;
        };
        let norm = |v: &[f64]| v.iter().fold(0.0f64, |acc, x| acc.max(x.abs()));
        let u_scale = |u: &[f64]| 1.0 + norm(u);
        for _ in 0..60 {
            self.inner_sweeps += 1;
            // sweep linearization K = a M W; Newton matrix K − I
            let k = DMatrix::from_fn(r, r, |i, j| a * (0..r).map(|l| m[i * r + l] * weights[l * r + j]).sum::<f64>());
            if norm(&res) <= 1e-15 * u_scale(&u) {
                // a fold is where a real eigenvalue crosses 1; eigenvalues
                // below −1 only make the plain sweep oscillate
                let on_branch = k.complex_eigenvalues().iter().all(|z| z.im.abs() > 1e-12 || z.re < 1.0);
                if !on_branch {
                    return false;
                }
                delta.copy_from_slice(&out);
                return true;
            }
            let jac = k - DMatrix::identity(r, r);
            let Some(step) = jac.lu().solve(&DVector::from_column_slice(&res)) else {
                return false;
            };
            let base = norm(&res);
            let mut lambda = 1.0;
            let mut moved = false;
            for _ in 0..=MAX_HALVINGS {
                let trial: Vec<f64> = u.iter().zip(step.iter()).map(|(x, s)| x - lambda * s).collect();
                if let Some((rt, mt)) = eval(self, &trial, &mut out) {
                    if norm(&rt) < base {
                        u = trial;
                        res = rt;
                        m = mt;
                        moved = true;
                        break;
                    }
                }
                lambda *= 0.5;
            }
            if !moved {
                // rounding floor: accept if already tiny
                if base <= 1e-13 * u_scale(&u) && eval(self, &u, &mut out).is_some() {
                    delta.copy_from_slice(&out);
                    return true;
                }
                return false;
            }
        }
        false
    }

    fn inner_residual(&mut self, a: f64, b: f64, delta: &[f64], out: &mut [f64]) -> std::result::Result<f64, InnerFailure> {
        self.model.gradient(delta, &mut self.grad, &mut self.ws);
        let mut worst = 0.0f64;
        for i in 0..self.n {
            out[i] = delta[i] - self.h(a * (self.grad[i] - b))?;
            worst = worst.max(out[i].abs());
        }
        Ok(worst)
    }

    /// Newton on `F(δ) = δ − h(a (D(δ) − b))` with a dense LU.
    fn inner_newton(&mut self, a: f64, b: f64, delta: &mut [f64]) -> std::result::Result<(), InnerFailure> {
        let n = self.n;
        let mut f = vec![0.0; n];
        let mut norm = self.inner_residual(a, b, delta, &mut f)?;
        let mut trial = vec![0.0; n];
        let mut f_trial = vec![0.0; n];
        for _ in 0..100 {
            if norm <= self.opts.inner_tol {
                return Ok(());
            }
            self.inner_sweeps += 1;
            let jd = self.model.gradient_jacobian(delta);
            let mut jac = DMatrix::<f64>::zeros(n, n);
            for i in 0..n {
                let t = a * (self.grad[i] - b);
                let hp = self.phi.h_prime(t).ok_or(InnerFailure::Domain)?;
                for m in 0..n {
                    jac[(i, m)] = -hp * a * jd[i * n + m];
                }
                jac[(i, i)] += 1.0;
            }
            let step = jac.lu().solve(&DVector::from_column_slice(&f)).ok_or(InnerFailure::Stuck)?;
            let mut lambda = 1.0;
            let mut accepted = false;
            for _ in 0..=MAX_HALVINGS {
                for i in 0..n {
                    trial[i] = delta[i] - lambda * step[i];
                }
                if let Ok(nt) = self.inner_residual(a, b, &trial, &mut f_trial) {
                    if nt < norm {
                        delta.copy_from_slice(&trial);
                        f.copy_from_slice(&f_trial);
                        norm = nt;
                        accepted = true;
                        break;
                    }
                }
                lambda *= 0.5;
            }
            if !accepted {
                return if norm <= 1e-12 { Ok(()) } else { Err(InnerFailure::Stuck) };
            }
        }
        Err(InnerFailure::Stuck)
    }

    fn residuals(&self, delta: &[f64]) -> [f64; 2] {
        let nf = self.n as f64;
        let mut div = 0.0;
        let mut mean = 0.0;
        for &d in delta {
            div += self.phi.eval_shift(d);
            mean += d;
        }
        [div / nf - self.target, mean / nf]
    }

    fn eval(&mut self, a: f64, b: f64, warm: &[f64]) -> std::result::Result<Point, InnerFailure> {
        let mut delta = warm.to_vec();
        self.inner(a, b, &mut delta)?;
        let r = self.residuals(&delta);
        if !(r[0].is_finite() && r[1].is_finite()) {
            return Err(InnerFailure::Domain);
        }
        Ok(Point { a, b, delta, r })
    }

    fn merit(&self, r: &[f64; 2]) -> f64 {
        (r[0] / self.target).abs().max(r[1].abs() / self.target.sqrt())
    }

    /// Divergence tolerance, relative once the budget itself is tiny.
    fn divergence_tol(&self) -> f64 {
        self.opts.divergence_tol * (100.0 * self.target).min(1.0)
    }

    fn tight(&self, r: &[f64; 2]) -> bool {
        r[0].abs() <= 1e-3 * self.divergence_tol() && r[1].abs() <= 1e-2 * self.opts.mean_tol
    }

    fn acceptable(&self, r: &[f64; 2]) -> bool {
        r[0].abs() <= self.divergence_tol() && r[1].abs() <= self.opts.mean_tol
    }

    /// Damped Newton on the residual pair over `(α̃, β)`.
    fn newton(&mut self, mut p: Point, sign: f64) -> (Point, bool, usize) {
        let mut short_steps = 0;
        for it in 0..self.opts.max_outer {
            if self.tight(&p.r) {
                return (p, true, it);
            }
            let ha = FD_STEP * (1.0 + p.a.abs());
            let hb = FD_STEP * (1.0 + p.b.abs());
            let Some(col_a) = self.fd_column(&p, ha, 0.0) else { return (p, false, it) };
            let Some(col_b) = self.fd_column(&p, 0.0, hb) else { return (p, false, it) };
            let det = col_a[0] * col_b[1] - col_b[0] * col_a[1];
            if !det.is_finite() || det == 0.0 {
                return (p, false, it);
            }
            let da = (-p.r[0] * col_b[1] + p.r[1] * col_b[0]) / det;
            let db = (-col_a[0] * p.r[1] + col_a[1] * p.r[0]) / det;

            let current = self.merit(&p.r);
            let mut lambda = 1.0;
            let mut next = None;
            for _ in 0..=MAX_HALVINGS {
                let a = p.a + lambda * da;
                let b = p.b + lambda * db;
                if a * sign > 0.0 {
                    if let Ok(cand) = self.eval(a, b, &p.delta) {
                        if self.merit(&cand.r) < current {
                            next = Some(cand);
                            break;
                        }
                    }
                }
                lambda *= 0.5;
            }
            short_steps = if lambda < 1.0 / 64.0 { short_steps + 1 } else { 0 };
            match next {
                // Repeated heavy damping: the iteration is creeping, not converging.
                Some(cand) if short_steps >= 4 => {
                    let ok = self.acceptable(&cand.r);
                    return (cand, ok, it + 1);
                }
                Some(cand) => p = cand,
                None => {
                    let ok = self.acceptable(&p.r);
                    return (p, ok, it);
                }
            }
        }
        let ok = self.acceptable(&p.r);
        let iters = self.opts.max_outer;
        (p, ok, iters)
    }

    /// Forward-difference column of the residual Jacobian; falls back to a
    /// backward difference when the forward point leaves the domain.
    fn fd_column(&mut self, p: &Point, da: f64, db: f64) -> Option<[f64; 2]> {
        let step = da + db;
        if let Ok(fwd) = self.eval(p.a + da, p.b + db, &p.delta) {
            return Some([(fwd.r[0] - p.r[0]) / step, (fwd.r[1] - p.r[1]) / step]);
        }
        let bwd = self.eval(p.a - da, p.b - db, &p.delta).ok()?;
        Some([(p.r[0] - bwd.r[0]) / step, (p.r[1] - bwd.r[1]) / step])
    }

    /// Residual of the joint system in `(δ, α̃, β)`: `φ'(Lᵢ) − α̃ (Dᵢ − β)`,
    /// `Ê φ(L) − τ`, `Ê δ`. Returns the merit, with each block divided by its
    /// natural size (`√τ` for slopes and means, `τ` for the divergence), or
    /// `None` outside the domain.
    fn joint_residual(&mut self, delta: &[f64], a: f64, b: f64, tau: f64, out: &mut [f64]) -> Option<f64> {
        let n = self.n;
        let nf = n as f64;
        if delta.iter().any(|d| !(1.0 + d > 0.0)) {
            return None;
        }
        self.model.gradient(delta, &mut self.grad, &mut self.ws);
        let (mut div, mut mean) = (0.0, 0.0);
        let mut worst = 0.0f64;
        for i in 0..n {
            let l = 1.0 + delta[i];
            out[i] = self.phi.deriv1(l) - a * (self.grad[i] - b);
            worst = worst.max(out[i].abs());
            div += self.phi.eval_shift(delta[i]);
            mean += delta[i];
        }
        out[n] = div / nf - tau;
        out[n + 1] = mean / nf;
        let root = tau.sqrt();
        let merit = (worst / root).max(out[n].abs() / tau).max(out[n + 1].abs() / root);
        merit.is_finite().then_some(merit)
    }

    /// Damped Newton on the joint system at budget `tau`; updates the
    /// iterate in place and reports whether the merit fell below `tol`.
    fn joint_newton(&mut self, delta: &mut Vec<f64>, a: &mut f64, b: &mut f64, tau: f64, tol: f64) -> bool {
        let n = self.n;
        let nf = n as f64;
        let mut res = vec![0.0; n + 2];
        let Some(mut merit) = self.joint_residual(delta, *a, *b, tau, &mut res) else { return false };
        let mut trial_res = vec![0.0; n + 2];
        for _ in 0..50 {
            if merit <= tol {
                return true;
            }
            self.inner_sweeps += 1;
            let jd = self.model.gradient_jacobian(delta);
            let mut jac = DMatrix::<f64>::zeros(n + 2, n + 2);
            for i in 0..n {
                let l = 1.0 + delta[i];
                for m in 0..n {
                    jac[(i, m)] = -*a * jd[i * n + m];
                }
                jac[(i, i)] += self.phi.deriv2(l);
                jac[(i, n)] = -(self.grad[i] - *b);
                jac[(i, n + 1)] = *a;
                jac[(n, i)] = self.phi.deriv1(l) / nf;
                jac[(n + 1, i)] = 1.0 / nf;
            }
            let Some(step) = jac.lu().solve(&DVector::from_column_slice(&res)) else { return false };
            // keep every Lᵢ positive: go at most 90% of the way to zero
            let mut lambda = 1.0f64;
            for i in 0..n {
                if step[i] > 0.0 {
                    lambda = lambda.min(0.9 * (1.0 + delta[i]) / step[i]);
                }
            }
            let mut accepted = false;
            for _ in 0..=MAX_HALVINGS {
                let trial: Vec<f64> = (0..n).map(|i| delta[i] - lambda * step[i]).collect();
                let (ta, tb) = (*a - lambda * step[n], *b - lambda * step[n + 1]);
                if let Some(tm) = self.joint_residual(&trial, ta, tb, tau, &mut trial_res) {
                    if tm < merit {
                        *delta = trial;
                        *a = ta;
                        *b = tb;
                        std::mem::swap(&mut res, &mut trial_res);
                        merit = tm;
                        accepted = true;
                        break;
                    }
                }
                lambda *= 0.5;
            }
            if !accepted {
                return merit <= tol;
            }
        }
        merit <= tol
    }

    /// Follows the stationary point from a tiny ball out to the target
    /// budget, solving for `(δ, α̃, β)` jointly so that folds of the map
    /// `α̃ ↦ L` are passed without trouble.
    fn homotopy(&mut self, sign: f64, kappa2: f64) -> Continuation {
        let d2 = self.phi.d2();
        let mut tau = self.target * 1e-4;
        // leading-order solution at the small budget
        let a0 = sign * (2.0 * tau * d2 / kappa2).sqrt();
        let mut delta: Vec<f64> = self.model.if1().iter().map(|v| a0 * v / d2).collect();
        let mut a = a0;
        let mut b = 0.0;
        if !self.joint_newton(&mut delta, &mut a, &mut b, tau, 1e-10) {
            return Continuation::Failed;
        }
        let mut steps = 0;
        // march in √τ, which is close to the natural scale of δ
        let mut ds = 0.1 * (self.target.sqrt() - tau.sqrt());
        while tau < self.target {
            steps += 1;
            if steps > self.opts.max_outer {
                return Continuation::Failed;
            }
            let next = (tau.sqrt() + ds).powi(2).min(self.target);
            let (mut d_try, mut a_try, mut b_try) = (delta.clone(), a, b);
            let converged = self.joint_newton(&mut d_try, &mut a_try, &mut b_try, next, 1e-10);
            if converged && a_try * sign > 0.0 {
                // a multiplier this large means the constraint has gone slack
                if a_try.abs() > 1e8 * a0.abs().max(1e-300) / (tau / self.target).sqrt().max(1e-4) {
                    return Continuation::Slack;
                }
                tau = next;
                delta = d_try;
                a = a_try;
                b = b_try;
                ds *= 1.5;
            } else if converged {
                return Continuation::Slack;
            } else {
                ds *= 0.25;
                if ds < 1e-10 * self.target.sqrt() {
                    return if a.abs() > 1e3 * a0.abs() { Continuation::Slack } else { Continuation::Failed };
                }
            }
        }
        // polish as far as rounding allows
        self.joint_newton(&mut delta, &mut a, &mut b, self.target, 0.0);
        let r = self.residuals(&delta);
        if !self.acceptable(&r) {
            return Continuation::Failed;
        }
        Continuation::Solved(Point { a, b, delta, r }, steps)
    }

    /// For fixed `a`, finds `b` with `Ê L = 1`. `Ê L − 1` falls as `b` moves
    /// along `sign(a)`; a domain failure means `L` blew up on the near side.
    fn solve_mean(&mut self, a: f64, b_guess: f64, warm: &[f64]) -> Option<Point> {
        let sign = a.signum();
        let unit = 1e-3 * (1.0 + b_guess.abs());
        // `near` has r₂ > 0 (or fails), `far` has r₂ ≤ 0.
        let mut near = b_guess;
        let mut far = b_guess;
        let mut far_point = None;
        let mut width = unit;
        for _ in 0..200 {
            match self.eval(a, far, warm) {
                Ok(pt) if pt.r[1] <= 0.0 => {
                    far_point = Some(pt);
                    break;
                }
                _ => {
                    near = far;
                    far += sign * width;
                    width *= 2.0;
                }
            }
        }
        let mut best = far_point?;
        if near == far {
            width = unit;
            loop {
                near -= sign * width;
                width *= 2.0;
                match self.eval(a, near, &best.delta) {
                    Ok(pt) if pt.r[1] <= 0.0 => {
                        far = near;
                        best = pt;
                    }
                    _ => break,
                }
                if width > 1e12 {
                    return None;
                }
            }
        }
        for _ in 0..200 {
            if best.r[1].abs() <= 1e-2 * self.opts.mean_tol {
                break;
            }
            let mid = 0.5 * (near + far);
            if mid == near || mid == far {
                break;
            }
            match self.eval(a, mid, &best.delta) {
                Ok(pt) if pt.r[1] <= 0.0 => {
                    far = mid;
                    best = pt;
                }
                _ => near = mid,
            }
        }
        Some(best)
    }

    /// Nested bisection: `β` from the mean constraint for each `α̃`, and
    /// `|α̃|` from the divergence constraint, which grows with `|α̃|`.
    fn bisection(&mut self, a0: f64, sign: f64) -> Result<Point> {
        let zeros = vec![0.0; self.n];
        let mut lo = 0.0f64;
        let mut hi = a0.abs();
        let mut b = 0.0;
        let mut lo_point: Option<Point> = None;
        let mut hi_point = loop {
            match self.solve_mean(sign * hi, b, &zeros) {
                Some(pt) if pt.r[0] >= 0.0 => break pt,
                Some(pt) => {
                    b = pt.b;
                    lo = hi;
                    lo_point = Some(pt);
                    hi *= 2.0;
                    if hi > 1e8 * a0.abs() {
                        return Err(Error::NoConvergence(
                            "divergence constraint stays slack; no finite multiplier solves the stationarity system".into(),
                        ));
                    }
                }
                None => {
                    hi = 0.5 * (lo + hi);
                    if hi - lo <= 1e-15 * hi {
                        return Err(Error::InfeasibleBall(format!(
                            "divergence budget {} not reachable inside the slope domain",
                            self.target
                        )));
                    }
                }
            }
        };
        for _ in 0..200 {
            if self.tight(&hi_point.r) {
                break;
            }
            let mid = 0.5 * (lo + hi);
            if mid == lo || mid == hi {
                break;
            }
            let warm = hi_point.delta.clone();
            let Some(pt) = self.solve_mean(sign * mid, hi_point.b, &warm) else {
                hi = mid;
                continue;
            };
            if pt.r[0] >= 0.0 {
                hi = mid;
                hi_point = pt;
            } else {
                lo = mid;
                lo_point = Some(pt);
            }
        }
        Ok(match lo_point {
            Some(lp) if self.merit(&lp.r) < self.merit(&hi_point.r) => lp,
            _ => hi_point,
        })
    }
}

/// Solves the robust problem over likelihood ratios with default options.
pub fn solve_dro_exact(model: &InfluenceModel, phi: &Divergence, q: f64, direction: Direction) -> Result<LikelihoodRatioSolution> {
    solve_dro_with(model, phi, q, direction, &SolverOptions::default())
}

/// Maximizes (or minimizes) the truncated expansion of `ψ(P̂ L)` over `L`
/// with `Ê φ(L) ≤ q/(2n)`, `Ê L = 1`, through the stationarity condition
/// `Lᵢ = 1 + h(α̃ (Dᵢ − β))`.
pub fn solve_dro_with(
    model: &InfluenceModel,
    phi: &Divergence,
    q: f64,
    direction: Direction,
    opts: &SolverOptions,
) -> Result<LikelihoodRatioSolution> {
    if !(q > 0.0) || !q.is_finite() {
        return Err(Error::DomainError(format!("ball size q = {q} must be positive")));
    }
    let n = model.n();
    let nf = n as f64;
    let kappa2 = model.if1().iter().map(|v| v * v).sum::<f64>() / nf;
    let scale = model.data_scale();
    if !(kappa2 >= 1e-12 * scale * scale) {
        return Err(Error::DegenerateVariance);
    }
    let target = q / (2.0 * nf);

    // A convex φ is largest over the simplex at a vertex; past that the
    // divergence constraint cannot bind.
    let phi0 = phi.eval(0.0);
    if phi0.is_finite() {
        let vertex = ((nf - 1.0) * phi0 + phi.eval(nf)) / nf;
        if target >= vertex {
            return Err(Error::InfeasibleBall(format!(
                "q/(2n) = {target} exceeds the largest attainable divergence {vertex}"
            )));
        }
    }

    let sign = direction.sign();
    let mut solver = Solver {
        model,
        phi,
        n,
        target,
        opts: *opts,
        limit: phi.slope_limit(),
        ws: Workspace::new(n),
        grad: vec![0.0; n],
        next: vec![0.0; n],
        inner_sweeps: 0,
        low_rank: LowRank::of(model),
    };

    let mut a0 = sign * (q * phi.d2() / (nf * kappa2)).sqrt();
    let zeros = vec![0.0; n];
    let mut start = None;
    for _ in 0..60 {
        match solver.eval(a0, 0.0, &zeros) {
            Ok(p) => {
                start = Some(p);
                break;
            }
            Err(_) => a0 *= 0.5,
        }
    }
    let start = start.ok_or_else(|| Error::InfeasibleBall("no feasible starting multiplier".into()))?;

    let (mut point, mut ok, mut outer) = solver.newton(start, sign);
    // A concave (convex) objective under max (min) often peaks inside the
    // ball; the stationary-point check is much cheaper than continuation.
    if !ok && n <= EARLY_INTERIOR_LIMIT {
        if let Some(sol) = interior_optimum(model, phi, target, sign) {
            return Ok(sol);
        }
    }
    if !ok && n <= INNER_NEWTON_LIMIT {
        match solver.homotopy(sign, kappa2) {
            Continuation::Solved(p, steps) => {
                point = p;
                ok = true;
                outer += steps;
            }
            Continuation::Slack => {
                if let Some(sol) = interior_optimum(model, phi, target, sign) {
                    return Ok(sol);
                }
            }
            Continuation::Failed => {}
        }
    }
    if !ok && point.r[0] < 0.0 {
        if let Some(sol) = interior_optimum(model, phi, target, sign) {
            return Ok(sol);
        }
    }
    if !ok {
        if let Some(sol) = rank_one_scan(model, phi, q, direction, opts) {
            return Ok(sol);
        }
        point = solver.bisection(a0, sign)?;
        ok = solver.acceptable(&point.r);
        outer = opts.max_outer.min(outer + 1);
    }
    if !ok {
        return Err(Error::NoConvergence(format!(
            "residuals ({:e}, {:e}) after {} inner sweeps",
            point.r[0], point.r[1], solver.inner_sweeps
        )));
    }

    let objective = model.objective(&point.delta);
    Ok(LikelihoodRatioSolution {
        l: point.delta.iter().map(|d| 1.0 + d).collect(),
        alpha_tilde: point.a,
        beta: point.b,
        objective,
        residual_divergence: point.r[0].abs(),
        residual_mean: point.r[1].abs(),
        iterations: outer,
        constraint_active: true,
    })
}

/// Quadratic objectives whose second-order term has rank one,
/// `IF₂(i, j) = λ cᵢ cⱼ`. The gradient is then `IF₁ + λ c v` with the scalar
/// `v = Ê[c δ]`, so every boundary KKT point solves the linear problem for
/// some `v` and reproduces that `v`. Scanning `v` finds all of them,
/// including those on branches the multiplier continuation cannot reach
/// (minimizing a concave objective, for instance).
fn rank_one_scan(
    model: &InfluenceModel,
    phi: &Divergence,
    q: f64,
    direction: Direction,
    opts: &SolverOptions,
) -> Option<LikelihoodRatioSolution> {
    const GRID: usize = 96;
    if !matches!(model.if3_repr(), ThirdOrder::Absent | ThirdOrder::Zero) {
        return None;
    }
    let SecondOrder::Factored { rank, factors, weights } = model.if2_repr() else {
        return None;
    };
    let r = *rank;
    let eig = SymmetricEigen::new(DMatrix::from_row_slice(r, r, weights));
    let big = eig.eigenvalues.amax();
    let live: Vec<usize> = (0..r).filter(|&k| eig.eigenvalues[k].abs() > 1e-12 * big).collect();
    let &[k] = live.as_slice() else {
        return None;
    };
    let lambda = eig.eigenvalues[k];
    let w = eig.eigenvectors.column(k);
    let c: Vec<f64> = factors.chunks_exact(r).map(|f| f.iter().zip(w.iter()).map(|(a, b)| a * b).sum()).collect();
    let nf = model.n() as f64;
    let scale = model.data_scale();

    let linear = |d: Vec<f64>, dir: Direction| -> Option<LikelihoodRatioSolution> {
        let lin = InfluenceModel::from_parts(0.0, d, SecondOrder::Zero, ThirdOrder::Zero, scale);
        solve_dro_with(&lin, phi, q, dir, opts).ok()
    };
    let along_c = |sol: &LikelihoodRatioSolution| -> f64 { sol.l.iter().zip(&c).map(|(l, ci)| (l - 1.0) * ci).sum::<f64>() / nf };
    // g(v) = Ê[c δ(v)] − v, where δ(v) solves the linear problem
    let g = |v: f64| -> Option<(f64, LikelihoodRatioSolution)> {
        let d = model.if1().iter().zip(&c).map(|(f, ci)| f + lambda * ci * v).collect();
        let sol = linear(d, direction)?;
        Some((along_c(&sol) - v, sol))
    };

    // every feasible δ has Ê[c δ] between these two
    let v_lo = along_c(&linear(c.clone(), Direction::Min)?);
    let v_hi = along_c(&linear(c.clone(), Direction::Max)?);
    let width = v_hi - v_lo;
    if !(width > 0.0) {
        return None;
    }

    let sign = direction.sign();
    let mut best: Option<(f64, LikelihoodRatioSolution)> = None;
    let mut consider = |sol: LikelihoodRatioSolution| {
        let delta: Vec<f64> = sol.l.iter().map(|l| l - 1.0).collect();
        let value = model.objective(&delta);
        if best.as_ref().map_or(true, |(b, _)| sign * value > sign * b) {
            best = Some((value, sol));
        }
    };
    let mut prev: Option<(f64, f64)> = None;
    for i in 0..=GRID {
        let v = v_lo + width * i as f64 / GRID as f64;
        let Some((gv, _)) = g(v) else {
            prev = None;
            continue;
        };
        if let Some((pv, pg)) = prev {
            if pg == 0.0 || pg.signum() != gv.signum() {
                let (mut a, mut fa, mut b) = (pv, pg, v);
                for _ in 0..200 {
                    if b - a <= 1e-15 * width.max(v.abs()) {
                        break;
                    }
                    let mid = 0.5 * (a + b);
                    match g(mid) {
                        Some((gm, _)) if gm.signum() == fa.signum() && gm != 0.0 => {
                            a = mid;
                            fa = gm;
                        }
                        Some(_) => b = mid,
                        None => break,
                    }
                }
                if let Some((_, sol)) = g(0.5 * (a + b)) {
                    consider(sol);
                }
            }
        }
        prev = Some((v, gv));
    }
    let (objective, sol) = best?;
    Some(LikelihoodRatioSolution { objective, iterations: GRID, ..sol })
}

/// Optimum strictly inside the ball, which the multiplier iteration cannot
/// reach (`α̃ → ±∞`). Only attempted for quadratic truncated objectives: the
/// stationary point of `Ê[IF₁ δ] + ½ Ê[IF₂ δδ]` on `Σ δ = 0` is accepted when
/// the quadratic has the right curvature there and the point lies in the ball.
fn interior_optimum(model: &InfluenceModel, phi: &Divergence, target: f64, sign: f64) -> Option<LikelihoodRatioSolution> {
    let n = model.n();
    if n > INNER_NEWTON_LIMIT || !matches!(model.if3_repr(), ThirdOrder::Absent | ThirdOrder::Zero) {
        return None;
    }
    let nf = n as f64;
    let m = DMatrix::from_fn(n, n, |i, j| 0.5 * (model.if2(i, j) + model.if2(j, i)) / nf);
    let eig = SymmetricEigen::new(m);
    let if1 = DVector::from_column_slice(model.if1());
    let scale = eig.eigenvalues.amax().max(f64::MIN_POSITIVE);
    let tol = 1e-10 * scale.max(1.0);
    let mut delta = DVector::zeros(n);
    for (k, &lam) in eig.eigenvalues.iter().enumerate() {
        let u = eig.eigenvectors.column(k);
        let proj = u.dot(&if1);
        if lam.abs() <= tol {
            // a flat direction with nonzero slope leaves the ball
            if proj.abs() > 1e-10 * if1.amax().max(1.0) {
                return None;
            }
            continue;
        }
        if sign * lam > 0.0 {
            // curvature in the wrong direction: the optimum is on the boundary
            return None;
        }
        delta -= u * (proj / lam);
    }
    let mean = delta.sum() / nf;
    delta.add_scalar_mut(-mean);
    let mut div = 0.0;
    for &d in delta.iter() {
        let v = phi.eval_shift(d);
        if !v.is_finite() || 1.0 + d <= 0.0 {
            return None;
        }
        div += v;
    }
    let div = div / nf;
    if div > target {
        return None;
    }
    let delta: Vec<f64> = delta.iter().copied().collect();
    Some(LikelihoodRatioSolution {
        objective: model.objective(&delta),
        l: delta.iter().map(|d| 1.0 + d).collect(),
        alpha_tilde: sign * f64::INFINITY,
        beta: 0.0,
        residual_divergence: (div - target).abs(),
        residual_mean: mean.abs(),
        iterations: 0,
        constraint_active: false,
    })
}

