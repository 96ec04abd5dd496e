//! φ-divergences used to define the ambiguity ball.
//!
//! Every divergence here is normalized so that `φ(1) = φ'(1) = 0`. The
//! derivative triple `(φ''(1), φ'''(1), φ⁽⁴⁾(1))` is stored in closed form;
//! all of the downstream expansion and correction formulas are polynomials
//! in these three numbers.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance used when checking the correctability identities.
pub const CORRECTABILITY_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "kebab-case")]
pub enum DivergenceKind {
    /// `φ(x) = x log x − x + 1`
    Kl,
    /// `φ(x) = −log x + x − 1`, the empirical-likelihood choice.
    ReverseKl,
    /// `φ(x) = (x − 1)²`
    Chi2,
    /// `φ(x) = (x^{λ+1} − 1 − (λ + 1)(x − 1)) / (λ(λ + 1))`
    CressieRead { lambda: f64 },
}

/// A φ-divergence with its derivative values at 1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Divergence {
    kind: DivergenceKind,
    d2: f64,
    d3: f64,
    d4: f64,
}

/// Result of inverting `φ'` at a given slope.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Inverse {
    /// The unique `x > 0` with `φ'(x) = t`.
    Interior(f64),
    /// `t` lies below the range of `φ'`; the nonnegativity constraint on the
    /// likelihood ratio is active and the optimal value is 0.
    Floor,
    /// `t` lies above the range of `φ'` (no finite preimage).
    Unbounded,
}

impl Divergence {
    pub fn new(kind: DivergenceKind) -> Result<Self> {
        let (d2, d3, d4) = match kind {
            DivergenceKind::Kl => (1.0, -1.0, 2.0),
            DivergenceKind::ReverseKl => (1.0, -2.0, 6.0),
            DivergenceKind::Chi2 => (2.0, 0.0, 0.0),
            DivergenceKind::CressieRead { lambda } => {
                if !lambda.is_finite() {
                    return Err(Error::DomainError(format!("cressie-read lambda {lambda}")));
                }
                if lambda == 0.0 || lambda == -1.0 {
                    return Err(Error::DegenerateCressieReadParameter(lambda));
                }
                (1.0, lambda - 1.0, (lambda - 1.0) * (lambda - 2.0))
            }
        };
        Ok(Self { kind, d2, d3, d4 })
    }

    /// Builds a divergence from its registry name; `lambda` is required for,
    /// and only for, `cressie-read`.
    pub fn from_name(name: &str, lambda: Option<f64>) -> Result<Self> {
        let kind = match (name, lambda) {
            ("kl", None) => DivergenceKind::Kl,
            ("reverse-kl", None) => DivergenceKind::ReverseKl,
            ("chi2", None) => DivergenceKind::Chi2,
            ("cressie-read", Some(lambda)) => DivergenceKind::CressieRead { lambda },
            _ => {
                return Err(Error::UnknownDivergence(match lambda {
                    Some(l) => format!("{name}:{l}"),
                    None => name.to_string(),
                }))
            }
        };
        Self::new(kind)
    }

    pub fn reverse_kl() -> Self {
        Self::new(DivergenceKind::ReverseKl).expect("reverse-kl is valid")
    }

    pub fn kl() -> Self {
        Self::new(DivergenceKind::Kl).expect("kl is valid")
    }

    pub fn chi2() -> Self {
        Self::new(DivergenceKind::Chi2).expect("chi2 is valid")
    }

    pub fn kind(&self) -> DivergenceKind {
        self.kind
    }

    /// `φ''(1)`
    pub fn d2(&self) -> f64 {
        self.d2
    }

    /// `φ'''(1)`
    pub fn d3(&self) -> f64 {
        self.d3
    }

    /// `φ⁽⁴⁾(1)`
    pub fn d4(&self) -> f64 {
        self.d4
    }

    /// `φ(x)`. Returns `+∞` where φ blows up at the origin and NaN for
    /// negative arguments; see [`Divergence::checked_eval`].
    pub fn eval(&self, x: f64) -> f64 {
        if x < 0.0 || x.is_nan() {
            return f64::NAN;
        }
        match self.kind {
            DivergenceKind::Kl => {
                if x == 0.0 {
                    1.0
                } else {
                    let u = x - 1.0;
                    x * u.ln_1p() - u
                }
            }
            DivergenceKind::ReverseKl => {
                if x == 0.0 {
                    f64::INFINITY
                } else {
                    // −log x + x − 1 loses all digits near 1 if written naively.
                    let u = x - 1.0;
                    u - u.ln_1p()
                }
            }
            DivergenceKind::Chi2 => (x - 1.0) * (x - 1.0),
            DivergenceKind::CressieRead { lambda } => {
                if x == 0.0 && lambda < -1.0 {
                    return f64::INFINITY;
                }
                let u = x - 1.0;
                // x^{λ+1} − 1 = expm1((λ+1) log x)
                let pow_m1 = if x == 0.0 {
                    -1.0
                } else {
                    ((lambda + 1.0) * u.ln_1p()).exp_m1()
                };
                (pow_m1 - (lambda + 1.0) * u) / (lambda * (lambda + 1.0))
            }
        }
    }

    /// `φ(1 + u)`, accurate for tiny `u` where forming `1 + u` first would
    /// already drop the low digits of `u`.
    pub fn eval_shift(&self, u: f64) -> f64 {
        if u.abs() >= 1e-2 || u.is_nan() {
            return self.eval(1.0 + u);
        }
        // Σ_{k≥2} φ⁽ᵏ⁾(1) uᵏ / k!
        let mut sum = 0.0;
        let mut coef = 0.5 * self.d2;
        let mut pow = u * u;
        for k in 2..60 {
            let term = coef * pow;
            sum += term;
            if term.abs() <= 1e-17 * sum.abs() {
                break;
            }
            let kf = k as f64;
            coef *= match self.kind {
                DivergenceKind::Kl => -(kf - 1.0) / (kf + 1.0),
                DivergenceKind::ReverseKl => -kf / (kf + 1.0),
                DivergenceKind::Chi2 => 0.0,
                DivergenceKind::CressieRead { lambda } => (lambda - kf + 1.0) / (kf + 1.0),
            };
            pow *= u;
        }
        sum
    }

    /// `φ(x)` with domain errors surfaced instead of encoded as ∞/NaN.
    pub fn checked_eval(&self, x: f64) -> Result<f64> {
        let v = self.eval(x);
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::DomainError(format!("phi({x}) is not finite for {self}")))
        }
    }

    /// `φ'(x)` for `x > 0`.
    pub fn deriv1(&self, x: f64) -> f64 {
        match self.kind {
            DivergenceKind::Kl => x.ln(),
            DivergenceKind::ReverseKl => 1.0 - 1.0 / x,
            DivergenceKind::Chi2 => 2.0 * (x - 1.0),
            DivergenceKind::CressieRead { lambda } => (lambda * (x - 1.0).ln_1p()).exp_m1() / lambda,
        }
    }

    /// `φ''(x)` for `x > 0`.
    pub fn deriv2(&self, x: f64) -> f64 {
        match self.kind {
            DivergenceKind::Kl => 1.0 / x,
            DivergenceKind::ReverseKl => 1.0 / (x * x),
            DivergenceKind::Chi2 => 2.0,
            DivergenceKind::CressieRead { lambda } => x.powf(lambda - 1.0),
        }
    }

    /// `h'(t) = 1 / φ''(1 + h(t))`; zero where the floor is active.
    pub fn h_prime(&self, t: f64) -> Option<f64> {
        match self.deriv1_inverse(t) {
            Inverse::Interior(x) => Some(1.0 / self.deriv2(x)),
            Inverse::Floor => Some(0.0),
            Inverse::Unbounded => None,
        }
    }

    /// Inverse of `φ'`, distinguishing the two ways a slope can fall outside
    /// the range of `φ'` on `(0, ∞)`.
    pub fn deriv1_inverse(&self, t: f64) -> Inverse {
        if t.is_nan() {
            return Inverse::Unbounded;
        }
        match self.kind {
            DivergenceKind::Kl => Inverse::Interior(t.exp()),
            DivergenceKind::ReverseKl => {
                if t < 1.0 {
                    Inverse::Interior(1.0 / (1.0 - t))
                } else {
                    Inverse::Unbounded
                }
            }
            DivergenceKind::Chi2 => {
                if t > -2.0 {
                    Inverse::Interior(1.0 + 0.5 * t)
                } else {
                    Inverse::Floor
                }
            }
            DivergenceKind::CressieRead { lambda } => {
                let base = 1.0 + lambda * t;
                if base > 0.0 {
                    Inverse::Interior(base.powf(1.0 / lambda))
                } else if lambda > 0.0 {
                    Inverse::Floor
                } else {
                    Inverse::Unbounded
                }
            }
        }
    }

    /// `h(t) = (φ')⁻¹(t) − 1`, with the floor case mapped to `−1`.
    ///
    /// Returns `None` when `t` has no finite preimage.
    pub fn h(&self, t: f64) -> Option<f64> {
        match self.deriv1_inverse(t) {
            Inverse::Interior(_) => Some(match self.kind {
                // keep full precision for small t
                DivergenceKind::Kl => t.exp_m1(),
                DivergenceKind::ReverseKl => t / (1.0 - t),
                DivergenceKind::CressieRead { lambda } => ((lambda * t).ln_1p() / lambda).exp_m1(),
                DivergenceKind::Chi2 => 0.5 * t,
            }),
            Inverse::Floor => Some(-1.0),
            Inverse::Unbounded => None,
        }
    }

    /// Supremum of slopes `t` for which `h(t)` is finite (`+∞` if none).
    pub fn slope_limit(&self) -> f64 {
        match self.kind {
            DivergenceKind::ReverseKl => 1.0,
            DivergenceKind::CressieRead { lambda } if lambda < 0.0 => -1.0 / lambda,
            _ => f64::INFINITY,
        }
    }

    /// `h'(0) = 1 / φ''(1)`.
    pub fn h_prime_at_zero(&self) -> f64 {
        1.0 / self.d2
    }

    /// Whether the level-free correction exists, i.e. both
    /// `φ'''(1) = −2φ''(1)` and `φ⁽⁴⁾(1) = −3φ'''(1)` hold.
    pub fn is_bartlett_correctable(&self) -> bool {
        let (first, second) = self.correctability_defect();
        first.abs() <= CORRECTABILITY_TOL && second.abs() <= CORRECTABILITY_TOL
    }

    /// `(φ'''(1) + 2φ''(1), φ⁽⁴⁾(1) + 3φ'''(1))`; both vanish exactly for a
    /// correctable divergence.
    pub fn correctability_defect(&self) -> (f64, f64) {
        (self.d3 + 2.0 * self.d2, self.d4 + 3.0 * self.d3)
    }

    /// Endpoints `[lo, hi]` of `{x ≥ 0 : φ(x) ≤ level}`.
    pub fn sublevel_interval(&self, level: f64) -> (f64, f64) {
        let lo = if self.eval(0.0) <= level {
            0.0
        } else {
            bisect_monotone(|x| self.eval(x) - level, 0.0, 1.0)
        };
        let mut upper = 2.0;
        while self.eval(upper) <= level {
            upper *= 2.0;
        }
        let hi = bisect_monotone(|x| level - self.eval(x), 1.0, upper);
        (lo, hi)
    }
}

/// Bisection for a sign change of `f` on `[a, b]` with `f(a) > 0 ≥ f(b)`
/// or the reverse.
fn bisect_monotone(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
    let fa_pos = f(a) > 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (a + b);
        if mid <= a || mid >= b {
            break;
        }
        if (f(mid) > 0.0) == fa_pos {
            a = mid;
        } else {
            b = mid;
        }
    }
    0.5 * (a + b)
}

impl fmt::Display for Divergence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            DivergenceKind::Kl => f.write_str("kl"),
            DivergenceKind::ReverseKl => f.write_str("reverse-kl"),
            DivergenceKind::Chi2 => f.write_str("chi2"),
            DivergenceKind::CressieRead { lambda } => write!(f, "cressie-read:{lambda}"),
        }
    }
}

impl FromStr for Divergence {
    type Err = Error;

    /// Parses `kl | reverse-kl | chi2 | cressie-read:<λ>`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        match s.split_once(':') {
            Some(("cressie-read", lambda)) => {
                let lambda: f64 = lambda
                    .trim()
                    .parse()
                    .map_err(|_| Error::UnknownDivergence(s.to_string()))?;
                Self::from_name("cressie-read", Some(lambda))
            }
            Some(_) => Err(Error::UnknownDivergence(s.to_string())),
            None => Self::from_name(s, None),
        }
    }
}

impl Serialize for Divergence {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Divergence {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn registered() -> Vec<Divergence> {
        let mut out = vec![Divergence::kl(), Divergence::reverse_kl(), Divergence::chi2()];
        for lambda in [-2.5, -0.5, 0.5, 1.0, 2.0, 3.0] {
            out.push(Divergence::new(DivergenceKind::CressieRead { lambda }).unwrap());
        }
        out
    }

    #[test]
    fn derivative_triples() {
        let t = |d: Divergence| (d.d2(), d.d3(), d.d4());
        assert_eq!(t(Divergence::reverse_kl()), (1.0, -2.0, 6.0));
        assert_eq!(t(Divergence::chi2()), (2.0, 0.0, 0.0));
        assert_eq!(t(Divergence::kl()), (1.0, -1.0, 2.0));
    }

    #[test]
    fn normalized_at_one() {
        for d in registered() {
            assert_eq!(d.eval(1.0), 0.0, "{d}");
            assert_eq!(d.deriv1(1.0), 0.0, "{d}");
            assert!(d.d2() > 0.0);
            assert_eq!(d.h(0.0), Some(0.0), "{d}");
        }
    }

    #[test]
    fn midpoint_convexity_on_grid() {
        let grid: Vec<f64> = (1..=50).map(|k| k as f64 * 0.1).collect();
        for d in registered() {
            for &a in &grid {
                for &b in &grid {
                    let mid = d.eval(0.5 * (a + b));
                    assert!(mid <= 0.5 * (d.eval(a) + d.eval(b)) + 1e-12, "{d} at {a},{b}");
                }
            }
        }
    }

    #[test]
    fn shifted_eval_matches() {
        let all = [
            Divergence::kl(),
            Divergence::reverse_kl(),
            Divergence::chi2(),
            Divergence::from_name("cressie-read", Some(-0.5)).unwrap(),
            Divergence::from_name("cressie-read", Some(1.7)).unwrap(),
        ];
        for phi in all {
            for u in [-0.0099, -3e-3, 1e-3, 0.0099, 0.02, -0.5] {
                let (a, b) = (phi.eval_shift(u), phi.eval(1.0 + u));
                assert!((a - b).abs() <= 1e-12 * b, "{phi} {u}");
            }
            // leading term dominates for tiny u
            let u = 3e-9;
            assert!((phi.eval_shift(u) / (0.5 * phi.d2() * u * u) - 1.0).abs() < 1e-8, "{phi}");
        }
    }

    #[test]
    fn nonnegative_and_consistent_with_slope() {
        for d in registered() {
            let mut x = 0.05;
            while x <= 6.0 {
                assert!(d.eval(x) >= 0.0, "{d} at {x}");
                let s = 1e-5;
                let fd = (d.eval(x + s) - d.eval(x - s)) / (2.0 * s);
                assert!((fd - d.deriv1(x)).abs() < 1e-6 * d.deriv1(x).abs().max(1.0), "{d} at {x}");
                x += 0.05;
            }
        }
    }

    #[test]
    fn inverse_round_trip() {
        for d in registered() {
            let mut x = 0.1;
            while x <= 5.0 {
                match d.deriv1_inverse(d.deriv1(x)) {
                    Inverse::Interior(y) => assert!((y - x).abs() < 1e-10, "{d} at {x}: {y}"),
                    other => panic!("{d} at {x}: {other:?}"),
                }
                x += 0.05;
            }
        }
    }

    #[test]
    fn derivative_triple_matches_finite_differences() {
        // 5-point central stencils on φ at 1
        for d in registered() {
            let s = 1e-2;
            let f = |k: f64| d.eval(1.0 + k * s);
            let (m2, m1, p0, p1, p2) = (f(-2.0), f(-1.0), f(0.0), f(1.0), f(2.0));
            let (m3, p3) = (f(-3.0), f(3.0));
            let d2 = (-p2 + 16.0 * p1 - 30.0 * p0 + 16.0 * m1 - m2) / (12.0 * s * s);
            let d3 = (-p3 + 8.0 * p2 - 13.0 * p1 + 13.0 * m1 - 8.0 * m2 + m3) / (8.0 * s.powi(3));
            let d4 = (-p3 + 12.0 * p2 - 39.0 * p1 + 56.0 * p0 - 39.0 * m1 + 12.0 * m2 - m3)
                / (6.0 * s.powi(4));
            let close = |a: f64, b: f64| (a - b).abs() <= 1e-5 * b.abs().max(1.0);
            assert!(close(d2, d.d2()), "{d}: d2 {d2}");
            assert!(close(d3, d.d3()), "{d}: d3 {d3}");
            assert!(close(d4, d.d4()), "{d}: d4 {d4}");
        }
    }

    #[test]
    fn correctability() {
        assert!(Divergence::reverse_kl().is_bartlett_correctable());
        assert!(!Divergence::kl().is_bartlett_correctable());
        assert!(!Divergence::chi2().is_bartlett_correctable());
        let cr1 = Divergence::new(DivergenceKind::CressieRead { lambda: 1.0 }).unwrap();
        assert!(!cr1.is_bartlett_correctable());
    }

    #[test]
    fn cressie_read_degenerate_parameters() {
        assert_eq!(
            Divergence::from_name("cressie-read", Some(0.0)),
            Err(Error::DegenerateCressieReadParameter(0.0))
        );
        assert!(matches!(
            "cressie-read:-1".parse::<Divergence>(),
            Err(Error::DegenerateCressieReadParameter(_))
        ));
        assert!(matches!(Divergence::from_name("cressie-read", None), Err(Error::UnknownDivergence(_))));
        assert!(matches!("hellinger".parse::<Divergence>(), Err(Error::UnknownDivergence(_))));
    }

    #[test]
    fn parse_and_display_round_trip() {
        for s in ["kl", "reverse-kl", "chi2", "cressie-read:0.5", "cressie-read:-2"] {
            let d: Divergence = s.parse().unwrap();
            assert_eq!(d.to_string(), s);
        }
    }

    #[test]
    fn values_at_zero() {
        assert_eq!(Divergence::chi2().eval(0.0), 1.0);
        assert_eq!(Divergence::kl().eval(0.0), 1.0);
        assert!(matches!(Divergence::reverse_kl().checked_eval(0.0), Err(Error::DomainError(_))));
    }

    #[test]
    fn slope_domain() {
        let rkl = Divergence::reverse_kl();
        assert_eq!(rkl.h(1.0), None);
        assert_eq!(rkl.slope_limit(), 1.0);
        assert_eq!(Divergence::chi2().h(-3.0), Some(-1.0));
        assert_eq!(Divergence::chi2().deriv1_inverse(-2.5), Inverse::Floor);
    }

    #[test]
    fn sublevel_interval_endpoints() {
        let d = Divergence::reverse_kl();
        let (lo, hi) = d.sublevel_interval(0.5);
        assert!((d.eval(lo) - 0.5).abs() < 1e-12);
        assert!((d.eval(hi) - 0.5).abs() < 1e-12);
        assert!(lo < 1.0 && hi > 1.0);
        assert_eq!(Divergence::chi2().sublevel_interval(2.0).0, 0.0);
    }
}
