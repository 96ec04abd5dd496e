use dro_ci::correction::{
    a_eval, chi2_quantile_1df, confidence_interval, corrected_q, normal_half_width, normal_quantile, q_exact,
    select_q, standardize, t_factors, BallSizeRule, CoveragePolynomial, MomentSource, RuleKind, SolverKind, T5Sign,
};
use dro_ci::dro::{solve_dro_exact, Direction};
use dro_ci::influence::{estimate_moments, smooth_model, MomentSet, SecondOrderMoments, SmoothFunction};
use dro_ci::{Divergence, Error, InfluenceModel, ModelSpec, Sample};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF, Normal};

fn normal_sample(n: usize, dim: usize, seed: u64) -> Sample {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = (0..n * dim).map(|_| rng.sample::<f64, _>(rand_distr::StandardNormal)).collect();
    Sample::new(data, dim).unwrap()
}

fn model(spec: &str, n: usize, seed: u64) -> InfluenceModel {
    let spec: ModelSpec = spec.parse().unwrap();
    let mut s = normal_sample(n, spec.dim(), seed);
    if spec.name() == "gamma-kernel" {
        s = Sample::from_scalars(s.as_slice().iter().map(|x| x.abs() * 2.0).collect()).unwrap();
    }
    spec.build(&s).unwrap()
}

fn random_moments(rng: &mut ChaCha8Rng) -> SecondOrderMoments {
    let mut u = || -> f64 { rng.gen_range(-3.0..3.0) };
    SecondOrderMoments {
        kappa2: 0.1 + u().abs(),
        gamma: u(),
        mu4: u().abs() + 1.0,
        mu2a: u(),
        mu2b: u(),
        mu2c: u(),
        mu2d: u(),
        mu22: u().abs(),
        mu12d: u(),
    }
}

fn standard_normal_mean() -> SecondOrderMoments {
    SecondOrderMoments { kappa2: 1.0, mu4: 3.0, ..Default::default() }
}

/// Population moments of `x + y²` at the standard bivariate normal:
/// IF₁ = X₁, IF₂(X, Y) = 2 X₂ Y₂.
fn linear_plus_square_normal() -> SecondOrderMoments {
    SecondOrderMoments { kappa2: 1.0, mu4: 3.0, mu2d: 2.0, mu22: 4.0, ..Default::default() }
}

#[test]
fn quantiles_agree_with_statrs() {
    let normal = Normal::new(0.0, 1.0).unwrap();
    let chi2 = ChiSquared::new(1.0).unwrap();
    for k in 1..2000 {
        let p = k as f64 / 2000.0;
        let z = normal_quantile(p).unwrap();
        assert!((z - normal.inverse_cdf(p)).abs() <= 1e-13 * (1.0 + z.abs()), "p = {p}");
        // statrs' own cdf is good to about 1e−12
        assert!((normal.cdf(z) - p).abs() < 1e-10, "p = {p}");
        let q = chi2_quantile_1df(p).unwrap();
        assert!((chi2.cdf(q) - p).abs() < 1e-9, "nominal = {p}");
    }
    for p in [1e-10, 1e-7, 1e-4, 1.0 - 1e-4, 1.0 - 1e-7, 1.0 - 1e-10] {
        let z = normal_quantile(p).unwrap();
        let tail = if p < 0.5 { normal.cdf(z) } else { normal.sf(z) };
        let want = if p < 0.5 { p } else { 1.0 - p };
        assert!(((tail - want) / want).abs() < 1e-9, "p = {p}");
    }
    assert!((chi2_quantile_1df(0.95).unwrap() - 3.841459).abs() < 5e-7);
    assert!((chi2_quantile_1df(0.90).unwrap() - 2.705543).abs() < 5e-7);
    assert!((q_exact(0.95, &Divergence::reverse_kl()).unwrap() - 3.841459).abs() < 5e-7);
    assert!((q_exact(0.95, &Divergence::chi2()).unwrap() - 7.682918).abs() < 5e-7);
    for bad in [0.0, 1.0, -0.2, f64::NAN] {
        assert!(matches!(chi2_quantile_1df(bad), Err(Error::DomainError(_))));
    }
}

#[test]
fn mean_model_reduces_to_classical_factor() {
    let rkl = Divergence::reverse_kl();
    assert_eq!(a_eval(0.0, &rkl, &standard_normal_mean()), 0.0);
    for x in [0.3, 1.0, 1.96, 4.0] {
        assert!((a_eval(x, &rkl, &standard_normal_mean()) + 1.5 * x).abs() < 1e-14);
    }
    // −A(x)/x = μ₄/(2κ₂²) − γ²/(3κ₂³) for a mean, with any κ₂, γ, μ₄
    let m = SecondOrderMoments { kappa2: 2.0, gamma: 1.3, mu4: 11.0, ..Default::default() };
    let want = 11.0 / 8.0 - 1.3 * 1.3 / 24.0;
    assert!((a_eval(1.7, &rkl, &m) / -1.7 - want).abs() < 1e-14);
}

#[test]
fn correctable_divergences_have_linear_a() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let candidates = [
        Divergence::reverse_kl(),
        Divergence::kl(),
        Divergence::chi2(),
        Divergence::from_name("cressie-read", Some(-0.5)).unwrap(),
        Divergence::from_name("cressie-read", Some(2.0)).unwrap(),
    ];
    let correctable: Vec<_> = candidates.iter().filter(|d| d.is_bartlett_correctable()).collect();
    assert_eq!(correctable.len(), 1);
    for _ in 0..100 {
        let m = random_moments(&mut rng);
        for phi in &correctable {
            let p = CoveragePolynomial::new(phi, &m);
            let scale = p.a1.abs().max(1.0);
            assert!(p.a3.abs() <= 1e-12 * scale && p.a5.abs() <= 1e-12 * scale, "{p:?}");
        }
        // and a non-correctable one keeps its cubic term in general
        assert!(CoveragePolynomial::new(&Divergence::kl(), &m).a3.abs() > 1e-8);
    }
}

#[test]
fn corrected_q_examples() {
    let rkl = Divergence::reverse_kl();
    let c = corrected_q(0.95, &rkl, &standard_normal_mean(), 30).unwrap();
    assert!(!c.clamped);
    assert!((c.q - 4.033532).abs() < 5e-7);
    assert!((c.q - chi2_quantile_1df(0.95).unwrap() * (1.0 + 1.5 / 30.0)).abs() < 1e-12);

    // A ≡ 0 leaves the first-order ball size unchanged
    let flat = SecondOrderMoments { kappa2: 1.7, ..Default::default() };
    assert_eq!(corrected_q(0.9, &rkl, &flat, 12).unwrap().q, q_exact(0.9, &rkl).unwrap());

    let chi2 = chi2_quantile_1df(0.95).unwrap();
    for n in [30, 50] {
        let q = corrected_q(0.95, &rkl, &linear_plus_square_normal(), n).unwrap().q;
        assert!((q - chi2 * (1.0 + 0.5 / n as f64)).abs() < 1e-12);
    }

    // strong skewness makes A positive and large
    let wild = SecondOrderMoments { kappa2: 1.0, gamma: 20.0, mu4: 3.0, ..Default::default() };
    let c = corrected_q(0.95, &rkl, &wild, 2).unwrap();
    assert!(c.clamped && (c.q - 0.1 * chi2).abs() < 1e-15);
    assert!(matches!(corrected_q(0.95, &rkl, &wild, 1), Err(Error::DomainError(_))));
}

#[test]
fn corrected_q_ignores_third_order_moment() {
    let m = MomentSet { second: linear_plus_square_normal(), mu3c: Some(0.0) };
    let other = MomentSet { mu3c: Some(17.5), ..m };
    let absent = MomentSet { mu3c: None, ..m };
    let rkl = Divergence::reverse_kl();
    let qs: Vec<f64> = [m, other, absent]
        .into_iter()
        .map(|o| select_q(&BallSizeRule::theoretical(0.95, o), &rkl, None, 40).unwrap().q)
        .collect();
    assert!(qs[0] == qs[1] && qs[1] == qs[2]);
}

#[test]
fn dicc_rule_on_linear_plus_square() {
    let s = normal_sample(400_000, 2, 3);
    let f = dro_ci::influence::LinearPlusSquare;
    let std = standardize(&s, &f).unwrap();
    let ours = t_factors(&std, T5Sign::Corrected).unwrap();
    let prior = t_factors(&std, T5Sign::PriorLiterature).unwrap();
    // sampling error only; the population values are 1/2 and 9/2
    assert!((ours.factor - 0.5).abs() < 0.05, "{ours:?}");
    assert!((prior.factor - 4.5).abs() < 0.05, "{prior:?}");

    let rkl = Divergence::reverse_kl();
    let exact_prior = dro_ci::correction::TFactors { t1: 0.0, t2: 0.0, t3: 3.0, t4: 0.0, t5: 12.0, factor: 4.5 };
    let sel = select_q(&BallSizeRule::dicc(0.95, exact_prior), &rkl, None, 30).unwrap();
    assert_eq!(sel.source, MomentSource::SmoothFactors);
    assert!((sel.q - chi2_quantile_1df(0.95).unwrap() * (1.0 + 4.5 / 30.0)).abs() < 1e-12);
    assert!(sel.warnings.is_empty());
}

#[test]
fn rule_validation() {
    let mut r = BallSizeRule::exact(0.95);
    r.oracle_moments = Some(MomentSet::default());
    assert!(matches!(r.validate(), Err(Error::ConfigError(_))));
    assert!(BallSizeRule::exact(1.0).validate().is_err());
    let r = BallSizeRule { kind: RuleKind::BartlettTheoretical, ..BallSizeRule::exact(0.9) };
    assert!(r.validate().is_err());
    assert_eq!("tb2".parse::<RuleKind>().unwrap(), RuleKind::BartlettDicc);
    assert!("xx".parse::<RuleKind>().is_err());
}

#[test]
fn linear_chi2_gives_the_normal_interval() {
    let m = model("smooth:identity", 60, 21);
    let k2 = estimate_moments(&m).unwrap().second.kappa2;
    let half = normal_half_width(k2, 60, 0.95).unwrap();
    let z = 1.959963984540054;
    assert!((half - z * (k2 / 60.0).sqrt()).abs() < 1e-12);
    for solver in [SolverKind::Exact, SolverKind::Expansion] {
        let ci = confidence_interval(&m, &Divergence::chi2(), &BallSizeRule::exact(0.95), solver).unwrap();
        assert!((ci.lower - (m.psi_hat() - half)).abs() < 1e-9, "{solver}");
        assert!((ci.upper - (m.psi_hat() + half)).abs() < 1e-9, "{solver}");
        assert!(ci.warnings.is_empty());
    }
}

#[test]
fn tiny_level_collapses_the_interval() {
    let m = model("vstat:gamma-kernel", 20, 4);
    let ci = confidence_interval(&m, &Divergence::reverse_kl(), &BallSizeRule::exact(1e-9), SolverKind::Exact).unwrap();
    assert!(ci.upper - ci.lower < 1e-6 * (1.0 + m.psi_hat().abs()));
    assert!(ci.lower <= m.psi_hat() && m.psi_hat() <= ci.upper);
}

#[test]
fn estimated_rule_widens_when_q_grows() {
    let m = model("smooth:identity", 25, 8);
    let rkl = Divergence::reverse_kl();
    let el = confidence_interval(&m, &rkl, &BallSizeRule::exact(0.95), SolverKind::Exact).unwrap();
    let eb = confidence_interval(&m, &rkl, &BallSizeRule::estimated(0.95), SolverKind::Exact).unwrap();
    assert_eq!(eb.moment_source, MomentSource::Sample);
    assert!(eb.q_used > el.q_used);
    assert!(eb.lower <= el.lower && el.upper <= eb.upper);
}

/// Random quadratic `θ(z) = bᵀz + ½ zᵀHz` in `d` dimensions.
struct Quadratic {
    b: Vec<f64>,
    h: Vec<f64>,
}

impl SmoothFunction for Quadratic {
    fn name(&self) -> &str {
        "quadratic"
    }
    fn dim(&self) -> usize {
        self.b.len()
    }
    fn value(&self, z: &[f64]) -> f64 {
        let d = self.b.len();
        let mut v = 0.0;
        for i in 0..d {
            v += self.b[i] * z[i];
            for j in 0..d {
                v += 0.5 * self.h[i * d + j] * z[i] * z[j];
            }
        }
        v
    }
    fn gradient(&self, z: &[f64]) -> Vec<f64> {
        let d = self.b.len();
        (0..d).map(|i| self.b[i] + (0..d).map(|j| self.h[i * d + j] * z[j]).sum::<f64>()).collect()
    }
    fn hessian(&self, _: &[f64]) -> Option<Vec<f64>> {
        Some(self.h.clone())
    }
    fn third(&self, _: &[f64]) -> Option<Vec<f64>> {
        Some(vec![0.0; self.b.len().pow(3)])
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn a_is_odd(seed in 0u64..1_000_000, x in -5.0f64..5.0, div in 0usize..4) {
        let phi = [Divergence::reverse_kl(), Divergence::kl(), Divergence::chi2(),
                   Divergence::from_name("cressie-read", Some(0.7)).unwrap()][div];
        let m = random_moments(&mut ChaCha8Rng::seed_from_u64(seed));
        prop_assert_eq!(a_eval(-x, &phi, &m), -a_eval(x, &phi, &m));
    }

    /// The moment form of −A(x)/x and the t-factor form agree on the
    /// empirical distribution of a random skewed sample and a random
    /// quadratic; the two sides are computed from unrelated ingredients.
    #[test]
    fn t_factors_match_coverage_polynomial(seed in 0u64..1_000_000, d in 1usize..4, n in 8usize..40) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data: Vec<f64> = (0..n * d).map(|_| { let e: f64 = rng.sample(rand_distr::Exp1); e * e + rng.gen_range(-1.0..1.0) }).collect();
        let sample = Sample::new(data, d).unwrap();
        let b: Vec<f64> = (0..d).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let mut h = vec![0.0; d * d];
        for i in 0..d {
            for j in 0..=i {
                let v = rng.gen_range(-1.5..1.5);
                h[i * d + j] = v;
                h[j * d + i] = v;
            }
        }
        let f = Quadratic { b, h };
        let std = match standardize(&sample, &f) {
            Ok(s) => s,
            Err(Error::SingularWhitening) => return Ok(()),
            Err(e) => panic!("{e}"),
        };
        prop_assume!(std.grad.iter().map(|g| g * g).sum::<f64>() > 1e-3);
        let t = t_factors(&std, T5Sign::Corrected).unwrap();
        let moments = MomentSet::from_model(&smooth_model(&sample, &f).unwrap()).second;
        let x = 1.3;
        let from_a = -a_eval(x, &Divergence::reverse_kl(), &moments) / x;
        prop_assert!((from_a - t.factor).abs() <= 1e-9 * (1.0 + t.factor.abs()), "{} vs {}", from_a, t.factor);
    }
}

const SPECS: [&str; 5] = ["smooth:identity", "smooth:x+y^2", "vstat:gamma-kernel", "optim:lsq-loss", "optim:sq-loss"];

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn intervals_nest_in_q(seed in 0u64..1_000_000, which in 0usize..5, n in 8usize..30, q1 in 0.2f64..4.0, dq in 0.05f64..3.0) {
        let m = model(SPECS[which], n, seed);
        prop_assume!(estimate_moments(&m).is_ok());
        let phi = Divergence::reverse_kl();
        let lo1 = solve_dro_exact(&m, &phi, q1, Direction::Min).unwrap().objective;
        let hi1 = solve_dro_exact(&m, &phi, q1, Direction::Max).unwrap().objective;
        let lo2 = solve_dro_exact(&m, &phi, q1 + dq, Direction::Min).unwrap().objective;
        let hi2 = solve_dro_exact(&m, &phi, q1 + dq, Direction::Max).unwrap().objective;
        prop_assert!(lo2 <= lo1 + 1e-10 && hi1 <= hi2 + 1e-10);
    }

    #[test]
    fn interval_covers_plug_in(seed in 0u64..1_000_000, which in 0usize..5, n in 8usize..30, level in 0.5f64..0.99, method in 0usize..2, solver in 0usize..2) {
        let m = model(SPECS[which], n, seed);
        prop_assume!(estimate_moments(&m).is_ok());
        let rule = [BallSizeRule::exact(level), BallSizeRule::estimated(level)][method].clone();
        let solver = [SolverKind::Exact, SolverKind::Expansion][solver];
        let ci = confidence_interval(&m, &Divergence::reverse_kl(), &rule, solver).unwrap();
        prop_assert!(ci.lower <= ci.psi_hat && ci.psi_hat <= ci.upper);
        prop_assert!(ci.q_used > 0.0);
    }
}
