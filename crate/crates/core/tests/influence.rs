use dro_ci::influence::{estimate_moments, MomentSet, SecondOrder, ThirdOrder};
use dro_ci::{InfluenceModel, ModelSpec, Sample};
use proptest::prelude::*;

const MODELS: &[&str] = &[
    "smooth:identity",
    "smooth:z^2",
    "smooth:x+y^2",
    "vstat:product",
    "vstat:gamma-kernel",
    "vstat:sin-kernel",
    "optim:lsq-loss",
    "optim:sq-loss",
];

fn sample_for(spec: &ModelSpec, values: &[f64], n: usize) -> Sample {
    let d = spec.dim();
    let mut data: Vec<f64> = values.iter().cycle().take(n * d).copied().collect();
    if spec.name() == "lsq-loss" {
        // keep the regressor away from zero so Ê z² is well conditioned
        for row in data.chunks_exact_mut(2) {
            row[1] = 1.0 + row[1].abs();
        }
    }
    if spec.name() == "gamma-kernel" {
        data.iter_mut().for_each(|x| *x = x.abs());
    }
    Sample::new(data, d).unwrap()
}

fn rel(a: f64, b: f64, scale: f64) -> f64 {
    (a - b).abs() / b.abs().max(scale)
}

struct Naive {
    kappa2: f64,
    gamma: f64,
    mu4: f64,
    mu2a: f64,
    mu2b: f64,
    mu2c: f64,
    mu2d: f64,
    mu22: f64,
    mu12d: f64,
    mu3c: Option<f64>,
}

// Direct sums over index tuples, the definitions without any contraction.
fn naive_moments(m: &InfluenceModel) -> Naive {
    let n = m.n();
    let nf = n as f64;
    let f = m.if1();
    let mut out = Naive {
        kappa2: 0.0,
        gamma: 0.0,
        mu4: 0.0,
        mu2a: 0.0,
        mu2b: 0.0,
        mu2c: 0.0,
        mu2d: 0.0,
        mu22: 0.0,
        mu12d: 0.0,
        mu3c: m.has_if3().then_some(0.0),
    };
    for i in 0..n {
        out.kappa2 += f[i].powi(2) / nf;
        out.gamma += f[i].powi(3) / nf;
        out.mu4 += f[i].powi(4) / nf;
        out.mu2d += m.if2(i, i) / nf;
        out.mu12d += f[i] * m.if2(i, i) / nf;
        for j in 0..n {
            let e = m.if2(i, j);
            out.mu2b += f[i] * f[j] * f[j] * e / (nf * nf);
            out.mu2c += f[i] * f[j] * e / (nf * nf);
            out.mu22 += e * e / (nf * nf);
            for k in 0..n {
                out.mu2a += f[i] * f[k] * e * m.if2(j, k) / (nf * nf * nf);
                if let Some(acc) = out.mu3c.as_mut() {
                    *acc += f[i] * f[j] * f[k] * m.if3(i, j, k).unwrap() / (nf * nf * nf);
                }
            }
        }
    }
    out
}

#[test]
fn moments_match_naive_sums() {
    let mut seed = 0x1234_5678u64;
    let mut next = move || {
        seed = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        ((seed >> 11) as f64 / (1u64 << 53) as f64) * 4.0 - 2.0
    };
    for name in MODELS {
        let spec: ModelSpec = name.parse().unwrap();
        for n in [5, 12, 30] {
            let values: Vec<f64> = (0..n * spec.dim()).map(|_| next()).collect();
            let model = spec.build(&sample_for(&spec, &values, n)).unwrap();
            let fast = MomentSet::from_model(&model);
            let slow = naive_moments(&model);
            let s = fast.second;
            let scale = 1e-8 * (1.0 + slow.kappa2 * slow.kappa2);
            for (label, a, b) in [
                ("kappa2", s.kappa2, slow.kappa2),
                ("gamma", s.gamma, slow.gamma),
                ("mu4", s.mu4, slow.mu4),
                ("mu2a", s.mu2a, slow.mu2a),
                ("mu2b", s.mu2b, slow.mu2b),
                ("mu2c", s.mu2c, slow.mu2c),
                ("mu2d", s.mu2d, slow.mu2d),
                ("mu22", s.mu22, slow.mu22),
                ("mu12d", s.mu12d, slow.mu12d),
            ] {
                assert!(rel(a, b, scale) < 1e-10, "{name} n={n} {label}: {a} vs {b}");
            }
            match (fast.mu3c, slow.mu3c) {
                (Some(a), Some(b)) => assert!(rel(a, b, scale) < 1e-10, "{name} mu3c {a} vs {b}"),
                (None, None) => {}
                other => panic!("{name}: mu3c presence differs {other:?}"),
            }
        }
    }
}

// ψ at the reweighted empirical measure, computed from the definition of
// each functional.
fn weighted_psi(spec: &ModelSpec, sample: &Sample, w: &[f64]) -> f64 {
    let d = sample.dim();
    match spec.to_string().as_str() {
        "smooth:identity" | "smooth:z^2" | "smooth:x+y^2" => {
            let mut mean = vec![0.0; d];
            for (row, wi) in sample.rows().zip(w) {
                for (m, x) in mean.iter_mut().zip(row) {
                    *m += wi * x;
                }
            }
            spec.smooth_function().unwrap().value(&mean)
        }
        "optim:lsq-loss" => {
            let (mut yz, mut zz) = (0.0, 0.0);
            for (r, wi) in sample.rows().zip(w) {
                yz += wi * r[0] * r[1];
                zz += wi * r[1] * r[1];
            }
            let x = yz / zz;
            sample.rows().zip(w).map(|(r, wi)| wi * (r[0] - x * r[1]).powi(2)).sum()
        }
        "optim:sq-loss" => {
            let m: f64 = sample.rows().zip(w).map(|(r, wi)| wi * r[0]).sum();
            sample.rows().zip(w).map(|(r, wi)| wi * (r[0] - m).powi(2)).sum()
        }
        _ => {
            let k = spec.kernel().unwrap();
            let mut acc = 0.0;
            for (x, wx) in sample.rows().zip(w) {
                for (y, wy) in sample.rows().zip(w) {
                    acc += wx * wy * k.eval(x, y);
                }
            }
            acc
        }
    }
}

// Gateaux derivatives along δᵢ − P̂: the first is IF₁(i), the second IF₂(i, i).
#[test]
fn influence_functions_are_contamination_derivatives() {
    let values = [0.3, -1.1, 0.8, 1.7, -0.4, 0.9, -1.6, 0.2, 1.2, -0.7, 0.5, 1.4, -0.2, 0.6];
    for name in MODELS {
        let spec: ModelSpec = name.parse().unwrap();
        let n = 7;
        let sample = sample_for(&spec, &values, n);
        let model = spec.build(&sample).unwrap();
        let base = vec![1.0 / n as f64; n];
        assert!(rel(model.psi_hat(), weighted_psi(&spec, &sample, &base), 1.0) < 1e-10, "{name}");
        let h = 1e-4;
        for i in 0..n {
            let at = |eps: f64| {
                let w: Vec<f64> =
                    (0..n).map(|j| (1.0 - eps) * base[j] + if j == i { eps } else { 0.0 }).collect();
                weighted_psi(&spec, &sample, &w)
            };
            let (p, z, m) = (at(h), at(0.0), at(-h));
            let d1 = (p - m) / (2.0 * h);
            let d2 = (p - 2.0 * z + m) / (h * h);
            let s = 1.0 + model.psi_hat().abs();
            assert!((d1 - model.if1()[i]).abs() < 1e-6 * s, "{name} IF1({i}): {d1} vs {}", model.if1()[i]);
            assert!((d2 - model.if2(i, i)).abs() < 1e-3 * s, "{name} IF2({i},{i}): {d2} vs {}", model.if2(i, i));
        }
    }
}

#[test]
fn linear_function_has_no_higher_order_terms() {
    let spec: ModelSpec = "smooth:identity".parse().unwrap();
    let model = spec.build(&Sample::from_scalars(vec![0.5, -2.0, 3.25, 1.0]).unwrap()).unwrap();
    assert!(matches!(model.if2_repr(), SecondOrder::Zero));
    assert!(matches!(model.if3_repr(), ThirdOrder::Zero));
    for i in 0..4 {
        for j in 0..4 {
            assert_eq!(model.if2(i, j), 0.0);
            for k in 0..4 {
                assert_eq!(model.if3(i, j, k), Some(0.0));
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn canonical_invariants(
        which in 0..MODELS.len(),
        n in 5usize..25,
        values in prop::collection::vec(-3.0f64..3.0, 50),
    ) {
        let spec: ModelSpec = MODELS[which].parse().unwrap();
        let sample = sample_for(&spec, &values, n);
        let model = match spec.build(&sample) {
            Ok(m) => m,
            // a flat regressor column is a legitimate rejection
            Err(_) => return Ok(()),
        };
        let scale = 1.0 + model.if1().iter().map(|x| x.abs()).fold(0.0, f64::max);
        let tol = 1e-9 * scale * scale;
        let f = model.if1();
        prop_assert!(f.iter().sum::<f64>().abs() < tol * n as f64);
        for i in 0..n {
            let mut row = 0.0;
            for j in 0..n {
                let e = model.if2(i, j);
                prop_assert!((e - model.if2(j, i)).abs() < tol);
                row += e;
            }
            prop_assert!(row.abs() < tol * n as f64, "{}: row {i} sums to {row}", MODELS[which]);
        }
        if model.has_if3() && n <= 10 {
            for i in 0..n {
                for j in 0..n {
                    let mut fiber = 0.0;
                    for k in 0..n {
                        let t = model.if3(i, j, k).unwrap();
                        prop_assert!((t - model.if3(k, i, j).unwrap()).abs() < tol);
                        prop_assert!((t - model.if3(j, i, k).unwrap()).abs() < tol);
                        fiber += t;
                    }
                    prop_assert!(fiber.abs() < tol * n as f64);
                }
            }
        }

        let m = MomentSet::from_model(&model).second;
        let slack = 1e-12 * (1.0 + m.mu4);
        prop_assert!(m.mu4 + slack >= m.kappa2 * m.kappa2);
        prop_assert!(m.gamma * m.gamma <= m.kappa2 * m.mu4 + slack * (1.0 + m.kappa2));
        prop_assert!(m.mu22 >= 0.0 && m.mu2a >= -slack);
        if let Ok(est) = estimate_moments(&model) {
            prop_assert_eq!(est.second, m);
        }
    }
}
