/// A materialized order-`k` function on index tuples of an `n`-point sample.
#[derive(Debug, Clone, PartialEq)]
pub struct CanonicalTensor {
    n: usize,
    order: usize,
    values: Vec<f64>,
}

impl CanonicalTensor {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn get(&self, idx: &[usize]) -> f64 {
        debug_assert_eq!(idx.len(), self.order);
        self.values[idx.iter().fold(0, |acc, &i| acc * self.n + i)]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }
}

/// Puts a raw order-`k` influence function into canonical form: averages it
/// over slot permutations, then removes the empirical mean along every slot,
/// i.e. applies `∏ⱼ (1 − E_{Kⱼ∼P̂})`.
///
/// Orders 1 through 3 are supported.
pub fn canonicalize(order: usize, n: usize, raw: impl Fn(&[usize]) -> f64) -> CanonicalTensor {
    assert!((1..=3).contains(&order), "order {order} not supported");
    let len = n.pow(order as u32);
    let mut values = vec![0.0; len];
    let mut idx = vec![0usize; order];
    let perms: &[&[usize]] = match order {
        1 => &[&[0]],
        2 => &[&[0, 1], &[1, 0]],
        _ => &[&[0, 1, 2], &[0, 2, 1], &[1, 0, 2], &[1, 2, 0], &[2, 0, 1], &[2, 1, 0]],
    };
    let mut permuted = vec![0usize; order];
    for (flat, v) in values.iter_mut().enumerate() {
        let mut rem = flat;
        for slot in (0..order).rev() {
            idx[slot] = rem % n;
            rem /= n;
        }
        let mut s = 0.0;
        for p in perms {
            for (dst, &src) in permuted.iter_mut().zip(p.iter()) {
                *dst = idx[src];
            }
            s += raw(&permuted);
        }
        *v = s / perms.len() as f64;
    }

    // Center along each axis in turn; the projections commute.
    for axis in 0..order {
        let stride = n.pow((order - 1 - axis) as u32);
        let block = stride * n;
        for outer in (0..len).step_by(block) {
            for inner in 0..stride {
                let base = outer + inner;
                let mean = (0..n).map(|t| values[base + t * stride]).sum::<f64>() / n as f64;
                for t in 0..n {
                    values[base + t * stride] -= mean;
                }
            }
        }
    }
    CanonicalTensor { n, order, values }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn centers_first_order() {
        let x = [0.0, 1.0, 0.5, 0.5];
        let c = canonicalize(1, 4, |i| x[i[0]]);
        assert_eq!(c.values(), &[-0.5, 0.5, 0.0, 0.0]);
    }

    #[test]
    fn product_on_symmetric_points_is_already_canonical() {
        let x = [1.0, -1.0];
        let c = canonicalize(2, 2, |ij| x[ij[0]] * x[ij[1]]);
        assert_eq!(c.values(), &[1.0, -1.0, -1.0, 1.0]);
    }

    #[test]
    fn idempotent_and_marginal_zero() {
        let n = 5;
        let raw = |ijk: &[usize]| ((ijk[0] * 7 + ijk[1] * 3 + ijk[2] * ijk[2]) as f64).sin() + ijk[0] as f64;
        let once = canonicalize(3, n, raw);
        let twice = canonicalize(3, n, |ijk| once.get(ijk));
        for (a, b) in once.values().iter().zip(twice.values()) {
            assert!((a - b).abs() < 1e-12);
        }
        for i in 0..n {
            for j in 0..n {
                let sums = [
                    (0..n).map(|k| once.get(&[k, i, j])).sum::<f64>(),
                    (0..n).map(|k| once.get(&[i, k, j])).sum::<f64>(),
                    (0..n).map(|k| once.get(&[i, j, k])).sum::<f64>(),
                ];
                assert!(sums.iter().all(|s| s.abs() < 1e-12));
                for k in 0..n {
                    assert!((once.get(&[i, j, k]) - once.get(&[k, i, j])).abs() < 1e-12);
                }
            }
        }
    }
}
