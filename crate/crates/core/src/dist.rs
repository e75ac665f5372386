//! Probability vectors, the distribution families used in experiments, and
//! the fractional norms that measure how hard a distribution is to estimate.

use alloc::vec::Vec;
use core::cmp::Ordering;

use rand_core::RngCore;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::math;

/// Tolerance on `sum(probs) - 1` accepted by [`Distribution::from_probs`].
pub const SUM_TOLERANCE: f64 = 1e-12;

/// A probability vector over the alphabet `0..d`.
#[derive(Debug, Clone, PartialEq)]
pub struct Distribution {
    probs: Vec<f64>,
}

impl Distribution {
    /// Normalizes nonnegative weights into a distribution.
    pub fn from_weights(weights: &[f64]) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::Domain {
                name: "d",
                value: 0.0,
                expected: "d >= 1",
            });
        }
        for (index, &value) in weights.iter().enumerate() {
            if !value.is_finite() || value < 0.0 {
                return Err(Error::InvalidWeight { index, value });
            }
        }
        let total = math::sum(weights.iter().copied());
        if total <= 0.0 {
            return Err(Error::ZeroMass);
        }
        let probs: Vec<f64> = weights.iter().map(|w| w / total).collect();
        debug_assert!((math::sum(probs.iter().copied()) - 1.0).abs() <= SUM_TOLERANCE);
        Ok(Self { probs })
    }

    /// Wraps an already-normalized vector, rejecting anything that does not
    /// sum to one within [`SUM_TOLERANCE`].
    pub fn from_probs(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::Domain {
                name: "d",
                value: 0.0,
                expected: "d >= 1",
            });
        }
        for (index, &value) in probs.iter().enumerate() {
            if !value.is_finite() || value < 0.0 {
                return Err(Error::InvalidWeight { index, value });
            }
        }
        let sum = math::sum(probs.iter().copied());
        if (sum - 1.0).abs() > SUM_TOLERANCE {
            return Err(Error::NotNormalized { sum });
        }
        Ok(Self { probs })
    }

    pub fn uniform(d: usize) -> Result<Self> {
        check_alphabet(d)?;
        Ok(Self {
            probs: alloc::vec![1.0 / d as f64; d],
        })
    }

    pub fn point_mass(d: usize, symbol: usize) -> Result<Self> {
        check_alphabet(d)?;
        if symbol >= d {
            return Err(Error::Domain {
                name: "symbol",
                value: symbol as f64,
                expected: "0..d",
            });
        }
        let mut probs = alloc::vec![0.0; d];
        probs[symbol] = 1.0;
        Ok(Self { probs })
    }

    /// Truncated geometric distribution: mass at symbol `k` (1-based)
    /// proportional to `beta^k`. `beta = 1` is the uniform distribution.
    pub fn geometric(beta: f64, d: usize) -> Result<Self> {
        if !(beta > 0.0 && beta <= 1.0) {
            return Err(Error::Domain {
                name: "beta",
                value: beta,
                expected: "(0, 1]",
            });
        }
        check_alphabet(d)?;
        if beta == 1.0 {
            return Self::uniform(d);
        }
        // beta^(k-1) for k = 1..=d; the common factor beta cancels.
        let weights: Vec<f64> = (0..d).map(|k| libm::pow(beta, k as f64)).collect();
        Self::from_weights(&weights)
    }

    /// Truncated Zipf distribution: mass at symbol `k` (1-based) proportional
    /// to `k^-lambda`.
    pub fn zipf(lambda: f64, d: usize) -> Result<Self> {
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(Error::Domain {
                name: "lambda",
                value: lambda,
                expected: "(0, inf)",
            });
        }
        check_alphabet(d)?;
        let weights: Vec<f64> = (1..=d).map(|k| libm::pow(k as f64, -lambda)).collect();
        Self::from_weights(&weights)
    }

    /// An `s`-sparse distribution: a uniformly random support of size `s`
    /// with masses drawn as normalized standard exponentials.
    pub fn sparse_random<R: RngCore + ?Sized>(s: usize, d: usize, rng: &mut R) -> Result<Self> {
        check_alphabet(d)?;
        if s == 0 || s > d {
            return Err(Error::Domain {
                name: "s",
                value: s as f64,
                expected: "1..=d",
            });
        }
        // Partial Fisher-Yates: the first s entries become the support.
        let mut symbols: Vec<usize> = (0..d).collect();
        for i in 0..s {
            let j = i + math::uniform_below(rng, (d - i) as u64) as usize;
            symbols.swap(i, j);
        }
        let mut weights = alloc::vec![0.0; d];
        for &sym in &symbols[..s] {
            weights[sym] = math::exp1(rng);
        }
        Self::from_weights(&weights)
    }

    /// Flat-Dirichlet draw (normalized i.i.d. exponentials); full support.
    pub fn random_flat<R: RngCore + ?Sized>(d: usize, rng: &mut R) -> Result<Self> {
        check_alphabet(d)?;
        let weights: Vec<f64> = (0..d).map(|_| math::exp1(rng)).collect();
        Self::from_weights(&weights)
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn d(&self) -> usize {
        self.probs.len()
    }

    pub fn support_size(&self) -> usize {
        self.probs.iter().filter(|&&p| p > 0.0).count()
    }

    /// Generalized `q`-norm `(sum p_i^q)^(1/q)` for `q` in `(0, 1]`.
    pub fn norm(&self, q: f64) -> Result<f64> {
        norm_q(&self.probs, q)
    }

    /// `||p||_{1/2} = (sum sqrt(p_i))^2`.
    pub fn half_norm(&self) -> f64 {
        let s = math::sum(self.probs.iter().map(|&p| libm::sqrt(p)));
        s * s
    }

    /// `||p||_{1/3} = (sum cbrt(p_i))^3`.
    pub fn third_norm(&self) -> f64 {
        let s = math::sum(self.probs.iter().map(|&p| libm::cbrt(p)));
        s * s * s
    }

    /// Rényi entropy of order 1/2 in nats, `log ||p||_{1/2}`.
    pub fn renyi_entropy_half(&self) -> f64 {
        libm::log(self.half_norm()).max(0.0)
    }

    pub fn sorted(&self) -> SortedView {
        SortedView::new(&self.probs)
    }

    pub fn complexity_profile(&self) -> ComplexityProfile {
        let sorted = self.sorted();
        let (h_star, h_star_value) = sorted.max_h_squared_p();
        let half_norm = self.half_norm();
        ComplexityProfile {
            half_norm,
            third_norm: self.third_norm(),
            renyi_half: self.renyi_entropy_half(),
            h_star,
            h_star_value,
        }
    }
}

fn check_alphabet(d: usize) -> Result<()> {
    if d == 0 {
        Err(Error::Domain {
            name: "d",
            value: 0.0,
            expected: "d >= 1",
        })
    } else {
        Ok(())
    }
}

/// Generalized `q`-norm of a nonnegative vector, `q` in `(0, 1]`. Zero
/// entries contribute nothing.
pub fn norm_q(values: &[f64], q: f64) -> Result<f64> {
    if !(q > 0.0 && q <= 1.0) {
        return Err(Error::Domain {
            name: "q",
            value: q,
            expected: "(0, 1]",
        });
    }
    let power = |v: f64| -> f64 {
        if v <= 0.0 {
            0.0
        } else if q == 0.5 {
            libm::sqrt(v)
        } else if q == 1.0 {
            v
        } else {
            libm::pow(v, q)
        }
    };
    let s = math::sum(values.iter().map(|&v| power(v)));
    Ok(if q == 0.5 {
        s * s
    } else if q == 1.0 {
        s
    } else {
        libm::pow(s, 1.0 / q)
    })
}

/// Closed-form half-norm of the truncated geometric distribution,
/// `(1+sqrt(b))(1-sqrt(b)^d) / ((1-sqrt(b))(1+sqrt(b)^d))`, and `d` at `beta = 1`.
pub fn geometric_half_norm(beta: f64, d: usize) -> Result<f64> {
    if !(beta > 0.0 && beta <= 1.0) {
        return Err(Error::Domain {
            name: "beta",
            value: beta,
            expected: "(0, 1]",
        });
    }
    check_alphabet(d)?;
    if beta == 1.0 {
        return Ok(d as f64);
    }
    let r = libm::sqrt(beta);
    let rd = libm::pow(r, d as f64);
    Ok((1.0 + r) * (1.0 - rd) / ((1.0 - r) * (1.0 + rd)))
}

/// The probabilities in non-increasing order together with the permutation
/// mapping sorted positions back to symbols. Ties keep symbol order.
#[derive(Debug, Clone, PartialEq)]
pub struct SortedView {
    sorted_probs: Vec<f64>,
    perm: Vec<usize>,
}

impl SortedView {
    pub fn new(probs: &[f64]) -> Self {
        let mut perm: Vec<usize> = (0..probs.len()).collect();
        perm.sort_by(|&a, &b| match probs[b].total_cmp(&probs[a]) {
            Ordering::Equal => a.cmp(&b),
            other => other,
        });
        let sorted_probs = perm.iter().map(|&i| probs[i]).collect();
        Self { sorted_probs, perm }
    }

    pub fn sorted_probs(&self) -> &[f64] {
        &self.sorted_probs
    }

    /// `perm()[i]` is the symbol holding the `(i+1)`-th largest mass.
    pub fn perm(&self) -> &[usize] {
        &self.perm
    }

    /// `max_h h^2 p_(h)` over 1-based ranks `h`, returning `(h, value)`;
    /// ties go to the smallest `h`.
    pub fn max_h_squared_p(&self) -> (usize, f64) {
        let mut best = (1, f64::NEG_INFINITY);
        for (i, &p) in self.sorted_probs.iter().enumerate() {
            let h = i + 1;
            let v = (h as f64) * (h as f64) * p;
            if v > best.1 {
                best = (h, v);
            }
        }
        best
    }
}

/// Local-complexity summary of a distribution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ComplexityProfile {
    pub half_norm: f64,
    pub third_norm: f64,
    pub renyi_half: f64,
    /// 1-based rank maximizing `h^2 p_(h)`.
    pub h_star: usize,
    pub h_star_value: f64,
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand_chacha::rand_core::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn normalizes_weights() {
        assert_eq!(
            Distribution::from_weights(&[2.0, 2.0]).unwrap().probs(),
            &[0.5, 0.5]
        );
        assert_eq!(
            Distribution::from_weights(&[1.0, 0.0, 0.0])
                .unwrap()
                .probs(),
            &[1.0, 0.0, 0.0]
        );
        assert_eq!(
            Distribution::from_weights(&[1.0, 2.0, 1.0])
                .unwrap()
                .probs(),
            &[0.25, 0.5, 0.25]
        );
    }

    #[test]
    fn rejects_bad_weights() {
        assert_eq!(
            Distribution::from_weights(&[0.0, 0.0]),
            Err(Error::ZeroMass)
        );
        assert_eq!(
            Distribution::from_weights(&[1.0, -1.0]),
            Err(Error::InvalidWeight {
                index: 1,
                value: -1.0
            })
        );
        assert!(matches!(
            Distribution::from_weights(&[1.0, 2.0, f64::NAN]),
            Err(Error::InvalidWeight { index: 2, .. })
        ));
        assert!(Distribution::from_weights(&[f64::INFINITY]).is_err());
        assert!(Distribution::from_weights(&[]).is_err());
        assert!(matches!(
            Distribution::from_probs(alloc::vec![0.5, 0.4]),
            Err(Error::NotNormalized { .. })
        ));
    }

    #[test]
    fn norms_of_simple_cases() {
        let u = Distribution::uniform(4).unwrap();
        assert!(close(u.norm(0.5).unwrap(), 4.0, 1e-12));
        let pm = Distribution::point_mass(7, 3).unwrap();
        for q in [0.1, 1.0 / 3.0, 0.5, 0.9, 1.0] {
            assert!(close(pm.norm(q).unwrap(), 1.0, 1e-12));
        }
        assert!(u.norm(0.0).is_err());
        assert!(u.norm(1.5).is_err());
        assert!(u.norm(-0.5).is_err());
    }

    #[test]
    fn zero_entries_do_not_poison_norm() {
        let p = Distribution::from_weights(&[1.0, 0.0, 1.0]).unwrap();
        let v = p.norm(0.3).unwrap();
        assert!(v.is_finite());
        assert!(close(
            v,
            libm::pow(2.0 * libm::pow(0.5, 0.3), 1.0 / 0.3),
            1e-12
        ));
    }

    #[test]
    fn geometric_half_norm_matches_closed_form() {
        for beta in [0.2, 0.5, 0.8, 0.99] {
            for d in [10, 100, 1000] {
                let p = Distribution::geometric(beta, d).unwrap();
                let numeric = p.norm(0.5).unwrap();
                let closed = geometric_half_norm(beta, d).unwrap();
                assert!(
                    close(numeric, closed, 1e-9),
                    "beta={beta} d={d}: {numeric} vs {closed}"
                );
            }
        }
    }

    #[test]
    fn renyi_half_values() {
        assert_eq!(
            Distribution::point_mass(5, 0).unwrap().renyi_entropy_half(),
            0.0
        );
        let u = Distribution::uniform(37).unwrap();
        assert!(close(u.renyi_entropy_half(), libm::log(37.0), 1e-12));
        let half = Distribution::from_weights(&[1.0, 1.0]).unwrap();
        assert!(close(half.renyi_entropy_half(), libm::log(2.0), 1e-12));
    }

    #[test]
    fn complexity_profile_examples() {
        let u = Distribution::uniform(10).unwrap().complexity_profile();
        assert_eq!(u.h_star, 10);
        assert!(close(u.h_star_value, 10.0, 1e-12));

        let p =
            Distribution::from_weights(&[1.0 / 16.0, 1.0 / 8.0, 0.5, 1.0 / 16.0, 0.25]).unwrap();
        let sorted = p.sorted();
        assert_eq!(sorted.sorted_probs(), &[0.5, 0.25, 0.125, 0.0625, 0.0625]);
        assert_eq!(sorted.perm(), &[2, 4, 1, 0, 3]);
        let prof = p.complexity_profile();
        assert_eq!(prof.h_star, 5);
        assert_eq!(prof.h_star_value, 25.0 / 16.0);

        let pm = Distribution::point_mass(4, 2).unwrap().complexity_profile();
        assert_eq!(pm.h_star, 1);
        assert_eq!(pm.h_star_value, 1.0);
    }

    #[test]
    fn ties_in_h_star_go_to_smallest_rank() {
        // h^2 p = 4/9, 4/9, 1
        let view = SortedView::new(&[4.0 / 9.0, 1.0 / 9.0, 1.0 / 9.0]);
        let (h, _) = view.max_h_squared_p();
        assert_eq!(h, 3);
        // h^2 p = 0.8, 0.8
        let view = SortedView::new(&[0.8, 0.2]);
        assert_eq!(view.max_h_squared_p(), (1, 0.8));
        let view = SortedView::new(&[0.25, 0.25]);
        assert_eq!(view.max_h_squared_p().0, 2);
        // h^2 p = 1, 1
        let view = SortedView::new(&[1.0, 0.25]);
        assert_eq!(view.max_h_squared_p(), (1, 1.0));
    }

    #[test]
    fn geometric_examples() {
        assert_eq!(
            Distribution::geometric(1.0, 5).unwrap(),
            Distribution::uniform(5).unwrap()
        );
        let p = Distribution::geometric(0.5, 2).unwrap();
        assert!(close(p.probs()[0], 2.0 / 3.0, 1e-15));
        assert!(close(p.probs()[1], 1.0 / 3.0, 1e-15));
        let big = Distribution::geometric(0.8, 1000).unwrap();
        assert!(close(math::sum(big.probs().iter().copied()), 1.0, 1e-12));
        assert!(Distribution::geometric(0.0, 5).is_err());
        assert!(Distribution::geometric(1.01, 5).is_err());
        assert!(Distribution::geometric(-0.5, 5).is_err());
    }

    #[test]
    fn zipf_examples() {
        assert_eq!(Distribution::zipf(1.7, 1).unwrap().probs(), &[1.0]);
        let p = Distribution::zipf(1.0, 3).unwrap();
        for (got, want) in p.probs().iter().zip([6.0 / 11.0, 3.0 / 11.0, 2.0 / 11.0]) {
            assert!(close(*got, want, 1e-15));
        }
        assert!(Distribution::zipf(0.0, 3).is_err());
        assert!(Distribution::zipf(-1.0, 3).is_err());
    }

    #[test]
    fn zipf_above_two_has_bounded_half_norm() {
        // limit is zeta(3/2)^2 / zeta(3)
        let limit = 2.612_375_348_685_488_f64.powi(2) / 1.202_056_903_159_594;
        let a = Distribution::zipf(3.0, 1000).unwrap().half_norm();
        let b = Distribution::zipf(3.0, 100_000).unwrap().half_norm();
        assert!(a < b && b < limit, "{a} {b} {limit}");
        assert!(b / a < 1.05, "{a} vs {b}");
    }

    #[test]
    fn zipf_half_norm_regimes() {
        // lambda = 2: ~ log^2 d; lambda = 1.5: ~ d^0.5; lambda = 0.5: ~ d.
        type Scale = fn(f64) -> f64;
        let cases: [(f64, Scale); 3] = [
            (2.0, |d| libm::log(d) * libm::log(d)),
            (1.5, libm::sqrt),
            (0.5, |d| d),
        ];
        for (lambda, scale) in cases {
            let ratios: Vec<f64> = [100usize, 1000, 10_000]
                .iter()
                .map(|&d| Distribution::zipf(lambda, d).unwrap().half_norm() / scale(d as f64))
                .collect();
            let lo = ratios.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = ratios.iter().cloned().fold(0.0, f64::max);
            assert!(hi / lo <= 4.0, "lambda={lambda}: {ratios:?}");
        }
    }

    #[test]
    fn sparse_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let p = Distribution::sparse_random(1, 50, &mut rng).unwrap();
        assert_eq!(p.support_size(), 1);
        assert_eq!(p.probs().iter().cloned().fold(0.0, f64::max), 1.0);
        let full = Distribution::sparse_random(20, 20, &mut rng).unwrap();
        assert_eq!(full.support_size(), 20);
        assert!(Distribution::sparse_random(0, 5, &mut rng).is_err());
        assert!(Distribution::sparse_random(6, 5, &mut rng).is_err());
    }

    fn random_dist() -> impl Strategy<Value = Distribution> {
        (2usize..200, any::<u64>()).prop_map(|(d, seed)| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            Distribution::random_flat(d, &mut rng).unwrap()
        })
    }

    proptest! {
        #[test]
        fn generated_distributions_are_valid(p in random_dist()) {
            prop_assert!(p.probs().iter().all(|&x| x >= 0.0));
            prop_assert!((math::sum(p.probs().iter().copied()) - 1.0).abs() <= SUM_TOLERANCE);
        }

        #[test]
        fn norm_is_monotone_in_q(p in random_dist(), a in 0.05f64..1.0, b in 0.05f64..1.0) {
            let (q1, q2) = if a < b { (a, b) } else { (b, a) };
            let n1 = p.norm(q1).unwrap();
            let n2 = p.norm(q2).unwrap();
            prop_assert!(n1 >= n2 * (1.0 - 1e-12));
            prop_assert!(n2 >= 1.0 - 1e-12);
        }

        #[test]
        fn sparse_half_norm_at_most_support(s in 1usize..30, extra in 0usize..100, seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let p = Distribution::sparse_random(s, s + extra, &mut rng).unwrap();
            prop_assert_eq!(p.support_size(), s);
            prop_assert!(p.half_norm() <= s as f64 * (1.0 + 1e-12));
        }

        #[test]
        fn h_star_sandwich(p in random_dist()) {
            let prof = p.complexity_profile();
            prop_assert!(prof.half_norm >= prof.h_star_value);
            for delta in [0.5f64, 1.0] {
                let c = libm::pow(delta / (1.0 + delta), 2.0 / (1.0 + delta));
                let lower = c * p.norm((1.0 + delta) / 2.0).unwrap();
                prop_assert!(prof.h_star_value >= lower);
            }
            prop_assert!(prof.half_norm >= 1.0 - 1e-12 && prof.half_norm <= p.d() as f64 * (1.0 + 1e-12));
            prop_assert!(prof.renyi_half >= 0.0 && prof.renyi_half <= libm::log(p.d() as f64) + 1e-12);
        }
    }
}
