//! Inverse-CDF sampling of i.i.d. client data.

use alloc::vec::Vec;

use rand_core::RngCore;

use crate::dist::Distribution;
use crate::math;

/// Precomputed cumulative table for one distribution.
#[derive(Debug, Clone)]
pub struct Sampler {
    cdf: Vec<f64>,
    // Last symbol with positive mass; absorbs draws above a CDF total that
    // rounded below 1.
    last: usize,
}

impl Sampler {
    pub fn new(p: &Distribution) -> Self {
        let mut cdf = Vec::with_capacity(p.d());
        let mut acc = 0.0;
        let mut comp = 0.0;
        for &x in p.probs() {
            // running compensated sum keeps the table within an ulp of exact
            let t = acc + x;
            if acc.abs() >= x.abs() {
                comp += (acc - t) + x;
            } else {
                comp += (x - t) + acc;
            }
            acc = t;
            cdf.push(acc + comp);
        }
        let last = p
            .probs()
            .iter()
            .rposition(|&x| x > 0.0)
            .expect("distribution has positive mass");
        Self { cdf, last }
    }

    pub fn draw<R: RngCore + ?Sized>(&self, rng: &mut R) -> usize {
        let u = math::uniform01(rng);
        // First symbol whose cumulative mass exceeds u; zero-mass symbols
        // share the preceding CDF value and are never selected.
        let idx = self.cdf.partition_point(|&c| c <= u);
        idx.min(self.last)
    }

    pub fn fill<R: RngCore + ?Sized>(&self, rng: &mut R, out: &mut [usize]) {
        for slot in out {
            *slot = self.draw(rng);
        }
    }
}

/// `count` i.i.d. draws from `p`.
pub fn sample<R: RngCore + ?Sized>(p: &Distribution, count: usize, rng: &mut R) -> Vec<usize> {
    let sampler = Sampler::new(p);
    let mut out = alloc::vec![0; count];
    sampler.fill(rng, &mut out);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_chacha::rand_core::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use statrs::distribution::{ChiSquared, ContinuousCDF};

    #[test]
    fn point_mass_always_returns_its_symbol() {
        let p = Distribution::point_mass(5, 2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(sample(&p, 5, &mut rng), alloc::vec![2; 5]);
    }

    #[test]
    fn empty_request() {
        let p = Distribution::uniform(3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!(sample(&p, 0, &mut rng).is_empty());
    }

    #[test]
    fn fair_coin_frequency() {
        let p = Distribution::uniform(2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let xs = sample(&p, 100_000, &mut rng);
        let freq = xs.iter().filter(|&&x| x == 0).count() as f64 / xs.len() as f64;
        assert!((freq - 0.5).abs() < 0.01, "{freq}");
    }

    #[test]
    fn zero_mass_symbols_are_never_drawn() {
        let p = Distribution::from_weights(&[0.0, 1.0, 0.0, 2.0, 0.0]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let xs = sample(&p, 20_000, &mut rng);
        assert!(xs.iter().all(|&x| x == 1 || x == 3));
    }

    #[test]
    fn reproducible_for_a_seed() {
        let p = Distribution::geometric(0.7, 20).unwrap();
        let a = sample(&p, 1000, &mut ChaCha8Rng::seed_from_u64(9));
        let b = sample(&p, 1000, &mut ChaCha8Rng::seed_from_u64(9));
        assert_eq!(a, b);
    }

    #[test]
    fn chi_square_goodness_of_fit() {
        let p = Distribution::geometric(0.8, 20).unwrap();
        let draws = 100_000;
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let xs = sample(&p, draws, &mut rng);
        let mut counts = alloc::vec![0usize; p.d()];
        for x in xs {
            counts[x] += 1;
        }
        let stat: f64 = counts
            .iter()
            .zip(p.probs())
            .map(|(&c, &pj)| {
                let e = pj * draws as f64;
                (c as f64 - e).powi(2) / e
            })
            .sum();
        let dof = (p.d() - 1) as f64;
        let critical = ChiSquared::new(dof).unwrap().inverse_cdf(1.0 - 1e-6);
        assert!(stat < critical, "chi2 = {stat}, critical = {critical}");
    }
}
