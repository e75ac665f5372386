//! Uniform grouping: the non-interactive localization round.
//!
//! Symbols are cut into `M = ceil(d / (2^b - 1))` contiguous blocks and
//! client `i` of the round watches block `i mod M`. A client whose sample
//! falls inside its block sends the sample's 1-based rank within the block;
//! everyone else sends `0`.

use alloc::vec::Vec;
use core::ops::Range;

use rand_core::RngCore;

use crate::dist::Distribution;
use crate::error::{Error, Result};
use crate::loss::Losses;
use crate::sampler::Sampler;
use crate::{check_bits, slots_per_message};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Round1Plan {
    d: usize,
    bits: u32,
    width: usize,
    num_groups: usize,
    n_clients: usize,
}

impl Round1Plan {
    pub fn new(n_clients: usize, d: usize, b: u32) -> Result<Self> {
        check_bits(b)?;
        if d == 0 {
            return Err(Error::Domain {
                name: "d",
                value: 0.0,
                expected: "d >= 1",
            });
        }
        let width = slots_per_message(b);
        let num_groups = d.div_ceil(width);
        if n_clients < num_groups {
            return Err(Error::TooFewClients {
                clients: n_clients,
                groups: num_groups,
            });
        }
        Ok(Self {
            d,
            bits: b,
            width,
            num_groups,
            n_clients,
        })
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn bits(&self) -> u32 {
        self.bits
    }

    /// Nominal block width `2^b - 1`; the last block may be narrower.
    pub fn group_width(&self) -> usize {
        self.width
    }

    pub fn num_groups(&self) -> usize {
        self.num_groups
    }

    pub fn n_clients(&self) -> usize {
        self.n_clients
    }

    /// Group watched by the round's `client`-th participant (round-robin).
    pub fn group_of(&self, client: usize) -> usize {
        client % self.num_groups
    }

    pub fn block(&self, group: usize) -> Range<usize> {
        let start = group * self.width;
        start..(start + self.width).min(self.d)
    }

    pub fn group_of_symbol(&self, symbol: usize) -> usize {
        symbol / self.width
    }

    /// Number of clients assigned to `group`; counts differ by at most one.
    pub fn clients_in_group(&self, group: usize) -> usize {
        let base = self.n_clients / self.num_groups;
        base + usize::from(group < self.n_clients % self.num_groups)
    }

    /// Message for a client holding `symbol`.
    pub fn encode_client(&self, client: usize, symbol: usize) -> u32 {
        encode(symbol, self.group_of(client), self)
    }

    /// Messages for the whole round; `samples[i]` belongs to client `i`.
    pub fn encode_all(&self, samples: &[usize]) -> Vec<u32> {
        debug_assert_eq!(samples.len(), self.n_clients);
        samples
            .iter()
            .enumerate()
            .map(|(i, &x)| self.encode_client(i, x))
            .collect()
    }

    /// Frequency estimate from one message per client.
    pub fn estimate(&self, messages: &[u32]) -> Result<CoarseEstimate> {
        if messages.len() != self.n_clients {
            return Err(Error::LengthMismatch {
                expected: self.n_clients,
                actual: messages.len(),
            });
        }
        let mut hits = alloc::vec![0usize; self.d];
        for (client, &msg) in messages.iter().enumerate() {
            if msg == 0 {
                continue;
            }
            let block = self.block(self.group_of(client));
            let width = block.len();
            if msg as usize > width {
                return Err(Error::ProtocolViolation {
                    client,
                    message: msg,
                    max: width as u32,
                });
            }
            hits[block.start + msg as usize - 1] += 1;
        }
        let per_symbol_count: Vec<usize> = (0..self.d)
            .map(|j| self.clients_in_group(self.group_of_symbol(j)))
            .collect();
        let p_hat = hits
            .iter()
            .zip(&per_symbol_count)
            .map(|(&h, &c)| if c == 0 { 0.0 } else { h as f64 / c as f64 })
            .collect();
        Ok(CoarseEstimate {
            p_hat,
            per_symbol_count,
        })
    }
}

/// Rank-within-block encoding: `0` outside block `group`, otherwise the
/// 1-based position of `symbol` in the block.
pub fn encode(symbol: usize, group: usize, plan: &Round1Plan) -> u32 {
    let block = plan.block(group);
    if block.contains(&symbol) {
        (symbol - block.start + 1) as u32
    } else {
        0
    }
}

/// Unbiased but unnormalized per-symbol frequencies.
#[derive(Debug, Clone, PartialEq)]
pub struct CoarseEstimate {
    pub p_hat: Vec<f64>,
    /// Clients watching the block that contains each symbol.
    pub per_symbol_count: Vec<usize>,
}

/// The globally minimax baseline: uniform grouping run with all `n` clients.
/// Losses use `q = 2`, so `lq == l2`.
pub fn run_minimax_baseline<R: RngCore + ?Sized>(
    p: &Distribution,
    n: usize,
    b: u32,
    rng: &mut R,
) -> Result<(CoarseEstimate, Losses)> {
    let plan = Round1Plan::new(n, p.d(), b)?;
    let mut samples = alloc::vec![0; n];
    Sampler::new(p).fill(rng, &mut samples);
    let messages = plan.encode_all(&samples);
    let est = plan.estimate(&messages)?;
    let losses = Losses::between(&est.p_hat, p.probs(), 2.0);
    Ok((est, losses))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_chacha::rand_core::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn blocks_for_divisible_and_ragged_alphabets() {
        let plan = Round1Plan::new(10, 6, 2).unwrap();
        assert_eq!(plan.num_groups(), 2);
        assert_eq!(plan.block(0), 0..3);
        assert_eq!(plan.block(1), 3..6);

        let plan = Round1Plan::new(10, 5, 2).unwrap();
        assert_eq!(plan.num_groups(), 2);
        assert_eq!(plan.block(0), 0..3);
        assert_eq!(plan.block(1), 3..5);

        let plan = Round1Plan::new(4, 3, 2).unwrap();
        assert_eq!(plan.num_groups(), 1);
        assert!((0..4).all(|c| plan.group_of(c) == 0));
        assert_eq!(plan.clients_in_group(0), 4);
    }

    #[test]
    fn wide_budget_degenerates_to_one_group() {
        let plan = Round1Plan::new(1, 5, 8).unwrap();
        assert_eq!(plan.num_groups(), 1);
        assert_eq!(plan.block(0), 0..5);
    }

    #[test]
    fn round_robin_counts_differ_by_at_most_one() {
        let plan = Round1Plan::new(11, 10, 2).unwrap();
        let counts: Vec<usize> = (0..plan.num_groups())
            .map(|g| plan.clients_in_group(g))
            .collect();
        assert_eq!(counts, [3, 3, 3, 2]);
        let mut tally = alloc::vec![0; plan.num_groups()];
        for c in 0..11 {
            tally[plan.group_of(c)] += 1;
        }
        assert_eq!(tally, counts);
    }

    #[test]
    fn too_few_clients() {
        assert_eq!(
            Round1Plan::new(1, 6, 2),
            Err(Error::TooFewClients {
                clients: 1,
                groups: 2
            })
        );
        assert!(Round1Plan::new(0, 1, 1).is_err());
        assert!(Round1Plan::new(5, 5, 0).is_err());
    }

    #[test]
    fn encoder_ranks_within_block() {
        let plan = Round1Plan::new(2, 6, 2).unwrap();
        // 1-based symbol 5 in block {4,5,6}
        assert_eq!(encode(4, 1, &plan), 2);
        assert_eq!(encode(0, 1, &plan), 0);
        // last symbol of block {1,2,3} gets rank 3, not 3 mod 3 = 0
        assert_eq!(encode(2, 0, &plan), 3);
    }

    #[test]
    fn estimate_counts_reports() {
        let plan = Round1Plan::new(4, 3, 2).unwrap();
        let msgs = plan.encode_all(&[0, 0, 1, 2]);
        let est = plan.estimate(&msgs).unwrap();
        assert_eq!(est.p_hat, [0.5, 0.25, 0.25]);
        assert_eq!(est.per_symbol_count, [4, 4, 4]);

        let est = plan.estimate(&[0, 0, 0, 0]).unwrap();
        assert_eq!(est.p_hat, [0.0, 0.0, 0.0]);

        let msgs = plan.encode_all(&[1, 1, 1, 1]);
        assert_eq!(plan.estimate(&msgs).unwrap().p_hat, [0.0, 1.0, 0.0]);
    }

    #[test]
    fn estimate_rejects_out_of_range_messages() {
        let plan = Round1Plan::new(4, 5, 2).unwrap();
        // clients 1 and 3 watch the two-symbol block {4,5}
        assert_eq!(
            plan.estimate(&[0, 3, 0, 0]),
            Err(Error::ProtocolViolation {
                client: 1,
                message: 3,
                max: 2
            })
        );
        assert!(matches!(
            plan.estimate(&[4, 0, 0, 0]),
            Err(Error::ProtocolViolation { client: 0, .. })
        ));
        assert!(matches!(
            plan.estimate(&[0, 0, 0]),
            Err(Error::LengthMismatch { .. })
        ));
    }

    #[test]
    fn messages_fit_in_budget() {
        let p = Distribution::zipf(1.2, 37).unwrap();
        for b in 1..5 {
            let plan = Round1Plan::new(500, 37, b).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(b as u64);
            let xs = crate::sampler::sample(&p, 500, &mut rng);
            assert!(plan.encode_all(&xs).iter().all(|&m| m < 1 << b));
        }
    }

    #[test]
    fn baseline_requires_clients() {
        let p = Distribution::uniform(4).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(matches!(
            run_minimax_baseline(&p, 0, 2, &mut rng),
            Err(Error::TooFewClients { .. })
        ));
    }

    #[test]
    fn baseline_on_point_mass_is_exact() {
        let p = Distribution::point_mass(9, 4).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let (est, losses) = run_minimax_baseline(&p, 300, 2, &mut rng).unwrap();
        assert_eq!(est.p_hat[4], 1.0);
        assert_eq!(losses.l2, 0.0);
    }
}
