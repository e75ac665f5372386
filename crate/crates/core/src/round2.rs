//! The refinement round.
//!
//! The server turns the coarse estimate `p̂` into weights
//! `π̂_j ∝ p̂_j^(q/(q+2))`, sizes the per-symbol groups as
//!
//! ```text
//! n_j = (n/2) * min(1, (2^b - 1) * (π̂_j / 4 + 1 / (4d)))
//! ```
//!
//! and assigns the round's clients to possibly overlapping groups
//! `G_1..G_d` so that every client sits in at most `2^b - 1` of them. A
//! client reports the rank of its sample within its sorted membership list.

use alloc::collections::BinaryHeap;
use alloc::vec::Vec;
use core::ops::Range;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::{check_bits, math, slots_per_message};

/// Normalized allocation weights derived from a coarse estimate.
#[derive(Debug, Clone, PartialEq)]
pub struct PiWeights {
    weights: Vec<f64>,
    q: f64,
}

impl PiWeights {
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Loss order the weights were built for.
    pub fn loss_order(&self) -> f64 {
        self.q
    }

    pub fn d(&self) -> usize {
        self.weights.len()
    }
}

/// Exponent applied to `p̂` for an ℓq loss: `q / (q + 2)`; 1/2 for ℓ2 and
/// 1/3 for ℓ1.
pub fn pi_exponent(q: f64) -> f64 {
    q / (q + 2.0)
}

/// `π̂_j = p̂_j^e / sum_k p̂_k^e` with `e = q/(q+2)`. An all-zero estimate
/// maps to uniform weights.
pub fn pi_map(p_hat: &[f64], q: f64) -> Result<PiWeights> {
    if !(1.0..=2.0).contains(&q) {
        return Err(Error::Domain {
            name: "q",
            value: q,
            expected: "[1, 2]",
        });
    }
    if p_hat.is_empty() {
        return Err(Error::Domain {
            name: "d",
            value: 0.0,
            expected: "d >= 1",
        });
    }
    let e = pi_exponent(q);
    let root = |x: f64| -> f64 {
        if x <= 0.0 {
            0.0
        } else if q == 2.0 {
            libm::sqrt(x)
        } else if q == 1.0 {
            libm::cbrt(x)
        } else {
            libm::pow(x, e)
        }
    };
    let powered: Vec<f64> = p_hat.iter().map(|&x| root(x)).collect();
    let total = math::sum(powered.iter().copied());
    let weights = if total > 0.0 {
        powered.iter().map(|x| x / total).collect()
    } else {
        alloc::vec![1.0 / p_hat.len() as f64; p_hat.len()]
    };
    Ok(PiWeights { weights, q })
}

/// Floor that forgives representation error just below an integer.
fn floor_snapped(x: f64) -> f64 {
    let r = libm::round(x);
    if libm::fabs(x - r) <= 1e-9 * x.max(1.0) {
        r
    } else {
        libm::floor(x)
    }
}

/// Group sizes for `n` total clients, of which `floor(n/2)` take part in the
/// refinement round. Each size is the floor of the allocation rule, raised to
/// at least one.
pub fn allocate(pi: &PiWeights, n: usize, b: u32) -> Result<Vec<usize>> {
    check_bits(b)?;
    let d = pi.d();
    let clients = n / 2;
    if clients == 0 {
        return Err(Error::TooFewClients {
            clients: 0,
            groups: d,
        });
    }
    let slots = slots_per_message(b);
    let (cf, sf, df) = (clients as f64, slots as f64, d as f64);
    let sizes: Vec<usize> = pi
        .weights()
        .iter()
        .map(|&w| {
            // (n/2)(2^b-1)(w/4 + 1/(4d)) written with a single division
            let raw = cf * sf * (df * w + 1.0) / (4.0 * df);
            (floor_snapped(raw.min(cf)) as usize).max(1)
        })
        .collect();
    let required: usize = sizes.iter().sum();
    let capacity = clients * slots;
    if required > capacity {
        return Err(Error::CapacityExceeded {
            required,
            clients,
            per_client: slots,
            capacity,
        });
    }
    Ok(sizes)
}

/// Assignment of the refinement round's clients to per-symbol groups.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroupPlan {
    sizes: Vec<usize>,
    clients: Range<usize>,
    bits: u32,
    group_offsets: Vec<usize>,
    group_members: Vec<usize>,
    member_offsets: Vec<usize>,
    member_groups: Vec<u32>,
}

/// Compact description of a plan.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroupPlanSummary {
    pub sizes: Vec<usize>,
    pub max_membership: usize,
    pub capacity_used: f64,
}

/// A broken [`GroupPlan`] property.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PlanDefect {
    SizeMismatch {
        group: usize,
        expected: usize,
        actual: usize,
    },
    DuplicateMember {
        group: usize,
        client: usize,
    },
    ForeignMember {
        group: usize,
        client: usize,
    },
    TooManyMemberships {
        client: usize,
        count: usize,
        max: usize,
    },
    UnsortedMemberships {
        client: usize,
    },
    MembershipMismatch {
        client: usize,
        group: usize,
    },
    OverCapacity {
        required: usize,
        capacity: usize,
    },
}

impl core::fmt::Display for PlanDefect {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match *self {
            PlanDefect::SizeMismatch {
                group,
                expected,
                actual,
            } => write!(f, "group {group} has {actual} members, expected {expected}"),
            PlanDefect::DuplicateMember { group, client } => {
                write!(f, "client {client} appears twice in group {group}")
            }
            PlanDefect::ForeignMember { group, client } => {
                write!(f, "group {group} lists client {client} outside the round")
            }
            PlanDefect::TooManyMemberships { client, count, max } => {
                write!(f, "client {client} is in {count} groups, limit {max}")
            }
            PlanDefect::UnsortedMemberships { client } => {
                write!(
                    f,
                    "membership list of client {client} is not strictly ascending"
                )
            }
            PlanDefect::MembershipMismatch { client, group } => write!(
                f,
                "client {client} and group {group} disagree about membership"
            ),
            PlanDefect::OverCapacity { required, capacity } => {
                write!(f, "groups need {required} slots, capacity is {capacity}")
            }
        }
    }
}

impl GroupPlan {
    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn d(&self) -> usize {
        self.sizes.len()
    }

    pub fn bits(&self) -> u32 {
        self.bits
    }

    /// Client ids taking part in the round.
    pub fn clients(&self) -> Range<usize> {
        self.clients.clone()
    }

    /// Members of `G_group`, ascending client ids.
    pub fn group(&self, group: usize) -> &[usize] {
        &self.group_members[self.group_offsets[group]..self.group_offsets[group + 1]]
    }

    /// `J_i`: groups containing `client`, ascending. Panics if `client` is
    /// not in the round.
    pub fn memberships(&self, client: usize) -> &[u32] {
        let k = client - self.clients.start;
        &self.member_groups[self.member_offsets[k]..self.member_offsets[k + 1]]
    }

    pub fn max_membership(&self) -> usize {
        self.member_offsets
            .windows(2)
            .map(|w| w[1] - w[0])
            .max()
            .unwrap_or(0)
    }

    /// Fraction of the `clients * (2^b - 1)` report slots in use.
    pub fn capacity_used(&self) -> f64 {
        let cap = self.clients.len() * slots_per_message(self.bits);
        if cap == 0 {
            0.0
        } else {
            self.sizes.iter().sum::<usize>() as f64 / cap as f64
        }
    }

    pub fn summary(&self) -> GroupPlanSummary {
        GroupPlanSummary {
            sizes: self.sizes.clone(),
            max_membership: self.max_membership(),
            capacity_used: self.capacity_used(),
        }
    }

    /// Recheck every structural property from scratch.
    pub fn defects(&self) -> Vec<PlanDefect> {
        let mut out = Vec::new();
        let max = slots_per_message(self.bits);
        let required: usize = self.sizes.iter().sum();
        let capacity = self.clients.len() * max;
        if required > capacity {
            out.push(PlanDefect::OverCapacity { required, capacity });
        }
        for (j, &size) in self.sizes.iter().enumerate() {
            let members = self.group(j);
            if members.len() != size {
                out.push(PlanDefect::SizeMismatch {
                    group: j,
                    expected: size,
                    actual: members.len(),
                });
            }
            if members.windows(2).any(|w| w[0] >= w[1]) {
                let mut sorted = members.to_vec();
                sorted.sort_unstable();
                for w in sorted.windows(2).filter(|w| w[0] == w[1]) {
                    out.push(PlanDefect::DuplicateMember {
                        group: j,
                        client: w[0],
                    });
                }
            }
            for &c in members {
                if !self.clients.contains(&c) {
                    out.push(PlanDefect::ForeignMember {
                        group: j,
                        client: c,
                    });
                } else if self.memberships(c).binary_search(&(j as u32)).is_err() {
                    out.push(PlanDefect::MembershipMismatch {
                        client: c,
                        group: j,
                    });
                }
            }
        }
        for c in self.clients.clone() {
            let js = self.memberships(c);
            if js.len() > max {
                out.push(PlanDefect::TooManyMemberships {
                    client: c,
                    count: js.len(),
                    max,
                });
            }
            if js.windows(2).any(|w| w[0] >= w[1]) {
                out.push(PlanDefect::UnsortedMemberships { client: c });
            }
            for &j in js {
                let j = j as usize;
                if j >= self.d() || self.group(j).binary_search(&c).is_err() {
                    out.push(PlanDefect::MembershipMismatch {
                        client: c,
                        group: j,
                    });
                }
            }
        }
        out
    }

    /// Messages for the round; `samples[k]` belongs to client `clients().start + k`.
    pub fn encode_all(&self, samples: &[usize]) -> Vec<u32> {
        debug_assert_eq!(samples.len(), self.clients.len());
        samples
            .iter()
            .zip(self.clients.clone())
            .map(|(&x, c)| encode(x, self.memberships(c)))
            .collect()
    }

    /// Refined estimate `p̌_j = #{i in G_j : i reported j} / n_j`.
    pub fn estimate(&self, messages: &[u32]) -> Result<Vec<f64>> {
        estimate(messages, self)
    }
}

/// Greedy construction of overlapping groups with exact sizes.
///
/// Clients are taken in id order; each joins the (up to) `2^b - 1` groups
/// with the largest remaining deficit, ties going to the lower group index.
/// This succeeds whenever `max n_j <= N` and `sum n_j <= N (2^b - 1)`: a
/// group with deficit equal to the number of remaining clients is always
/// among those picked.
pub fn gen_groups(sizes: &[usize], clients: Range<usize>, b: u32) -> Result<GroupPlan> {
    check_bits(b)?;
    let slots = slots_per_message(b);
    let n = clients.len();
    for (group, &size) in sizes.iter().enumerate() {
        if size > n {
            return Err(Error::GroupTooLarge {
                group,
                size,
                clients: n,
            });
        }
    }
    if n > u32::MAX as usize || sizes.len() > u32::MAX as usize {
        return Err(Error::Domain {
            name: "round-2 clients and groups",
            value: n.max(sizes.len()) as f64,
            expected: "at most 2^32 - 1",
        });
    }
    let required: usize = sizes.iter().sum();
    let capacity = n.saturating_mul(slots);
    if required > capacity {
        return Err(Error::CapacityExceeded {
            required,
            clients: n,
            per_client: slots,
            capacity,
        });
    }
    let d = sizes.len();

    // key = deficit << 32 | !j: larger deficit first, then smaller j
    let key = |deficit: usize, j: u32| ((deficit as u64) << 32) | u64::from(!j);
    let mut heap: BinaryHeap<u64> = sizes
        .iter()
        .enumerate()
        .filter(|(_, &s)| s > 0)
        .map(|(j, &s)| key(s, j as u32))
        .collect();
    let mut member_offsets = Vec::with_capacity(n + 1);
    let mut member_groups = Vec::with_capacity(required);
    let mut picked: Vec<u64> = Vec::with_capacity(slots.min(d));
    member_offsets.push(0);
    for _ in 0..n {
        let start = member_groups.len();
        while picked.len() < slots {
            match heap.pop() {
                Some(entry) => picked.push(entry),
                None => break,
            }
        }
        for k in picked.drain(..) {
            let (deficit, j) = ((k >> 32) as usize, !(k as u32));
            member_groups.push(j);
            if deficit > 1 {
                heap.push(key(deficit - 1, j));
            }
        }
        member_groups[start..].sort_unstable();
        member_offsets.push(member_groups.len());
    }
    debug_assert!(heap.is_empty(), "greedy left deficits unfilled");

    let mut group_offsets = alloc::vec![0usize; d + 1];
    for &j in &member_groups {
        group_offsets[j as usize + 1] += 1;
    }
    for j in 0..d {
        group_offsets[j + 1] += group_offsets[j];
    }
    let mut cursor = group_offsets.clone();
    let mut group_members = alloc::vec![0usize; member_groups.len()];
    for k in 0..n {
        for &j in &member_groups[member_offsets[k]..member_offsets[k + 1]] {
            group_members[cursor[j as usize]] = clients.start + k;
            cursor[j as usize] += 1;
        }
    }

    Ok(GroupPlan {
        sizes: sizes.to_vec(),
        clients,
        bits: b,
        group_offsets,
        group_members,
        member_offsets,
        member_groups,
    })
}

/// `0` if `symbol` is not in `memberships`, else its 1-based position in
/// the ascending list.
pub fn encode(symbol: usize, memberships: &[u32]) -> u32 {
    let Ok(symbol) = u32::try_from(symbol) else {
        return 0;
    };
    match memberships.binary_search(&symbol) {
        Ok(pos) => pos as u32 + 1,
        Err(_) => 0,
    }
}

/// Refined estimate from one message per round-2 client.
pub fn estimate(messages: &[u32], plan: &GroupPlan) -> Result<Vec<f64>> {
    let clients = plan.clients();
    if messages.len() != clients.len() {
        return Err(Error::LengthMismatch {
            expected: clients.len(),
            actual: messages.len(),
        });
    }
    let mut hits = alloc::vec![0usize; plan.d()];
    for (&msg, client) in messages.iter().zip(clients) {
        if msg == 0 {
            continue;
        }
        let js = plan.memberships(client);
        if msg as usize > js.len() {
            return Err(Error::ProtocolViolation {
                client,
                message: msg,
                max: js.len() as u32,
            });
        }
        hits[js[msg as usize - 1] as usize] += 1;
    }
    Ok(hits
        .iter()
        .zip(plan.sizes())
        .map(|(&h, &n)| if n == 0 { 0.0 } else { h as f64 / n as f64 })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
    }

    #[test]
    fn pi_map_examples() {
        let u = pi_map(&[0.25; 4], 2.0).unwrap();
        assert!(close(u.weights(), &[0.25; 4], 1e-15));

        let w = pi_map(&[0.81, 0.09, 0.09, 0.01], 2.0).unwrap();
        let want = [0.9 / 1.6, 0.3 / 1.6, 0.3 / 1.6, 0.1 / 1.6];
        assert!(close(w.weights(), &want, 1e-12), "{:?}", w.weights());

        let w = pi_map(&[0.125, 0.125, 0.0, 0.0, 0.0], 1.0).unwrap();
        assert!(close(w.weights(), &[0.5, 0.5, 0.0, 0.0, 0.0], 1e-15));

        let z = pi_map(&[0.0; 3], 2.0).unwrap();
        assert!(close(z.weights(), &[1.0 / 3.0; 3], 1e-15));

        assert!(pi_map(&[0.5, 0.5], 0.5).is_err());
        assert!(pi_map(&[0.5, 0.5], 2.5).is_err());
    }

    #[test]
    fn general_q_uses_q_over_q_plus_two() {
        let w = pi_map(&[0.64, 0.36], 1.5).unwrap();
        let e = 1.5 / 3.5;
        let a = 0.64f64.powf(e);
        let b = 0.36f64.powf(e);
        assert!(close(w.weights(), &[a / (a + b), b / (a + b)], 1e-12));
        assert_eq!(pi_exponent(2.0), 0.5);
        assert!((pi_exponent(1.0) - 1.0 / 3.0).abs() < 1e-15);
    }

    fn weights(ws: &[f64]) -> PiWeights {
        PiWeights {
            weights: ws.to_vec(),
            q: 2.0,
        }
    }

    #[test]
    fn allocation_examples() {
        // d = 10: 500 * 3 * (0.5/4 + 1/40) = 225; 500 * 3 / 40 = 37.5 -> 37
        let mut ws = alloc::vec![0.0; 10];
        ws[0] = 0.5;
        ws[1] = 0.5;
        let sizes = allocate(&weights(&ws), 1000, 2).unwrap();
        assert_eq!(sizes[0], 225);
        assert_eq!(sizes[1], 225);
        assert!(sizes[2..].iter().all(|&s| s == 37));

        // (2^b-1)(pi/4 + 1/(4d)) >= 1 caps the group at n/2
        let sizes = allocate(&weights(&[1.0, 0.0]), 1000, 3).unwrap();
        assert_eq!(sizes[0], 500);
    }

    #[test]
    fn allocation_never_drops_below_one() {
        // raw value 10 * 1 * (10 * 0.1 + 1) / 40 = 0.5
        let ws = alloc::vec![0.1; 10];
        let sizes = allocate(&weights(&ws), 20, 1).unwrap();
        assert!(sizes.iter().all(|&s| s == 1));
    }

    #[test]
    fn allocation_reports_infeasible_rounding() {
        assert!(matches!(
            allocate(&weights(&[1.0]), 1, 1),
            Err(Error::TooFewClients { .. })
        ));
        let ws = alloc::vec![0.01; 100];
        assert!(matches!(
            allocate(&weights(&ws), 20, 1),
            Err(Error::CapacityExceeded {
                required: 100,
                capacity: 10,
                ..
            })
        ));
    }

    #[test]
    fn gen_groups_examples() {
        let plan = gen_groups(&[2, 2], 0..2, 2).unwrap();
        assert_eq!(plan.group(0), &[0, 1]);
        assert_eq!(plan.group(1), &[0, 1]);
        assert_eq!(plan.memberships(0), &[0, 1]);
        assert_eq!(plan.memberships(1), &[0, 1]);

        let plan = gen_groups(&[1, 1], 7..8, 2).unwrap();
        assert_eq!(plan.group(0), &[7]);
        assert_eq!(plan.group(1), &[7]);
        assert_eq!(plan.memberships(7), &[0, 1]);
        assert!(plan.defects().is_empty());
    }

    #[test]
    fn gen_groups_rejects_infeasible_inputs() {
        assert_eq!(
            gen_groups(&[3, 1], 0..2, 2),
            Err(Error::GroupTooLarge {
                group: 0,
                size: 3,
                clients: 2
            })
        );
        assert!(matches!(
            gen_groups(&[2, 2, 2, 1], 0..2, 2),
            Err(Error::CapacityExceeded {
                required: 7,
                capacity: 6,
                ..
            })
        ));
    }

    #[test]
    fn rank_encoder() {
        let js = [1u32, 4, 8];
        assert_eq!(encode(4, &js), 2);
        assert_eq!(encode(6, &js), 0);
        assert_eq!(encode(3, &[]), 0);
    }

    #[test]
    fn refined_estimate_counts() {
        let plan = gen_groups(&[2, 2], 0..2, 2).unwrap();
        // both clients hold symbol 0
        let msgs = plan.encode_all(&[0, 0]);
        assert_eq!(plan.estimate(&msgs).unwrap(), [1.0, 0.0]);

        let plan = gen_groups(&[3, 1], 0..4, 1).unwrap();
        assert_eq!(plan.group(0), &[0, 1, 2]);
        assert_eq!(plan.group(1), &[3]);
        let msgs = plan.encode_all(&[0, 1, 1, 1]);
        assert_eq!(plan.estimate(&msgs).unwrap(), [1.0 / 3.0, 1.0]);

        let plan = gen_groups(&[3, 3, 3], 0..3, 2).unwrap();
        assert_eq!(plan.estimate(&[0, 0, 0]).unwrap(), [0.0; 3]);
    }

    #[test]
    fn refined_estimate_rejects_bad_rank() {
        let plan = gen_groups(&[1, 1], 0..2, 2).unwrap();
        let js = plan.memberships(0).len();
        let res = estimate(&[js as u32 + 1, 0], &plan);
        assert!(matches!(
            res,
            Err(Error::ProtocolViolation { client: 0, .. })
        ));
    }

    #[test]
    fn summary_reports_usage() {
        let plan = gen_groups(&[2, 1, 1], 0..2, 2).unwrap();
        let s = plan.summary();
        assert_eq!(s.sizes, [2, 1, 1]);
        // client 0 takes all three groups, client 1 only the remaining slot
        assert_eq!(s.max_membership, 3);
        assert_eq!(plan.memberships(1), &[0]);
        assert!((s.capacity_used - 4.0 / 6.0).abs() < 1e-15);
    }

    fn feasible_instance() -> impl Strategy<Value = (Vec<usize>, usize, u32)> {
        (1u32..4, 1usize..60, 1usize..40).prop_flat_map(|(b, n, d)| {
            let slots = slots_per_message(b);
            proptest::collection::vec(0..=n, d).prop_map(move |mut sizes| {
                // shrink until the capacity constraint holds
                let cap = n * slots;
                while sizes.iter().sum::<usize>() > cap {
                    let i = (0..sizes.len()).max_by_key(|&i| sizes[i]).unwrap();
                    sizes[i] -= 1;
                }
                (sizes, n, b)
            })
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn gen_groups_meets_contract((sizes, n, b) in feasible_instance(), offset in 0usize..1000) {
            let plan = gen_groups(&sizes, offset..offset + n, b).unwrap();
            prop_assert!(plan.defects().is_empty(), "{:?}", plan.defects());
            for (j, &s) in sizes.iter().enumerate() {
                prop_assert_eq!(plan.group(j).len(), s);
            }
            prop_assert!(plan.max_membership() <= slots_per_message(b));
        }

        #[test]
        fn full_capacity_fills_every_client(n in 1usize..40, b in 1u32..4, d in 1usize..30) {
            let slots = slots_per_message(b);
            prop_assume!(d >= slots);
            // spread n * slots evenly over d groups, each at most n
            let total = n * slots;
            let sizes: Vec<usize> = (0..d).map(|j| total / d + usize::from(j < total % d)).collect();
            prop_assume!(sizes.iter().all(|&s| s <= n));
            let plan = gen_groups(&sizes, 0..n, b).unwrap();
            for c in 0..n {
                prop_assert_eq!(plan.memberships(c).len(), slots);
            }
        }

        #[test]
        fn allocation_is_floored_and_monotone(
            raw in proptest::collection::vec(0.0f64..1.0, 1..60),
            n in 2usize..100_000,
            b in 1u32..4,
        ) {
            let total: f64 = raw.iter().sum();
            prop_assume!(total > 0.0);
            let pi = weights(&raw.iter().map(|x| x / total).collect::<Vec<_>>());
            let d = pi.d();
            if let Ok(sizes) = allocate(&pi, n, b) {
                let half = n / 2;
                let floor = ((half * slots_per_message(b)) as f64 / (4 * d) as f64).floor() as usize;
                for j in 0..d {
                    prop_assert!(sizes[j] >= floor.clamp(1, half));
                    prop_assert!(sizes[j] <= half);
                    for k in 0..d {
                        if pi.weights()[j] >= pi.weights()[k] {
                            prop_assert!(sizes[j] >= sizes[k]);
                        }
                    }
                }
                prop_assert!(sizes.iter().sum::<usize>() <= half * slots_per_message(b));
            }
        }
    }
}
