//! End-to-end runs of the two schemes with transcript accounting.
//!
//! Interaction is a round barrier: clients `0..ceil(n/2)` run uniform
//! grouping, the server derives the refinement plan from their messages
//! alone, then clients `ceil(n/2)..n` report under that plan. Every client
//! sends exactly one `b`-bit message.

use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use rand_core::RngCore;
use serde::{Deserialize, Serialize};

use crate::dist::Distribution;
use crate::error::{Error, Result};
use crate::loss::{clamp_renormalize, Losses};
use crate::round1::{CoarseEstimate, Round1Plan};
use crate::round2::{self, GroupPlan, PiWeights, PlanDefect};
use crate::sampler::Sampler;
use crate::{check_bits, slots_per_message};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Scheme {
    #[serde(rename = "minimax")]
    Minimax,
    #[serde(rename = "lr", alias = "localize_refine")]
    LocalizeRefine,
}

impl Scheme {
    pub fn name(self) -> &'static str {
        match self {
            Scheme::Minimax => "minimax",
            Scheme::LocalizeRefine => "lr",
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "minimax" => Ok(Scheme::Minimax),
            "lr" | "localize_refine" | "localize-refine" => Ok(Scheme::LocalizeRefine),
            other => Err(Error::UnknownScheme(other.to_string())),
        }
    }
}

/// Full parameterization of one run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SchemeConfig {
    /// Total number of clients.
    pub n: usize,
    pub d: usize,
    /// Bits per message.
    pub b: u32,
    /// Loss order in `[1, 2]`; selects the allocation exponent `q/(q+2)`.
    pub q: f64,
    /// Recorded in results; the caller owns the rng.
    pub seed: u64,
    /// Attach a clamped, renormalized copy of the estimate. Losses always
    /// use the raw estimate.
    pub renormalize: bool,
}

impl SchemeConfig {
    pub fn new(n: usize, d: usize, b: u32) -> Self {
        Self {
            n,
            d,
            b,
            q: 2.0,
            seed: 0,
            renormalize: false,
        }
    }

    pub fn with_q(mut self, q: f64) -> Self {
        self.q = q;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_renormalize(mut self, on: bool) -> Self {
        self.renormalize = on;
        self
    }

    /// Clients in the localization round (the extra one when `n` is odd).
    pub fn round1_clients(&self) -> usize {
        self.n - self.n / 2
    }

    pub fn round2_clients(&self) -> usize {
        self.n / 2
    }

    pub fn validate(&self) -> Result<()> {
        check_bits(self.b)?;
        if self.d == 0 {
            return Err(Error::Domain {
                name: "d",
                value: 0.0,
                expected: "d >= 1",
            });
        }
        if !(1.0..=2.0).contains(&self.q) {
            return Err(Error::Domain {
                name: "q",
                value: self.q,
                expected: "[1, 2]",
            });
        }
        Ok(())
    }

    fn validate_for(&self, scheme: Scheme, p: &Distribution) -> Result<()> {
        self.validate()?;
        if p.d() != self.d {
            return Err(Error::LengthMismatch {
                expected: self.d,
                actual: p.d(),
            });
        }
        let groups = self.d.div_ceil(slots_per_message(self.b));
        let needed = match scheme {
            Scheme::Minimax => groups,
            Scheme::LocalizeRefine => 2 * groups,
        };
        if self.n < needed {
            return Err(Error::TooFewClients {
                clients: self.n,
                groups: needed,
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct TranscriptStats {
    pub messages: usize,
    pub total_bits: u64,
}

/// Everything that crossed the wire in one run.
#[derive(Debug, Clone, PartialEq)]
pub struct Transcript {
    pub scheme: Scheme,
    pub bits_per_message: u32,
    pub round1_plan: Option<Round1Plan>,
    /// `round1_messages[i]` was sent by client `i`.
    pub round1_messages: Vec<u32>,
    pub round2_plan: Option<GroupPlan>,
    /// `round2_messages[k]` was sent by client `round1_messages.len() + k`.
    pub round2_messages: Vec<u32>,
}

impl Transcript {
    pub fn empty(scheme: Scheme, bits_per_message: u32) -> Self {
        Self {
            scheme,
            bits_per_message,
            round1_plan: None,
            round1_messages: Vec::new(),
            round2_plan: None,
            round2_messages: Vec::new(),
        }
    }

    pub fn stats(&self) -> TranscriptStats {
        let messages = self.round1_messages.len() + self.round2_messages.len();
        TranscriptStats {
            messages,
            total_bits: messages as u64 * u64::from(self.bits_per_message),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimationResult {
    pub scheme: Scheme,
    pub n: usize,
    pub d: usize,
    pub b: u32,
    pub q: f64,
    pub seed: u64,
    /// Final estimate (equal to `p_hat` for the minimax scheme).
    pub p_check: Vec<f64>,
    /// Uniform-grouping estimate.
    pub p_hat: Vec<f64>,
    pub losses: Losses,
    pub stats: TranscriptStats,
    pub renormalized: Option<Vec<f64>>,
}

/// Flat JSON shape of an [`EstimationResult`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EstimationRecord {
    pub scheme: Scheme,
    pub n: usize,
    pub d: usize,
    pub b: u32,
    pub q: f64,
    pub seed: u64,
    pub l1: f64,
    pub l2: f64,
    pub lq: f64,
    pub total_bits: u64,
}

impl EstimationResult {
    pub fn record(&self) -> EstimationRecord {
        EstimationRecord {
            scheme: self.scheme,
            n: self.n,
            d: self.d,
            b: self.b,
            q: self.q,
            seed: self.seed,
            l1: self.losses.l1,
            l2: self.losses.l2,
            lq: self.losses.lq,
            total_bits: self.stats.total_bits,
        }
    }

    /// The loss selected by the configured order `q`.
    pub fn loss(&self) -> f64 {
        self.losses.for_order(self.q)
    }

    fn build(
        scheme: Scheme,
        p: &Distribution,
        cfg: &SchemeConfig,
        p_hat: Vec<f64>,
        p_check: Vec<f64>,
        stats: TranscriptStats,
    ) -> Self {
        let losses = Losses::between(&p_check, p.probs(), cfg.q);
        let renormalized = cfg.renormalize.then(|| clamp_renormalize(&p_check));
        Self {
            scheme,
            n: cfg.n,
            d: cfg.d,
            b: cfg.b,
            q: cfg.q,
            seed: cfg.seed,
            p_check,
            p_hat,
            losses,
            stats,
            renormalized,
        }
    }
}

/// Server-side products of the localization round.
#[derive(Debug, Clone, PartialEq)]
pub struct Refinement {
    pub coarse: CoarseEstimate,
    pub pi: PiWeights,
    pub plan: GroupPlan,
}

/// Derives the refinement plan. Its only data input is the round-1 messages.
pub fn plan_refinement(
    round1_plan: &Round1Plan,
    round1_messages: &[u32],
    cfg: &SchemeConfig,
) -> Result<Refinement> {
    let coarse = round1_plan.estimate(round1_messages)?;
    let pi = round2::pi_map(&coarse.p_hat, cfg.q)?;
    let sizes = round2::allocate(&pi, cfg.n, cfg.b)?;
    let start = cfg.round1_clients();
    let plan = round2::gen_groups(&sizes, start..start + cfg.round2_clients(), cfg.b)?;
    Ok(Refinement { coarse, pi, plan })
}

/// Runs `scheme` on given client samples (`samples[i]` held by client `i`).
pub fn simulate_on_samples(
    scheme: Scheme,
    p: &Distribution,
    cfg: &SchemeConfig,
    samples: &[usize],
) -> Result<(EstimationResult, Transcript)> {
    cfg.validate_for(scheme, p)?;
    if samples.len() != cfg.n {
        return Err(Error::LengthMismatch {
            expected: cfg.n,
            actual: samples.len(),
        });
    }
    match scheme {
        Scheme::Minimax => {
            let plan = Round1Plan::new(cfg.n, cfg.d, cfg.b)?;
            let messages = plan.encode_all(samples);
            let coarse = plan.estimate(&messages)?;
            let transcript = Transcript {
                scheme,
                bits_per_message: cfg.b,
                round1_plan: Some(plan),
                round1_messages: messages,
                round2_plan: None,
                round2_messages: Vec::new(),
            };
            let result = EstimationResult::build(
                scheme,
                p,
                cfg,
                coarse.p_hat.clone(),
                coarse.p_hat,
                transcript.stats(),
            );
            Ok((result, transcript))
        }
        Scheme::LocalizeRefine => {
            let (first, second) = samples.split_at(cfg.round1_clients());
            let plan1 = Round1Plan::new(first.len(), cfg.d, cfg.b)?;
            let messages1 = plan1.encode_all(first);
            // barrier: the server sees only messages1 before planning round 2
            let Refinement { coarse, plan, .. } = plan_refinement(&plan1, &messages1, cfg)?;
            let messages2 = plan.encode_all(second);
            let p_check = plan.estimate(&messages2)?;
            let transcript = Transcript {
                scheme,
                bits_per_message: cfg.b,
                round1_plan: Some(plan1),
                round1_messages: messages1,
                round2_plan: Some(plan),
                round2_messages: messages2,
            };
            let result =
                EstimationResult::build(scheme, p, cfg, coarse.p_hat, p_check, transcript.stats());
            Ok((result, transcript))
        }
    }
}

/// Draws `n` samples from `p` and runs `scheme`, returning the transcript too.
pub fn simulate<R: RngCore + ?Sized>(
    scheme: Scheme,
    p: &Distribution,
    cfg: &SchemeConfig,
    rng: &mut R,
) -> Result<(EstimationResult, Transcript)> {
    cfg.validate_for(scheme, p)?;
    let mut samples = alloc::vec![0; cfg.n];
    Sampler::new(p).fill(rng, &mut samples);
    simulate_on_samples(scheme, p, cfg, &samples)
}

pub fn run_scheme<R: RngCore + ?Sized>(
    scheme: Scheme,
    p: &Distribution,
    cfg: &SchemeConfig,
    rng: &mut R,
) -> Result<EstimationResult> {
    simulate(scheme, p, cfg, rng).map(|(result, _)| result)
}

/// The two-round localize-and-refine scheme.
pub fn run_localize_refine<R: RngCore + ?Sized>(
    p: &Distribution,
    cfg: &SchemeConfig,
    rng: &mut R,
) -> Result<EstimationResult> {
    run_scheme(Scheme::LocalizeRefine, p, cfg, rng)
}

/// A broken protocol contract found in a transcript.
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    BitWidthMismatch {
        transcript: u32,
        config: u32,
    },
    MessageCountMismatch {
        what: &'static str,
        expected: usize,
        actual: usize,
    },
    MessageOverBudget {
        client: usize,
        message: u32,
        bits: u32,
    },
    UndecodableMessage {
        client: usize,
        message: u32,
        max: u32,
    },
    MissingPlan {
        round: u8,
    },
    UnexpectedRound2,
    Plan(PlanDefect),
    /// The round-2 plan differs from the one implied by round-1 messages.
    PlanNotFromRound1 {
        detail: String,
    },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::BitWidthMismatch { transcript, config } => write!(
                f,
                "transcript uses {transcript}-bit messages, config says {config}"
            ),
            Violation::MessageCountMismatch {
                what,
                expected,
                actual,
            } => write!(
                f,
                "message count mismatch ({what}): expected {expected}, got {actual}"
            ),
            Violation::MessageOverBudget {
                client,
                message,
                bits,
            } => write!(
                f,
                "client {client} sent {message}, which does not fit in {bits} bits"
            ),
            Violation::UndecodableMessage {
                client,
                message,
                max,
            } => write!(
                f,
                "client {client} sent rank {message} but can only report ranks up to {max}"
            ),
            Violation::MissingPlan { round } => write!(f, "round {round} plan missing"),
            Violation::UnexpectedRound2 => f.write_str("minimax transcript has a second round"),
            Violation::Plan(defect) => write!(f, "group plan: {defect}"),
            Violation::PlanNotFromRound1 { detail } => {
                write!(
                    f,
                    "round-2 plan is not a function of round-1 messages: {detail}"
                )
            }
        }
    }
}

/// Checks bit budget, message counts, decodability, plan structure and
/// causality. All violations are collected.
pub fn verify_transcript(
    t: &Transcript,
    cfg: &SchemeConfig,
) -> core::result::Result<(), Vec<Violation>> {
    let mut out = Vec::new();
    if t.bits_per_message != cfg.b {
        out.push(Violation::BitWidthMismatch {
            transcript: t.bits_per_message,
            config: cfg.b,
        });
    }
    let total = t.round1_messages.len() + t.round2_messages.len();
    if total == 0 || total != cfg.n {
        out.push(Violation::MessageCountMismatch {
            what: "total",
            expected: cfg.n,
            actual: total,
        });
    }

    // budget check against the configured width, independent of plans
    let limit = 1u64 << cfg.b.min(63);
    let all = t.round1_messages.iter().chain(&t.round2_messages);
    for (client, &message) in all.enumerate() {
        if u64::from(message) >= limit {
            out.push(Violation::MessageOverBudget {
                client,
                message,
                bits: cfg.b,
            });
        }
    }

    match t.scheme {
        Scheme::Minimax => {
            if t.round2_plan.is_some() || !t.round2_messages.is_empty() {
                out.push(Violation::UnexpectedRound2);
            }
        }
        Scheme::LocalizeRefine => {
            if !t.round1_messages.is_empty() && t.round1_messages.len() != cfg.round1_clients() {
                out.push(Violation::MessageCountMismatch {
                    what: "round 1",
                    expected: cfg.round1_clients(),
                    actual: t.round1_messages.len(),
                });
            }
        }
    }

    if !t.round1_messages.is_empty() {
        match &t.round1_plan {
            None => out.push(Violation::MissingPlan { round: 1 }),
            Some(plan) if plan.n_clients() != t.round1_messages.len() => {
                out.push(Violation::MessageCountMismatch {
                    what: "round-1 plan clients",
                    expected: plan.n_clients(),
                    actual: t.round1_messages.len(),
                })
            }
            Some(plan) => {
                for (client, &message) in t.round1_messages.iter().enumerate() {
                    let width = plan.block(plan.group_of(client)).len() as u32;
                    if message > width {
                        out.push(Violation::UndecodableMessage {
                            client,
                            message,
                            max: width,
                        });
                    }
                }
            }
        }
    }

    if t.scheme == Scheme::LocalizeRefine && total > 0 {
        match &t.round2_plan {
            None => out.push(Violation::MissingPlan { round: 2 }),
            Some(plan) => {
                let offset = t.round1_messages.len();
                let expected = offset..offset + t.round2_messages.len();
                if plan.clients() != expected {
                    out.push(Violation::MessageCountMismatch {
                        what: "round-2 plan clients",
                        expected: plan.clients().len(),
                        actual: t.round2_messages.len(),
                    });
                } else {
                    for (client, &message) in expected.zip(&t.round2_messages) {
                        let max = plan.memberships(client).len() as u32;
                        if message > max {
                            out.push(Violation::UndecodableMessage {
                                client,
                                message,
                                max,
                            });
                        }
                    }
                }
                out.extend(plan.defects().into_iter().map(Violation::Plan));
                if let Some(plan1) = &t.round1_plan {
                    match plan_refinement(plan1, &t.round1_messages, cfg) {
                        Ok(derived) if derived.plan == *plan => {}
                        Ok(_) => out.push(Violation::PlanNotFromRound1 {
                            detail: "recomputed plan differs".to_string(),
                        }),
                        Err(e) => out.push(Violation::PlanNotFromRound1 {
                            detail: e.to_string(),
                        }),
                    }
                }
            }
        }
    }

    if out.is_empty() {
        Ok(())
    } else {
        Err(out)
    }
}
