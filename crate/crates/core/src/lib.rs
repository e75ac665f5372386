//! Simulation core for estimating a discrete distribution from clients that
//! each hold one sample and may send only `b` bits.
//!
//! Two schemes are provided:
//!
//! - [`round1`]: uniform grouping. Symbols are split into blocks of `2^b - 1`
//!   and every client reports its sample only if it falls in its assigned
//!   block. Run with all clients it is the globally minimax baseline.
//! - [`protocol::run_localize_refine`]: the two-round scheme. Half of the
//!   clients run uniform grouping to get a coarse estimate; the server then
//!   reallocates the remaining clients so that symbol `j` is watched by a
//!   number of clients growing with `p_j^(q/(q+2))`.
//!
//! The crate is `no_std` (it needs `alloc`). Randomness is always supplied by
//! the caller through [`rand_core::RngCore`], so one stream per trial gives
//! reproducible results regardless of scheduling.
//!
//! Symbols are 0-based in this API. Messages are `u32` values in `0..2^b`,
//! where `0` means "nothing to report".

#![cfg_attr(not(test), no_std)]
#![forbid(unsafe_code)]

extern crate alloc;

pub mod bounds;
pub mod dist;
mod error;
pub mod loss;
mod math;
pub mod protocol;
pub mod round1;
pub mod round2;
pub mod sampler;

pub use crate::dist::{ComplexityProfile, Distribution, SortedView};
pub use crate::error::{Error, Result};
pub use crate::loss::Losses;
pub use crate::protocol::{
    run_localize_refine, run_scheme, verify_transcript, EstimationRecord, EstimationResult, Scheme,
    SchemeConfig, Transcript, TranscriptStats, Violation,
};
pub use crate::round1::{CoarseEstimate, Round1Plan};
pub use crate::round2::{GroupPlan, GroupPlanSummary, PiWeights};
pub use crate::sampler::Sampler;

/// Largest supported message width in bits.
pub const MAX_BITS: u32 = 30;

pub(crate) fn check_bits(b: u32) -> Result<()> {
    if (1..=MAX_BITS).contains(&b) {
        Ok(())
    } else {
        Err(Error::BitBudget {
            bits: b,
            max: MAX_BITS,
        })
    }
}

/// Number of symbols one `b`-bit message can name besides "silent": `2^b - 1`.
pub fn slots_per_message(b: u32) -> usize {
    (1usize << b) - 1
}
