//! Monte Carlo measurement of estimation error with per-trial rng streams.

use std::sync::atomic::{AtomicU64, Ordering};

use commsim_core::bounds::{l1_risk_bound, l2_risk_bound};
use commsim_core::protocol::simulate;
use commsim_core::{verify_transcript, Distribution, Scheme, SchemeConfig};
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::family::Family;

static TRANSCRIPTS_VERIFIED: AtomicU64 = AtomicU64::new(0);

/// Transcripts checked by [`monte_carlo`] in this process. A violation
/// aborts the run, so every counted transcript was clean.
pub fn transcripts_verified() -> u64 {
    TRANSCRIPTS_VERIFIED.load(Ordering::Relaxed)
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed of one `(d, n, b)` cell. Independent of the scheme so both schemes
/// see the same client data.
pub fn cell_seed(base: u64, d: usize, n: usize, b: u32) -> u64 {
    [d as u64, n as u64, u64::from(b)]
        .into_iter()
        .fold(splitmix64(base), |acc, x| splitmix64(acc ^ x))
}

/// Stream `trial` of the generator seeded with `seed`.
pub fn trial_rng(seed: u64, trial: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial);
    rng
}

/// Mean and Bessel-corrected standard error of per-trial losses.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialStats {
    pub trials: usize,
    pub mean_loss: f64,
    pub stderr: f64,
    /// Set when `trials == 1`; `stderr` is then reported as 0.
    pub single_trial: bool,
    pub mean_l1: f64,
    pub mean_l2: f64,
}

impl TrialStats {
    pub fn from_losses(losses: &[f64]) -> Self {
        Self::with_side_means(losses, f64::NAN, f64::NAN)
    }

    fn with_side_means(losses: &[f64], mean_l1: f64, mean_l2: f64) -> Self {
        let t = losses.len();
        let mean = losses.iter().sum::<f64>() / t as f64;
        let stderr = if t > 1 {
            let ss: f64 = losses.iter().map(|x| (x - mean).powi(2)).sum();
            (ss / (t - 1) as f64).sqrt() / (t as f64).sqrt()
        } else {
            0.0
        };
        Self {
            trials: t,
            mean_loss: mean,
            stderr,
            single_trial: t == 1,
            mean_l1,
            mean_l2,
        }
    }
}

/// Runs `trials` independent estimations; trial `t` uses `trial_rng(seed, t)`.
/// Every transcript is verified and any contract violation is an error.
pub fn monte_carlo(
    scheme: Scheme,
    p: &Distribution,
    cfg: &SchemeConfig,
    trials: usize,
) -> Result<TrialStats> {
    if trials == 0 {
        return Err(Error::Spec("trials must be at least 1".into()));
    }
    let per_trial: Vec<(f64, f64, f64)> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = trial_rng(cfg.seed, t as u64);
            let (result, transcript) = simulate(scheme, p, cfg, &mut rng)?;
            if let Err(violations) = verify_transcript(&transcript, cfg) {
                return Err(Error::Contract {
                    trial: t,
                    violations: violations.iter().map(ToString::to_string).collect(),
                });
            }
            TRANSCRIPTS_VERIFIED.fetch_add(1, Ordering::Relaxed);
            Ok((result.loss(), result.losses.l1, result.losses.l2))
        })
        .collect::<Result<_>>()?;
    let losses: Vec<f64> = per_trial.iter().map(|x| x.0).collect();
    let mean_l1 = per_trial.iter().map(|x| x.1).sum::<f64>() / trials as f64;
    let mean_l2 = per_trial.iter().map(|x| x.2).sum::<f64>() / trials as f64;
    Ok(TrialStats::with_side_means(&losses, mean_l1, mean_l2))
}

/// Risk bound for the configured loss, where the theory provides one.
pub fn theory_bound(scheme: Scheme, p: &Distribution, n: usize, b: u32, q: f64) -> Option<f64> {
    match scheme {
        Scheme::Minimax => None,
        Scheme::LocalizeRefine if q == 2.0 => Some(l2_risk_bound(p, n, b)),
        Scheme::LocalizeRefine if q == 1.0 => Some(l1_risk_bound(p, n, b)),
        Scheme::LocalizeRefine => None,
    }
}

/// One point of a sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cell {
    pub scheme: Scheme,
    pub family: Family,
    pub d: usize,
    pub n: usize,
    pub b: u32,
    pub q: f64,
    pub trials: usize,
    /// Base seed; the cell's own seed is derived with [`cell_seed`].
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CellSummary {
    pub scheme: Scheme,
    pub family: String,
    pub param: f64,
    pub d: usize,
    pub n: usize,
    pub b: u32,
    pub q: f64,
    pub trials: usize,
    pub seed: u64,
    pub mean_loss: f64,
    pub stderr: f64,
    pub theory_bound: Option<f64>,
    pub single_trial: bool,
    pub mean_l1: f64,
    pub mean_l2: f64,
}

pub fn run_cell(cell: &Cell) -> Result<CellSummary> {
    let seed = cell_seed(cell.seed, cell.d, cell.n, cell.b);
    let p = cell.family.build(cell.d, seed)?;
    let cfg = SchemeConfig::new(cell.n, cell.d, cell.b)
        .with_q(cell.q)
        .with_seed(seed);
    let stats = monte_carlo(cell.scheme, &p, &cfg, cell.trials)?;
    Ok(CellSummary {
        scheme: cell.scheme,
        family: cell.family.kind.name().to_string(),
        param: cell.family.param,
        d: cell.d,
        n: cell.n,
        b: cell.b,
        q: cell.q,
        trials: cell.trials,
        seed: cell.seed,
        mean_loss: stats.mean_loss,
        stderr: stats.stderr,
        theory_bound: theory_bound(cell.scheme, &p, cell.n, cell.b, cell.q),
        single_trial: stats.single_trial,
        mean_l1: stats.mean_l1,
        mean_l2: stats.mean_l2,
    })
}

/// Runs cells in order; rows come back in the same order.
pub fn run_cells(cells: &[Cell]) -> Result<Vec<CellSummary>> {
    cells.iter().map(run_cell).collect()
}
