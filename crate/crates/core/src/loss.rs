//! Pointwise estimation losses.

use alloc::vec::Vec;

use serde::Serialize;

use crate::math;

/// Losses of an estimate against the truth. `l2` is the squared Euclidean
/// distance (the risk the schemes target); `lq` is `sum |e_j - p_j|^q`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Losses {
    pub l1: f64,
    pub l2: f64,
    pub lq: f64,
}

impl Losses {
    pub fn between(estimate: &[f64], truth: &[f64], q: f64) -> Self {
        assert_eq!(
            estimate.len(),
            truth.len(),
            "estimate and truth differ in length"
        );
        let diffs = || estimate.iter().zip(truth).map(|(e, p)| libm::fabs(e - p));
        Self {
            l1: math::sum(diffs()),
            l2: math::sum(diffs().map(|x| x * x)),
            lq: math::sum(diffs().map(|x| libm::pow(x, q))),
        }
    }

    /// The loss a run with loss order `q` is judged by.
    pub fn for_order(&self, q: f64) -> f64 {
        if q == 2.0 {
            self.l2
        } else if q == 1.0 {
            self.l1
        } else {
            self.lq
        }
    }
}

/// Clamps negatives to zero and rescales onto the simplex. Returns the
/// uniform vector when nothing positive remains.
pub fn clamp_renormalize(estimate: &[f64]) -> Vec<f64> {
    let clamped: Vec<f64> = estimate.iter().map(|&x| x.max(0.0)).collect();
    let total = math::sum(clamped.iter().copied());
    if total > 0.0 {
        clamped.iter().map(|x| x / total).collect()
    } else {
        alloc::vec![1.0 / estimate.len() as f64; estimate.len()]
    }
}
