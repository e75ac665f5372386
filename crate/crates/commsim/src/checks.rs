//! Self-checks behind `commsim check` and the acceptance test target.
//!
//! Each check returns a [`CheckOutcome`]; nothing here panics on a failed
//! criterion.

use std::fmt;
use std::str::FromStr;
use std::sync::OnceLock;

use commsim_core::dist::{geometric_half_norm, norm_q};
use commsim_core::protocol::{plan_refinement, simulate};
use commsim_core::{verify_transcript, Distribution, Round1Plan, Sampler, Scheme, SchemeConfig};
use rand_chacha::rand_core::RngCore;

use crate::error::{Error, Result};
use crate::eval::{cell_seed, run_cell, transcripts_verified, trial_rng, Cell, CellSummary};
use crate::family::Family;
use crate::sweep::{fig1_left, fig1_right};

#[derive(Debug, Clone, PartialEq)]
pub struct CheckOutcome {
    pub id: &'static str,
    pub title: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl CheckOutcome {
    fn new(id: &'static str, title: &'static str, passed: bool, detail: String) -> Self {
        Self {
            id,
            title,
            passed,
            detail,
        }
    }

    fn from_result(id: &'static str, title: &'static str, r: Result<(bool, String)>) -> Self {
        match r {
            Ok((passed, detail)) => Self::new(id, title, passed, detail),
            Err(e) => Self::new(id, title, false, format!("error: {e}")),
        }
    }
}

impl fmt::Display for CheckOutcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let verdict = if self.passed { "PASS" } else { "FAIL" };
        write!(f, "{verdict} [{}] {}: {}", self.id, self.title, self.detail)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Suite {
    Fast,
    Full,
}

impl FromStr for Suite {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "fast" => Ok(Suite::Fast),
            "full" => Ok(Suite::Full),
            other => Err(format!("unknown suite `{other}` (expected fast or full)")),
        }
    }
}

pub fn run_suite(suite: Suite) -> Vec<CheckOutcome> {
    let mut out = vec![norm_identities(), hhp_sandwich(), estimator_oracles()];
    if suite == Suite::Full {
        out.extend([
            l2_risk_envelope(),
            l1_risk_envelope(),
            fig1_dominance(),
            fig1_right_ratios(),
            fig1_left_gap(),
            dimension_free(),
        ]);
    }
    // last, so it also reports every transcript verified above
    out.push(protocol_contracts());
    if suite == Suite::Full {
        out.extend([fig1_left_scaling(), fig1_right_bound()]);
    }
    out
}

const SEED: u64 = 0x5eed_c0de;

fn below<R: RngCore>(rng: &mut R, bound: u64) -> u64 {
    rng.next_u64() % bound
}

/// Criterion 1.
pub fn norm_identities() -> CheckOutcome {
    let run = || -> Result<(bool, String)> {
        let mut worst: f64 = 0.0;
        for d in [2, 10, 1000] {
            let h = Distribution::uniform(d)?.half_norm();
            worst = worst.max((h - d as f64).abs());
        }
        let mut worst_geo: f64 = 0.0;
        for beta in [0.2, 0.5, 0.8, 0.99] {
            for d in [10, 100, 1000] {
                let numeric = Distribution::geometric(beta, d)?.half_norm();
                worst_geo = worst_geo.max((numeric - geometric_half_norm(beta, d)?).abs());
            }
        }
        Ok((
            worst <= 1e-9 && worst_geo <= 1e-9,
            format!("max |uniform - d| = {worst:.3e}, max |geometric - closed form| = {worst_geo:.3e} (tol 1e-9)"),
        ))
    };
    CheckOutcome::from_result("c1", "norm identities", run())
}

fn hhp_family_cases() -> Result<Vec<Distribution>> {
    let mut out = Vec::new();
    for d in [2, 10, 100, 1000] {
        out.push(Distribution::uniform(d)?);
        out.push(Distribution::point_mass(d, d - 1)?);
        for beta in [0.2, 0.5, 0.8, 0.99] {
            out.push(Distribution::geometric(beta, d)?);
        }
        for lambda in [0.5, 1.0, 1.5, 2.0, 3.0] {
            out.push(Distribution::zipf(lambda, d)?);
        }
        let s = 5.min(d);
        out.push(Distribution::sparse_random(
            s,
            d,
            &mut trial_rng(SEED, d as u64),
        )?);
    }
    Ok(out)
}

/// Criterion 2: `||p||_{1/2} >= max_h h^2 p_(h) >= C_delta ||p||_{(1+delta)/2}`.
pub fn hhp_sandwich() -> CheckOutcome {
    let run = || -> Result<(bool, String)> {
        let mut cases = hhp_family_cases()?;
        let families = cases.len();
        for i in 0..1000u64 {
            let mut rng = trial_rng(SEED ^ 2, i);
            let d = 2 + below(&mut rng, 199) as usize;
            let p = match i % 4 {
                0 => Distribution::random_flat(d, &mut rng)?,
                1 => {
                    let s = 1 + below(&mut rng, d as u64) as usize;
                    Distribution::sparse_random(s, d, &mut rng)?
                }
                2 => {
                    let beta = (1 + below(&mut rng, 1000)) as f64 / 1000.0;
                    Distribution::geometric(beta, d)?
                }
                _ => {
                    let lambda = (1 + below(&mut rng, 400)) as f64 / 100.0;
                    Distribution::zipf(lambda, d)?
                }
            };
            cases.push(p);
        }
        let mut failures = Vec::new();
        for (k, p) in cases.iter().enumerate() {
            let half = p.half_norm();
            let (_, hstar) = p.sorted().max_h_squared_p();
            if half < hstar {
                failures.push(format!(
                    "case {k} (d={}): half-norm {half:e} < h* {hstar:e}",
                    p.d()
                ));
            }
            for delta in [0.5f64, 1.0] {
                let c = (delta / (1.0 + delta)).powf(2.0 / (1.0 + delta));
                let lower = c * norm_q(p.probs(), (1.0 + delta) / 2.0)?;
                if hstar < lower {
                    failures.push(format!(
                        "case {k} (d={}, delta={delta}): h* {hstar:e} < {lower:e}",
                        p.d()
                    ));
                }
            }
        }
        let detail = if failures.is_empty() {
            format!(
                "{} distributions ({families} family + 1000 random), delta in {{0.5, 1}}, zero tolerance",
                cases.len()
            )
        } else {
            format!("{} violations; first: {}", failures.len(), failures[0])
        };
        Ok((failures.is_empty(), detail))
    };
    CheckOutcome::from_result("c2", "h* sandwich", run())
}

struct Moments {
    sum: Vec<f64>,
    sum_sq: Vec<f64>,
    trials: usize,
}

impl Moments {
    fn new(d: usize) -> Self {
        Self {
            sum: vec![0.0; d],
            sum_sq: vec![0.0; d],
            trials: 0,
        }
    }

    fn push(&mut self, x: &[f64]) {
        for (j, &v) in x.iter().enumerate() {
            self.sum[j] += v;
            self.sum_sq[j] += v * v;
        }
        self.trials += 1;
    }

    /// Checks each coordinate's mean (3 stderr) and variance (10% relative)
    /// against `p_j` and `p_j (1 - p_j) / n_j`.
    fn compare(&self, p: &[f64], n: &[usize], label: &str, failures: &mut Vec<String>) -> f64 {
        let t = self.trials as f64;
        let mut worst_rel: f64 = 0.0;
        for j in 0..p.len() {
            let mean = self.sum[j] / t;
            let var = (self.sum_sq[j] - t * mean * mean) / (t - 1.0);
            let se = (var / t).sqrt();
            if (mean - p[j]).abs() > 3.0 * se {
                failures.push(format!(
                    "{label} symbol {}: mean {mean:.6} vs p {:.6} (3se = {:.2e})",
                    j + 1,
                    p[j],
                    3.0 * se
                ));
            }
            let want = p[j] * (1.0 - p[j]) / n[j] as f64;
            let rel = (var / want - 1.0).abs();
            worst_rel = worst_rel.max(rel);
            if rel > 0.10 {
                failures.push(format!(
                    "{label} symbol {}: variance {var:.3e} vs {want:.3e}",
                    j + 1
                ));
            }
        }
        worst_rel
    }
}

/// Straight transcription of the ℓ2 allocation, kept independent of the
/// library code it checks.
fn reference_sizes(p_hat: &[f64], n: usize, b: u32) -> Vec<usize> {
    let d = p_hat.len() as f64;
    let slots = ((1u64 << b) - 1) as f64;
    let half = (n / 2) as f64;
    let roots: Vec<f64> = p_hat.iter().map(|x| x.sqrt()).collect();
    let total: f64 = roots.iter().sum();
    roots
        .iter()
        .map(|r| {
            let pi = r / total;
            let raw = (half * slots * (d * pi + 1.0) / (4.0 * d)).min(half);
            (raw.floor() as usize).max(1)
        })
        .collect()
}

/// Criterion 3 at `d = 8, b = 2, n = 1024` with `10^4` trials.
pub fn estimator_oracles() -> CheckOutcome {
    let run = || -> Result<(bool, String)> {
        let (d, b, n, trials) = (8usize, 2u32, 1024usize, 10_000u64);
        let p = Distribution::geometric(0.8, d)?;
        let sampler = Sampler::new(&p);
        let mut failures = Vec::new();

        let plan1 = Round1Plan::new(n, d, b)?;
        let mut m1 = Moments::new(d);
        let mut samples = vec![0; n];
        let mut counts = Vec::new();
        for t in 0..trials {
            sampler.fill(&mut trial_rng(SEED ^ 3, t), &mut samples);
            let est = plan1.estimate(&plan1.encode_all(&samples))?;
            m1.push(&est.p_hat);
            counts = est.per_symbol_count;
        }
        let r1 = m1.compare(p.probs(), &counts, "round 1", &mut failures);

        // one plan from a single localization round, then resample round 2
        let cfg = SchemeConfig::new(n, d, b);
        let first = cfg.round1_clients();
        let setup = Round1Plan::new(first, d, b)?;
        let mut r1_samples = vec![0; first];
        sampler.fill(&mut trial_rng(SEED ^ 4, 0), &mut r1_samples);
        let refinement = plan_refinement(&setup, &setup.encode_all(&r1_samples), &cfg)?;
        let plan2 = refinement.plan;
        let expected = reference_sizes(&refinement.coarse.p_hat, n, b);
        if plan2.sizes() != expected.as_slice() {
            failures.push(format!(
                "round-2 sizes {:?} differ from reference allocation {expected:?}",
                plan2.sizes()
            ));
        }
        let mut m2 = Moments::new(d);
        let mut samples2 = vec![0; cfg.round2_clients()];
        for t in 0..trials {
            sampler.fill(&mut trial_rng(SEED ^ 5, t), &mut samples2);
            m2.push(&plan2.estimate(&plan2.encode_all(&samples2))?);
        }
        let r2 = m2.compare(p.probs(), plan2.sizes(), "round 2", &mut failures);

        let detail = if failures.is_empty() {
            format!(
                "all 16 means within 3 stderr; worst variance deviation {:.1}% (round 1), {:.1}% (round 2); round-2 sizes {:?}",
                100.0 * r1,
                100.0 * r2,
                plan2.sizes()
            )
        } else {
            failures.join("; ")
        };
        Ok((failures.is_empty(), detail))
    };
    CheckOutcome::from_result("c3", "unbiasedness and variance oracles", run())
}

/// Criterion 4: bit budget, plan contracts, and `n * b` bits on a battery of
/// configurations, plus the count of transcripts verified during Monte Carlo.
pub fn protocol_contracts() -> CheckOutcome {
    let run = || -> Result<(bool, String)> {
        let families = [
            Family::uniform(),
            Family::geometric(0.5),
            Family::zipf(1.0),
            Family::sparse(3),
            Family::point(1),
        ];
        let mut runs = 0usize;
        let mut failures = Vec::new();
        for fam in families {
            for d in [1usize, 3, 7, 50] {
                if fam.kind == crate::family::FamilyKind::Sparse && d < 3 {
                    continue;
                }
                let p = fam.build(d, SEED)?;
                for b in 1..=4u32 {
                    for n in [40 * d + 1, 40 * d + 2, 400 * d + 7] {
                        for q in [1.0, 1.5, 2.0] {
                            for scheme in [Scheme::Minimax, Scheme::LocalizeRefine] {
                                let cfg = SchemeConfig::new(n, d, b).with_q(q);
                                let mut rng = trial_rng(cell_seed(SEED, d, n, b), runs as u64);
                                let (result, transcript) = simulate(scheme, &p, &cfg, &mut rng)?;
                                runs += 1;
                                if result.stats.total_bits != (n as u64) * u64::from(b) {
                                    failures.push(format!(
                                        "{scheme} d={d} n={n} b={b}: {} bits",
                                        result.stats.total_bits
                                    ));
                                }
                                if let Err(v) = verify_transcript(&transcript, &cfg) {
                                    failures.push(format!(
                                        "{scheme} {fam} d={d} n={n} b={b} q={q}: {}",
                                        v[0]
                                    ));
                                }
                            }
                        }
                    }
                }
            }
        }
        let detail = format!(
            "{runs} battery runs, {} violations; {} Monte Carlo transcripts verified in this process{}",
            failures.len(),
            transcripts_verified(),
            failures.first().map(|f| format!("; first: {f}")).unwrap_or_default()
        );
        Ok((failures.is_empty(), detail))
    };
    CheckOutcome::from_result("c4", "protocol contracts", run())
}

fn envelope_families() -> [Family; 4] {
    [
        Family::uniform(),
        Family::geometric(0.8),
        Family::zipf(2.0),
        Family::sparse(5),
    ]
}

fn envelope(q: f64) -> Result<(bool, String)> {
    let mut parts = Vec::new();
    let mut passed = true;
    for fam in envelope_families() {
        for b in 1..=3 {
            let row = run_cell(&Cell {
                scheme: Scheme::LocalizeRefine,
                family: fam,
                d: 100,
                n: 1_000_000,
                b,
                q,
                trials: 50,
                seed: SEED,
            })?;
            let bound = row
                .theory_bound
                .ok_or_else(|| Error::Spec("no bound".into()))?;
            let ok = row.mean_loss <= bound;
            passed &= ok;
            parts.push(format!(
                "{fam} b={b}: {:.3e} {} {:.3e}",
                row.mean_loss,
                if ok { "<=" } else { ">" },
                bound
            ));
        }
    }
    Ok((passed, parts.join(", ")))
}

/// Criterion 5: mean squared ℓ2 error within the explicit risk bound.
pub fn l2_risk_envelope() -> CheckOutcome {
    CheckOutcome::from_result("c5", "l2 risk envelope (d=100, n=1e6)", envelope(2.0))
}

/// Criterion 6: mean ℓ1 error of the `q = 1` scheme within its bound.
pub fn l1_risk_envelope() -> CheckOutcome {
    CheckOutcome::from_result("c6", "l1 risk envelope (d=100, n=1e6)", envelope(1.0))
}

struct Fig1 {
    left: Vec<CellSummary>,
    right: Vec<CellSummary>,
}

fn fig1_rows() -> &'static std::result::Result<Fig1, String> {
    static ROWS: OnceLock<std::result::Result<Fig1, String>> = OnceLock::new();
    ROWS.get_or_init(|| {
        let left = fig1_left().run().map_err(|e| e.to_string())?;
        let right = fig1_right().run().map_err(|e| e.to_string())?;
        Ok(Fig1 { left, right })
    })
}

fn with_fig1(f: impl FnOnce(&Fig1) -> (bool, String)) -> Result<(bool, String)> {
    match fig1_rows() {
        Ok(rows) => Ok(f(rows)),
        Err(e) => Err(Error::Spec(e.clone())),
    }
}

fn lookup(rows: &[CellSummary], scheme: Scheme, d: usize, n: usize) -> f64 {
    rows.iter()
        .find(|r| r.scheme == scheme && r.d == d && r.n == n)
        .map(|r| r.mean_loss)
        .unwrap_or(f64::NAN)
}

/// Criterion 7(a): localize-and-refine below minimax at every preset cell.
pub fn fig1_dominance() -> CheckOutcome {
    let run = with_fig1(|fig| {
        let mut losing = Vec::new();
        let mut cells = 0;
        for rows in [&fig.left, &fig.right] {
            for r in rows.iter().filter(|r| r.scheme == Scheme::LocalizeRefine) {
                cells += 1;
                let mm = lookup(rows, Scheme::Minimax, r.d, r.n);
                if r.mean_loss.partial_cmp(&mm) != Some(std::cmp::Ordering::Less) {
                    losing.push(format!(
                        "d={} n={}: lr {:.3e} vs minimax {:.3e}",
                        r.d, r.n, r.mean_loss, mm
                    ));
                }
            }
        }
        let detail = if losing.is_empty() {
            format!("lr below minimax at all {cells} cells")
        } else {
            format!(
                "lr not below minimax at {}/{cells} cells: {}",
                losing.len(),
                losing.join(", ")
            )
        };
        (losing.is_empty(), detail)
    });
    CheckOutcome::from_result("c7a", "fig1 dominance at every cell", run)
}

/// Criterion 7(b): growth from `d = 100` to `d = 800` at `n = 5e4`.
pub fn fig1_right_ratios() -> CheckOutcome {
    let run = with_fig1(|fig| {
        let n = 50_000;
        let ratio = |s| lookup(&fig.right, s, 800, n) / lookup(&fig.right, s, 100, n);
        let mm = ratio(Scheme::Minimax);
        let lr = ratio(Scheme::LocalizeRefine);
        (
            mm >= 4.0 && lr <= 2.0,
            format!("minimax d800/d100 = {mm:.3} (need >= 4), lr = {lr:.3} (need <= 2)"),
        )
    });
    CheckOutcome::from_result("c7b", "fig1 right-panel ratios", run)
}

/// Criterion 7(c): minimax at least 5x worse at the largest left-panel `n`.
pub fn fig1_left_gap() -> CheckOutcome {
    let run = with_fig1(|fig| {
        let n = fig.left.iter().map(|r| r.n).max().unwrap_or(0);
        let mut ok = true;
        let mut parts = Vec::new();
        for d in fig1_left().d {
            let gap = lookup(&fig.left, Scheme::Minimax, d, n)
                / lookup(&fig.left, Scheme::LocalizeRefine, d, n);
            ok &= gap >= 5.0;
            parts.push(format!("d={d}: minimax/lr = {gap:.3}"));
        }
        (ok, format!("n={n}: {} (need >= 5)", parts.join(", ")))
    });
    CheckOutcome::from_result("c7c", "fig1 left-panel gap at largest n", run)
}

/// Criterion 8: one-bit error nearly independent of `d` for Geo(0.8).
pub fn dimension_free() -> CheckOutcome {
    let run = || -> Result<(bool, String)> {
        let mut means = Vec::new();
        for d in [200, 800] {
            let row = run_cell(&Cell {
                scheme: Scheme::LocalizeRefine,
                family: Family::geometric(0.8),
                d,
                n: 1_000_000,
                b: 1,
                q: 2.0,
                trials: 50,
                seed: SEED,
            })?;
            means.push(row.mean_loss);
        }
        let (lo, hi) = (means[0].min(means[1]), means[0].max(means[1]));
        Ok((
            hi <= 1.5 * lo,
            format!(
                "d=200: {:.3e}, d=800: {:.3e}, ratio {:.3} (need <= 1.5)",
                means[0],
                means[1],
                hi / lo
            ),
        ))
    };
    CheckOutcome::from_result("c8", "dimension-free one-bit regime", run())
}

/// Preset example: doubling `n` roughly halves the minimax error.
pub fn fig1_left_scaling() -> CheckOutcome {
    let run = with_fig1(|fig| {
        let mut ok = true;
        let mut parts = Vec::new();
        for d in fig1_left().d {
            for (small, big) in [(5_000, 10_000), (10_000, 20_000), (50_000, 100_000)] {
                let ratio = lookup(&fig.left, Scheme::Minimax, d, small)
                    / lookup(&fig.left, Scheme::Minimax, d, big);
                let inside = (1.6..=2.5).contains(&ratio);
                ok &= inside;
                parts.push(format!(
                    "d={d} n={small}->{big}: {ratio:.3}{}",
                    if inside { "" } else { " (outside)" }
                ));
            }
        }
        (
            ok,
            format!("minimax ratios, need [1.6, 2.5]: {}", parts.join(", ")),
        )
    });
    CheckOutcome::from_result("e1", "fig1 left: minimax error halves when n doubles", run)
}

/// Preset example: localize-and-refine within the ℓ2 risk bound on the right panel.
pub fn fig1_right_bound() -> CheckOutcome {
    let run = with_fig1(|fig| {
        let mut ok = true;
        let mut parts = Vec::new();
        for r in fig
            .right
            .iter()
            .filter(|r| r.scheme == Scheme::LocalizeRefine)
        {
            let bound = r.theory_bound.unwrap_or(f64::NAN);
            ok &= r.mean_loss <= bound;
            parts.push(format!("d={}: {:.3e} vs {:.3e}", r.d, r.mean_loss, bound));
        }
        (ok, parts.join(", "))
    });
    CheckOutcome::from_result("e2", "fig1 right: lr within l2 bound", run)
}
