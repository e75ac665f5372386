//! Explicit-constant upper bounds on the risk of the localize-and-refine
//! scheme, used as oracles against Monte Carlo measurements. Logs are natural.

use crate::dist::Distribution;

fn n_times_2b(n: usize, b: u32) -> f64 {
    n as f64 * libm::pow(2.0, b as f64)
}

/// Round-1 concentration radius `3 d log(n d) / (n 2^b)`: with probability at
/// least `1 - 1/(nd)` every coarse estimate satisfies
/// `|sqrt(p_j) - sqrt(p̂_j)| <= sqrt(eps)` and the same for cube roots.
pub fn concentration_radius(n: usize, d: usize, b: u32) -> f64 {
    3.0 * d as f64 * libm::log(n as f64 * d as f64) / n_times_2b(n, b)
}

/// Squared-ℓ2 risk bound:
/// `3/n + 6 ||p||_{1/2} / (n 2^b) + 30 d^3 log(nd) / (n 2^b)^2`.
///
/// The three terms come from the failure event of the round-1 concentration
/// (`2/n`), plus the conditional error `6 ||p||_{1/2}/(n2^b) + 10 d^2 eps/(n2^b) + 1/n`.
pub fn l2_risk_bound(p: &Distribution, n: usize, b: u32) -> f64 {
    let d = p.d();
    let nb = n_times_2b(n, b);
    let eps = concentration_radius(n, d, b);
    3.0 / n as f64 + 6.0 * p.half_norm() / nb + 10.0 * (d * d) as f64 * eps / nb
}

/// ℓ1 risk bound:
/// `2/n + sqrt(2 ||p||_{1/2} / n) + sqrt(16 ||p||_{1/3} / (n 2^b)) + sqrt(48 d^3 eps / (n 2^b))`.
pub fn l1_risk_bound(p: &Distribution, n: usize, b: u32) -> f64 {
    let d = p.d() as f64;
    let nf = n as f64;
    let nb = n_times_2b(n, b);
    let eps = concentration_radius(n, p.d(), b);
    2.0 / nf
        + libm::sqrt(2.0 * p.half_norm() / nf)
        + libm::sqrt(16.0 * p.third_norm() / nb)
        + libm::sqrt(48.0 * d * d * d * eps / nb)
}
