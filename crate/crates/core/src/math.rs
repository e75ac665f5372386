use rand_core::RngCore;

/// Compensated (Neumaier) summation.
pub(crate) fn sum<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    let mut total = 0.0f64;
    let mut comp = 0.0f64;
    for v in values {
        let t = total + v;
        if libm::fabs(total) >= libm::fabs(v) {
            comp += (total - t) + v;
        } else {
            comp += (v - t) + total;
        }
        total = t;
    }
    total + comp
}

/// Uniform draw from `[0, 1)` with 53 bits of precision.
pub(crate) fn uniform01<R: RngCore + ?Sized>(rng: &mut R) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Unbiased uniform integer in `0..bound` (rejection on the top of the range).
pub(crate) fn uniform_below<R: RngCore + ?Sized>(rng: &mut R, bound: u64) -> u64 {
    debug_assert!(bound > 0);
    let zone = u64::MAX - (u64::MAX - bound + 1) % bound;
    loop {
        let v = rng.next_u64();
        if v <= zone {
            return v % bound;
        }
    }
}

/// Standard exponential variate, strictly positive.
pub(crate) fn exp1<R: RngCore + ?Sized>(rng: &mut R) -> f64 {
    loop {
        let u = 1.0 - uniform01(rng);
        let e = -libm::log(u);
        if e > 0.0 {
            return e;
        }
    }
}
