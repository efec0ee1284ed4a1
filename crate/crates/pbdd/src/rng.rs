//! Deterministic random streams.
//!
//! Everything random in this crate flows through ChaCha12 streams created
//! here, with samplers written against raw `u64` output. Results are
//! therefore reproducible bit for bit across platforms and independent of
//! distribution-crate internals: the exponential sampler is the inverse CDF
//! applied to a uniform, normals come from Box-Muller.

use rand_chacha::ChaCha12Rng;
use rand_core::{RngCore, SeedableRng};

/// A seeded stream. `substream` separates independent uses of one user seed
/// (per-node timers, generator phases) without correlation.
pub fn stream(seed: u64, substream: u64) -> ChaCha12Rng {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    rng.set_stream(substream);
    rng
}

/// Uniform sample in `[0, 1)` with 53 random mantissa bits.
pub fn unit_f64(rng: &mut impl RngCore) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Uniform sample in `[lo, hi)`.
pub fn uniform(rng: &mut impl RngCore, lo: f64, hi: f64) -> f64 {
    debug_assert!(lo <= hi);
    lo + (hi - lo) * unit_f64(rng)
}

/// Uniform integer in `[lo, hi]` (inclusive), by rejection on the top range.
pub fn uniform_usize(rng: &mut impl RngCore, lo: usize, hi: usize) -> usize {
    debug_assert!(lo <= hi);
    let span = (hi - lo + 1) as u64;
    let zone = u64::MAX - u64::MAX % span;
    loop {
        let v = rng.next_u64();
        if v < zone {
            return lo + (v % span) as usize;
        }
    }
}

/// Standard normal sample via Box-Muller. One sample per call; the partner
/// variate is discarded to keep the stream position easy to reason about.
pub fn standard_normal(rng: &mut impl RngCore) -> f64 {
    loop {
        let u1 = unit_f64(rng);
        if u1 <= f64::MIN_POSITIVE {
            continue;
        }
        let u2 = unit_f64(rng);
        let r = (-2.0 * u1.ln()).sqrt();
        return r * (std::f64::consts::TAU * u2).cos();
    }
}

/// Exponential sample with the given rate, via the inverse CDF
/// `-ln(1 - U) / rate`.
pub fn exponential(rng: &mut impl RngCore, rate: f64) -> f64 {
    debug_assert!(rate > 0.0);
    let u = unit_f64(rng);
    -(1.0 - u).ln() / rate
}
