//! Deterministic random draws on top of ChaCha8.
//!
//! Distributions are hand-rolled from raw 64-bit output so that streams are
//! bit-reproducible across platforms and independent of any distribution
//! crate's sampling internals.

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

pub type Rng = ChaCha8Rng;

pub fn seeded(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Derive an independent stream from a base seed and a stream tag.
pub fn substream(seed: u64, tag: u64) -> Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(tag);
    r
}

/// Uniform draw in [0, 1) with 53 bits of precision.
pub fn uniform(rng: &mut Rng) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Uniform draw in [lo, hi).
pub fn uniform_in(rng: &mut Rng, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * uniform(rng)
}

/// Uniform integer in [0, n).
pub fn index(rng: &mut Rng, n: usize) -> usize {
    debug_assert!(n > 0);
    // Rejection sampling over the widest multiple of n below 2^64.
    let n64 = n as u64;
    let zone = u64::MAX - u64::MAX % n64;
    loop {
        let x = rng.next_u64();
        if x < zone {
            return (x % n64) as usize;
        }
    }
}

/// Standard normal draw via Box-Muller.
pub fn gaussian(rng: &mut Rng) -> f64 {
    // u1 in (0,1] so the log is finite.
    let u1 = 1.0 - uniform(rng);
    let u2 = uniform(rng);
    let r = libm::sqrt(-2.0 * libm::log(u1));
    r * libm::cos(2.0 * core::f64::consts::PI * u2)
}

pub fn gaussian_scaled(rng: &mut Rng, mean: f64, std: f64) -> f64 {
    mean + std * gaussian(rng)
}
