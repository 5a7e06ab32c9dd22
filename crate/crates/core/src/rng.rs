//! Versioned random streams.
//!
//! Every stochastic routine draws from ChaCha8 seeded with
//! `seed_from_u64(seed)` and switched to stream `index` (replicate or
//! resample number), so fan-out order never changes results. Uniforms are
//! `rand`'s standard `f64` (53 high bits of one `u64`).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::function::gamma::ln_gamma;

/// Identifier recorded in reports next to the seed.
pub const GENERATOR: &str = "chacha8/seed_from_u64+set_stream/v1";

pub type StreamRng = ChaCha8Rng;

pub fn substream(seed: u64, stream: u64) -> StreamRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

pub fn uniform(rng: &mut StreamRng) -> f64 {
    rng.random::<f64>()
}

/// Index of the first cumulative weight exceeding one uniform draw.
/// `cumulative` must be non-decreasing and end at (about) 1.
pub fn categorical(rng: &mut StreamRng, cumulative: &[f64]) -> usize {
    let u = uniform(rng);
    cumulative
        .iter()
        .position(|&c| u < c)
        .unwrap_or(cumulative.len() - 1)
}

const INVERSION_LIMIT: f64 = 30.0;

/// Poisson variate: sequential inversion (one uniform) below rate 30,
/// Hormann's PTRS transformed rejection above.
pub fn poisson(rng: &mut StreamRng, rate: f64) -> u64 {
    if rate <= 0.0 {
        return 0;
    }
    if rate < INVERSION_LIMIT {
        let u = uniform(rng);
        let mut k = 0u64;
        let mut p = (-rate).exp();
        let mut cdf = p;
        while u > cdf && k < 10_000 {
            k += 1;
            p *= rate / k as f64;
            cdf += p;
            if p == 0.0 {
                break;
            }
        }
        return k;
    }
    let slam = rate.sqrt();
    let loglam = rate.ln();
    let b = 0.931 + 2.53 * slam;
    let a = -0.059 + 0.02483 * b;
    let inv_alpha = 1.1239 + 1.1328 / (b - 3.4);
    let vr = 0.9277 - 3.6224 / (b - 2.0);
    loop {
        let u = uniform(rng) - 0.5;
        let v = uniform(rng);
        let us = 0.5 - u.abs();
        let k = ((2.0 * a / us + b) * u + rate + 0.43).floor();
        if us >= 0.07 && v <= vr {
            return k as u64;
        }
        if k < 0.0 || (us < 0.013 && v > us) {
            continue;
        }
        let lhs = v.ln() + inv_alpha.ln() - (a / (us * us) + b).ln();
        let rhs = -rate + k * loglam - ln_gamma(k + 1.0);
        if lhs <= rhs {
            return k as u64;
        }
    }
}
