//! Seeded, portable randomness.
//!
//! Every stochastic step in the pipeline (anchor draws, block ordering,
//! Gaussian simulation) pulls from ChaCha12 streams seeded through
//! [`stream`]/[`substream`], so a run is fully determined by its
//! configured seeds and reproduces bit-identically across platforms.
//! Normal variates use the trigonometric Box-Muller transform rather
//! than a library sampler so the variate stream is pinned by this file
//! alone.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha12Rng;

pub type Stream = ChaCha12Rng;

/// New generator for a top-level seed.
pub fn stream(seed: u64) -> Stream {
    ChaCha12Rng::seed_from_u64(seed)
}

/// Derive an independent seed for a tagged substream (worker ids, block
/// ids, stage tags). SplitMix64 finalizer over the combined words.
pub fn substream(seed: u64, tag: u64) -> u64 {
    let mut z = seed ^ tag.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Uniform in [0, 1): top 53 bits of one u64 draw.
pub fn uniform01(rng: &mut Stream) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Uniform in (0, 1]: never zero, safe under `ln`.
fn uniform_open01(rng: &mut Stream) -> f64 {
    ((rng.next_u64() >> 11) + 1) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Uniform integer in [0, n) by rejection, so the draw count per accepted
/// value is version-independent.
pub fn below(rng: &mut Stream, n: usize) -> usize {
    assert!(n > 0, "below(0)");
    let n = n as u64;
    let zone = u64::MAX - u64::MAX % n;
    loop {
        let v = rng.next_u64();
        if v < zone {
            return (v % n) as usize;
        }
    }
}

/// First `k` entries of a seeded partial Fisher-Yates shuffle of `0..n`:
/// a uniform sample of `k` distinct indices, in draw order.
pub fn sample_without_replacement(rng: &mut Stream, n: usize, k: usize) -> Vec<usize> {
    assert!(k <= n, "sample size exceeds population");
    let mut idx: Vec<usize> = (0..n).collect();
    for i in 0..k {
        let j = i + below(rng, n - i);
        idx.swap(i, j);
    }
    idx.truncate(k);
    idx
}

/// Standard-normal source: Box–Muller (trigonometric form) over a
/// ChaCha12 stream. Pairs are generated together; the second variate is
/// cached, so draws consume exactly one pair of uniforms per two normals.
pub struct NormalSource {
    rng: Stream,
    cached: Option<f64>,
}

impl NormalSource {
    pub fn new(seed: u64) -> Self {
        NormalSource {
            rng: stream(seed),
            cached: None,
        }
    }

    pub fn next(&mut self) -> f64 {
        if let Some(z) = self.cached.take() {
            return z;
        }
        let u1 = uniform_open01(&mut self.rng);
        let u2 = uniform01(&mut self.rng);
        let r = (-2.0 * u1.ln()).sqrt();
        let theta = 2.0 * std::f64::consts::PI * u2;
        self.cached = Some(r * theta.sin());
        r * theta.cos()
    }

    pub fn fill(&mut self, out: &mut [f64]) {
        for v in out {
            *v = self.next();
        }
    }
}
