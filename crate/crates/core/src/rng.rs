//! Portable pseudo-random number generation.
//!
//! Reproducibility of synthesized datasets is part of the toolkit's contract,
//! so the generator is spelled out here rather than borrowed from a crate
//! whose stream could change between versions:
//!
//! * state seeding: SplitMix64 (Steele, Lea, Flood 2014),
//! * core generator: xoshiro256++ (Blackman, Vigna 2019),
//! * uniform doubles: the top 53 bits of each 64-bit output, mapped to
//!   `[0, 1)` as `(x >> 11) * 2^-53`,
//! * normal deviates: the Marsaglia polar method (one deviate per accepted
//!   pair; the second root is discarded to keep the stream position a simple
//!   function of the accepted draw count).
//!
//! Independent substreams are derived with [`derive_seed`], mixing a tag
//! sequence into the base seed through the SplitMix64 finalizer. Campaign
//! synthesis keys one substream per (pose index, anchor id), which makes the
//! generated dataset independent of evaluation order.

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 finalizer; bijective on u64.
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives a substream seed from a base seed and an ordered tag sequence.
pub fn derive_seed(base: u64, tags: &[u64]) -> u64 {
    let mut z = mix64(base.wrapping_add(GOLDEN));
    for &t in tags {
        z = mix64(z.wrapping_mul(GOLDEN) ^ t);
    }
    z
}

/// xoshiro256++ with SplitMix64 seeding.
#[derive(Debug, Clone)]
pub struct Rng {
    s: [u64; 4],
}

impl Rng {
    pub fn new(seed: u64) -> Self {
        let mut sm = seed;
        let mut next = || {
            sm = sm.wrapping_add(GOLDEN);
            mix64(sm)
        };
        Rng {
            s: [next(), next(), next(), next()],
        }
    }

    /// Generator for the substream identified by `tags` under `base` seed.
    pub fn substream(base: u64, tags: &[u64]) -> Self {
        Rng::new(derive_seed(base, tags))
    }

    pub fn next_u64(&mut self) -> u64 {
        let result = self.s[0]
            .wrapping_add(self.s[3])
            .rotate_left(23)
            .wrapping_add(self.s[0]);
        let t = self.s[1] << 17;
        self.s[2] ^= self.s[0];
        self.s[3] ^= self.s[1];
        self.s[1] ^= self.s[2];
        self.s[0] ^= self.s[3];
        self.s[2] ^= t;
        self.s[3] = self.s[3].rotate_left(45);
        result
    }

    /// Uniform double in `[0, 1)` with 53 random bits.
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform double in `[lo, hi)`; `lo` when the interval is empty.
    pub fn uniform_range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    /// Standard normal deviate via the Marsaglia polar method.
    pub fn normal(&mut self) -> f64 {
        loop {
            let u = 2.0 * self.uniform() - 1.0;
            let v = 2.0 * self.uniform() - 1.0;
            let s = u * u + v * v;
            if s > 0.0 && s < 1.0 {
                return u * (-2.0 * s.ln() / s).sqrt();
            }
        }
    }

    /// Integer in `[0, n)`; used for shuffling. `n` must be nonzero.
    pub fn below(&mut self, n: usize) -> usize {
        // Multiply-shift bounding; bias is < 2^-64 per draw, irrelevant here,
        // and the mapping is fully deterministic.
        ((self.next_u64() as u128 * n as u128) >> 64) as usize
    }

    /// Fisher-Yates shuffle.
    pub fn shuffle<T>(&mut self, xs: &mut [T]) {
        for i in (1..xs.len()).rev() {
            let j = self.below(i + 1);
            xs.swap(i, j);
        }
    }
}
