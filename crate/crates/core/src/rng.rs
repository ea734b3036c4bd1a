//! Deterministic random numbers.
//!
//! The generator is ChaCha8 (counter based, identical output on every
//! platform). A generator is identified by a 64-bit seed and a 64-bit stream
//! id; distinct streams under one seed are statistically independent.
//!
//! Draw accounting, in raw 64-bit words:
//! - [`Rng::uniform`]: 1 word.
//! - [`Rng::below`]: 1 word (multiply-high reduction, no rejection).
//! - [`Rng::normal_pair`]: 2 uniforms (Box–Muller), yields 2 normals.
//! - [`Rng::shuffle`]: `len - 1` words (Fisher–Yates).
//! - `Tensor::randn` with `n` elements: `2 * ceil(n / 2)` uniforms; for odd
//!   `n` the last spare normal is discarded.

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Named stream ids so independent consumers never share a sequence.
pub mod stream {
    pub const INIT: u64 = 1;
    pub const TRAIN: u64 = 2;
    pub const DATASET: u64 = 3;
    pub const SPLIT: u64 = 4;
    pub const EXCITATION: u64 = 5;
    pub const NOISE: u64 = 6;
}

#[derive(Debug, Clone)]
pub struct Rng {
    seed: u64,
    core: ChaCha8Rng,
}

impl Rng {
    pub fn new(seed: u64) -> Self {
        Self::with_stream(seed, 0)
    }

    pub fn with_stream(seed: u64, stream: u64) -> Self {
        let mut core = ChaCha8Rng::seed_from_u64(seed);
        core.set_stream(stream);
        Rng { seed, core }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn next_u64(&mut self) -> u64 {
        self.core.next_u64()
    }

    /// Uniform in `[0, 1)` with 53 bits of resolution.
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform integer in `0..n`. `n` must be nonzero.
    pub fn below(&mut self, n: usize) -> usize {
        debug_assert!(n > 0);
        ((self.next_u64() as u128 * n as u128) >> 64) as usize
    }

    /// Two independent standard normals from two uniforms.
    pub fn normal_pair(&mut self) -> (f64, f64) {
        // 1 - u lies in (0, 1], so the log is finite.
        let u1 = 1.0 - self.uniform();
        let u2 = self.uniform();
        let r = (-2.0 * u1.ln()).sqrt();
        let theta = 2.0 * std::f64::consts::PI * u2;
        (r * theta.cos(), r * theta.sin())
    }

    /// Fill `out` with N(mean, std²) samples.
    pub fn fill_normal(&mut self, out: &mut [f64], mean: f64, std: f64) {
        let mut chunks = out.chunks_exact_mut(2);
        for pair in &mut chunks {
            let (a, b) = self.normal_pair();
            pair[0] = mean + std * a;
            pair[1] = mean + std * b;
        }
        if let [last] = chunks.into_remainder() {
            let (a, _) = self.normal_pair();
            *last = mean + std * a;
        }
    }

    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i + 1);
            items.swap(i, j);
        }
    }
}
