//! Seeded random stream for synthetic data, specified tightly enough to be
//! reimplemented outside Rust.
//!
//! * Generator: ChaCha with 8 rounds, 256-bit key = the seed as 8
//!   little-endian bytes followed by 24 zero bytes, nonce/stream 0, output
//!   consumed as little-endian 64-bit words.
//! * `uniform()`: `(next_u64 >> 11) * 2^-53`, in `[0, 1)`.
//! * `below(n)`: `floor(uniform() * n)`.
//! * `normal(mu, sigma)`: Box–Muller cosine branch with
//!   `u1 = 1 - uniform()`, `u2 = uniform()`,
//!   `mu + sigma * sqrt(-2 ln u1) * cos(2 pi u2)`; the sine branch is
//!   discarded so every normal draw consumes exactly two words.
//! * `lognormal(mu, sigma)`: `exp(normal(mu, sigma))`.

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub(crate) struct SynthRng(ChaCha8Rng);

impl SynthRng {
    pub(crate) fn new(seed: u64) -> Self {
        let mut key = [0u8; 32];
        key[..8].copy_from_slice(&seed.to_le_bytes());
        SynthRng(ChaCha8Rng::from_seed(key))
    }

    pub(crate) fn next_u64(&mut self) -> u64 {
        self.0.next_u64()
    }

    pub(crate) fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Index in `0..n`; `n` must be positive.
    pub(crate) fn below(&mut self, n: usize) -> usize {
        ((self.uniform() * n as f64) as usize).min(n - 1)
    }

    pub(crate) fn normal(&mut self, mu: f64, sigma: f64) -> f64 {
        let u1 = 1.0 - self.uniform();
        let u2 = self.uniform();
        mu + sigma * (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }

    pub(crate) fn lognormal(&mut self, mu: f64, sigma: f64) -> f64 {
        self.normal(mu, sigma).exp()
    }
}
