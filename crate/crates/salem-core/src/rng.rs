//! Seeded randomness: a ChaCha stream for generators whose visit order is
//! part of their contract, and a counter-based generator for Monte Carlo
//! loops so the sample stream is independent of batching or thread count.

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

/// Stream RNG for the measure generators.
pub struct StreamRng(ChaCha8Rng);

impl StreamRng {
    pub fn seed_from_u64(seed: u64) -> Self {
        StreamRng(ChaCha8Rng::seed_from_u64(seed))
    }

    /// Uniform in `0..bound` by rejection, bias-free.
    pub fn below(&mut self, bound: usize) -> usize {
        assert!(bound > 0);
        let b = bound as u64;
        let zone = u64::MAX - u64::MAX % b;
        loop {
            let r = self.0.next_u64();
            if r < zone {
                return (r % b) as usize;
            }
        }
    }

    /// Uniform in `[0, 1)` with 53 random bits.
    pub fn unit_f64(&mut self) -> f64 {
        (self.0.next_u64() >> 11) as f64 * (1.0 / 9007199254740992.0)
    }

    /// Partial Fisher-Yates: the first `take` entries of a random permutation
    /// of `0..len`, returned sorted.
    pub fn choose_sorted(&mut self, len: usize, take: usize) -> alloc::vec::Vec<usize> {
        let mut idx: alloc::vec::Vec<usize> = (0..len).collect();
        for i in 0..take {
            let j = i + self.below(len - i);
            idx.swap(i, j);
        }
        let mut out: alloc::vec::Vec<usize> = idx[..take].to_vec();
        out.sort_unstable();
        out
    }
}

/// Counter-based generator: the value at index `i` depends only on
/// `(seed, i)`, never on call order.
#[derive(Debug, Clone, Copy)]
pub struct CounterRng {
    seed: u64,
}

impl CounterRng {
    pub fn new(seed: u64) -> Self {
        CounterRng { seed }
    }

    pub fn u64_at(&self, index: u64) -> u64 {
        // splitmix64 finalizer over a seed/index blend
        let mut z = self
            .seed
            .wrapping_add(0x9E3779B97F4A7C15)
            .wrapping_add(index.wrapping_mul(0xBF58476D1CE4E5B9));
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
        z ^ (z >> 31)
    }

    /// Uniform in `[0, 1)` at the given stream index.
    pub fn unit_f64_at(&self, index: u64) -> f64 {
        (self.u64_at(index) >> 11) as f64 * (1.0 / 9007199254740992.0)
    }

    /// Uniform point in `[0,1)^dim`, one stream index per sample.
    pub fn point_at(&self, sample: u64, dim: usize, out: &mut [f64]) {
        debug_assert_eq!(out.len(), dim);
        for (a, slot) in out.iter_mut().enumerate() {
            *slot = self.unit_f64_at(sample.wrapping_mul(dim as u64).wrapping_add(a as u64));
        }
    }
}

extern crate alloc;
