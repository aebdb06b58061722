//! Seedable, splittable random streams.
//!
//! Each stream is a ChaCha8 generator seeded with `derive_stream(seed, i)`,
//! a SplitMix64 mix of the master seed and the stream index. Uniform
//! integers use rejection sampling so there is no modulo bias.

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

/// Stream index reserved for draws shared by a whole batch.
pub const BATCH_STREAM: u64 = u64::MAX;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn derive_stream(seed: u64, index: u64) -> u64 {
    splitmix64(seed ^ splitmix64(index))
}

#[derive(Debug, Clone)]
pub struct Stream {
    rng: ChaCha8Rng,
}

impl Stream {
    pub fn new(seed: u64) -> Self {
        Stream {
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    /// The `index`-th independent stream under `seed`.
    pub fn split(seed: u64, index: u64) -> Self {
        Self::new(derive_stream(seed, index))
    }

    pub fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    /// Uniform integer in `lo..=hi`.
    pub fn uniform_inclusive(&mut self, lo: u64, hi: u64) -> u64 {
        assert!(lo <= hi, "empty range {lo}..={hi}");
        let span = hi - lo;
        if span == u64::MAX {
            return self.next_u64();
        }
        let range = span + 1;
        // Largest multiple of `range` that fits; reject draws above it.
        let zone = u64::MAX - (u64::MAX % range + 1) % range;
        loop {
            let v = self.next_u64();
            if v <= zone {
                return lo + v % range;
            }
        }
    }

    /// Choose `k` distinct indices from `0..n` in selection order
    /// (partial Fisher–Yates).
    pub fn sample_indices(&mut self, n: usize, k: usize) -> Vec<usize> {
        assert!(k <= n);
        let mut pool: Vec<usize> = (0..n).collect();
        for i in 0..k {
            let j = self.uniform_inclusive(i as u64, (n - 1) as u64) as usize;
            pool.swap(i, j);
        }
        pool.truncate(k);
        pool
    }
}
