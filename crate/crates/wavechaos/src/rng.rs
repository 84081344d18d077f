//! Deterministic parallel sampling.
//!
//! Monte Carlo loops draw from a fixed partition of the sample index range
//! into chunks of 2^16 samples. Chunk j uses its own ChaCha8 stream seeded
//! by (seed, j), and per-chunk accumulators are merged in index order, so a
//! run is bit-identical for a given (seed, sample count) regardless of how
//! many threads execute it.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

/// Samples per independently seeded chunk.
pub const CHUNK: u64 = 1 << 16;

/// RNG for chunk index `chunk` of the stream identified by `seed`.
pub fn chunk_rng(seed: u64, chunk: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&chunk.to_le_bytes());
    key[16..24].copy_from_slice(&0x9e37_79b9_7f4a_7c15_u64.to_le_bytes());
    ChaCha8Rng::from_seed(key)
}

/// Accumulator merged across chunks in index order.
pub trait Accum: Send {
    fn zero() -> Self;
    fn merge(&mut self, other: Self);
}

/// Mean / variance accumulator over possibly several correlated components.
#[derive(Debug, Clone)]
pub struct Moments {
    pub sum: Vec<f64>,
    pub sumsq: Vec<f64>,
    pub count: u64,
}

impl Moments {
    pub fn with_width(k: usize) -> Self {
        Self { sum: vec![0.0; k], sumsq: vec![0.0; k], count: 0 }
    }

    pub fn push(&mut self, values: &[f64]) {
        debug_assert_eq!(values.len(), self.sum.len());
        for (i, &v) in values.iter().enumerate() {
            self.sum[i] += v;
            self.sumsq[i] += v * v;
        }
        self.count += 1;
    }

    pub fn mean(&self, i: usize) -> f64 {
        self.sum[i] / self.count as f64
    }

    /// Standard error of the mean of component i.
    pub fn stderr(&self, i: usize) -> f64 {
        let n = self.count as f64;
        let var = (self.sumsq[i] / n - (self.sum[i] / n).powi(2)).max(0.0);
        (var / n).sqrt()
    }
}

impl Accum for Moments {
    fn zero() -> Self {
        Self { sum: vec![], sumsq: vec![], count: 0 }
    }

    fn merge(&mut self, other: Self) {
        if self.sum.is_empty() {
            *self = other;
            return;
        }
        if other.sum.is_empty() {
            return;
        }
        for i in 0..self.sum.len() {
            self.sum[i] += other.sum[i];
            self.sumsq[i] += other.sumsq[i];
        }
        self.count += other.count;
    }
}

/// Run `body` over `n` samples split into fixed chunks. The body receives
/// the chunk RNG and the accumulator for that chunk; chunk results merge in
/// chunk order. Deterministic in (seed, n) by construction.
pub fn run_chunked<A, F>(seed: u64, n: u64, body: F) -> A
where
    A: Accum,
    F: Fn(&mut ChaCha8Rng, u64, &mut A) + Sync,
{
    let chunks: Vec<(u64, u64)> = (0..n)
        .step_by(CHUNK as usize)
        .enumerate()
        .map(|(j, start)| (j as u64, (n - start).min(CHUNK)))
        .collect();
    // Collect per-chunk results in index order and fold sequentially: a
    // parallel reduction tree would change float rounding with the thread
    // count, breaking bit-for-bit reproducibility.
    let parts: Vec<A> = chunks
        .into_par_iter()
        .map(|(j, len)| {
            let mut rng = chunk_rng(seed, j);
            let mut acc = A::zero();
            body(&mut rng, len, &mut acc);
            acc
        })
        .collect();
    let mut total = A::zero();
    for p in parts {
        total.merge(p);
    }
    total
}
