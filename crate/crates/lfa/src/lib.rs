//! Latent factor analysis for high-dimensional incomplete rating matrices.
//!
//! The pipeline: ingest a sparse rating matrix ([`data`]), train a biased
//! low-rank model with SGD, Adam, or a PSO-tuned learning rate
//! ([`train`], [`pso`]), then refine every row and column latent factor
//! vector with an Adam-adjusted beetle antennae search ([`refine`]).

pub mod data;
pub mod error;
pub mod model;
pub mod pso;
pub mod refine;
pub mod train;

#[cfg(test)]
pub(crate) mod test_util;

pub use data::{RatingMatrix, RatingTriplet, SplitSpec};
pub use error::{Error, Result};
pub use model::{EvalReport, FactorState};

/// SplitMix64 finalizer, used to derive independent RNG streams from a
/// master seed and a stream id.
pub fn mix_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed ^ stream.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Neumaier compensated accumulator. Keeps sums reproducible to ~1 ulp
/// regardless of summation order.
#[derive(Debug, Clone, Copy, Default)]
pub(crate) struct KahanSum {
    sum: f64,
    comp: f64,
}

impl KahanSum {
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mix_seed_streams_differ() {
        assert_ne!(mix_seed(42, 0), mix_seed(42, 1));
        assert_eq!(mix_seed(42, 7), mix_seed(42, 7));
    }

    #[test]
    fn kahan_sum_matches_exact_small_case() {
        let mut s = KahanSum::default();
        for _ in 0..10 {
            s.add(0.1);
        }
        assert!((s.value() - 1.0).abs() < 1e-15);
    }
}
