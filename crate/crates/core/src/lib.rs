//! Dataset compression with low-discrepancy point sets.
//!
//! Three compression routes over data in `[0,1)^s` with scalar responses:
//! signed-weight averaging over digital (t,m,s)-nets, supervised iterative
//! 2-means splitting (supercompress), and Voronoi assignment onto net points.
//! A testbed reproduces the error/timing comparisons between them, and a
//! small scalar-output MLP consumes the compressed sets for MNIST training.

pub mod cli;
pub mod cluster;
pub mod dataset;
pub mod error;
pub mod mlp;
pub mod net;
pub mod testbed;
pub mod weights;

pub use error::{Error, Result};

/// Compensated (Kahan) accumulator for order-stable sums.
#[derive(Debug, Clone, Copy, Default)]
pub struct KahanSum {
    sum: f64,
    comp: f64,
}

impl KahanSum {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn add(&mut self, value: f64) {
        let y = value - self.comp;
        let t = self.sum + y;
        self.comp = (t - self.sum) - y;
        self.sum = t;
    }

    #[inline]
    pub fn value(&self) -> f64 {
        self.sum
    }
}

/// Compensated sum of an iterator.
pub fn kahan_sum<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    let mut acc = KahanSum::new();
    for v in values {
        acc.add(v);
    }
    acc.value()
}

/// splitmix64 step; used to derive independent substream seeds from
/// (seed, index) pairs so parallel repetitions stay reproducible.
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kahan_recovers_lost_precision() {
        // 1 + 1e-16 * 1e4 loses everything with naive f64 addition order
        let mut naive = 1.0f64;
        let mut kahan = KahanSum::new();
        kahan.add(1.0);
        for _ in 0..10_000 {
            naive += 1e-16;
            kahan.add(1e-16);
        }
        assert_eq!(naive, 1.0);
        assert!((kahan.value() - (1.0 + 1e-12)).abs() < 1e-15);
    }

    #[test]
    fn derived_seeds_differ_per_stream() {
        let a = derive_seed(42, 0);
        let b = derive_seed(42, 1);
        assert_ne!(a, b);
        assert_eq!(a, derive_seed(42, 0));
    }
}
