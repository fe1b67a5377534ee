//! Labelled, counter-based random streams.
//!
//! Every source of randomness in an experiment (initialization, dataset,
//! SGD index selection, test set, sign vectors, ...) gets its own stream
//! keyed by `(seed, label)`. Streams are ChaCha8 keystreams: the seed picks
//! the key and a 64-bit hash of the label picks the stream id, so two labels
//! never share a keystream and the values are identical on every platform.

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Clone, Debug)]
pub struct RngStream {
    seed: u64,
    label: String,
    inner: ChaCha8Rng,
}

/// FNV-1a, used only to map labels onto ChaCha stream ids.
fn label_hash(label: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for byte in label.bytes() {
        h ^= u64::from(byte);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

impl RngStream {
    /// # Panics
    /// Panics if `label` is empty.
    pub fn new(seed: u64, label: &str) -> Self {
        assert!(!label.is_empty(), "rng stream label must be nonempty");
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(label_hash(label));
        RngStream {
            seed,
            label: label.to_owned(),
            inner,
        }
    }

    /// A child stream whose label is `"{self.label}/{suffix}"`. The child does
    /// not depend on how many draws the parent has made.
    pub fn child(&self, suffix: impl std::fmt::Display) -> Self {
        RngStream::new(self.seed, &format!("{}/{}", self.label, suffix))
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform on `[0, 1)` with 53 random bits.
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform on `[-r, r)`.
    pub fn symmetric(&mut self, r: f64) -> f64 {
        r * (2.0 * self.uniform() - 1.0)
    }

    /// Uniform index in `0..n` by multiply-high; consumes exactly one draw.
    pub fn index(&mut self, n: usize) -> usize {
        debug_assert!(n > 0);
        ((u128::from(self.next_u64()) * n as u128) >> 64) as usize
    }

    /// Standard normal by Box-Muller; consumes exactly two draws.
    pub fn normal(&mut self) -> f64 {
        // 1 - u lies in (0, 1], so the log is finite.
        let u1 = 1.0 - self.uniform();
        let u2 = self.uniform();
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }

    /// Rademacher sign, ±1 with equal probability.
    pub fn sign(&mut self) -> f64 {
        if self.next_u64() >> 63 == 0 {
            1.0
        } else {
            -1.0
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn first(seed: u64, label: &str, n: usize) -> Vec<f64> {
        let mut r = RngStream::new(seed, label);
        (0..n).map(|_| r.uniform()).collect()
    }

    #[test]
    fn same_seed_and_label_repeat() {
        assert_eq!(first(7, "init", 100), first(7, "init", 100));
    }

    #[test]
    fn labels_and_seeds_separate_streams() {
        let a = first(7, "init", 100);
        let b = first(7, "data", 100);
        let c = first(8, "init", 100);
        assert!(a.iter().zip(&b).all(|(x, y)| x != y));
        assert!(a.iter().zip(&c).all(|(x, y)| x != y));
        assert_ne!(first(7, "x", 100), first(8, "x", 100));
    }

    #[test]
    fn uniform_range_and_mean() {
        let mut r = RngStream::new(1, "u");
        let n = 200_000;
        let mut sum = 0.0;
        for _ in 0..n {
            let u = r.uniform();
            assert!((0.0..1.0).contains(&u));
            sum += u;
        }
        // sd of the mean is 1/sqrt(12 n) ~ 6.5e-4
        assert!((sum / n as f64 - 0.5).abs() < 3e-3);
    }

    #[test]
    fn normal_moments() {
        let mut r = RngStream::new(3, "n");
        let n = 200_000;
        let xs: Vec<f64> = (0..n).map(|_| r.normal()).collect();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n as f64;
        assert!(mean.abs() < 0.01);
        assert!((var - 1.0).abs() < 0.02);
    }

    #[test]
    fn index_stays_in_range_and_hits_everything() {
        let mut r = RngStream::new(5, "idx");
        let mut seen = [0usize; 7];
        for _ in 0..7000 {
            seen[r.index(7)] += 1;
        }
        assert!(seen.iter().all(|&c| c > 800));
    }

    #[test]
    fn child_is_independent_of_parent_position() {
        let mut p = RngStream::new(9, "trial");
        let c1 = p.child(3);
        p.uniform();
        let c2 = p.child(3);
        let mut c1 = c1;
        let mut c2 = c2;
        assert_eq!(c1.next_u64(), c2.next_u64());
        assert_eq!(c1.label(), "trial/3");
    }

    #[test]
    #[should_panic]
    fn empty_label_rejected() {
        RngStream::new(0, "");
    }
}
