//! Fixed-shape pairwise reductions.
//!
//! The split points depend only on the length, never on the thread count,
//! so the parallel and sequential versions return bit-identical sums.

const LEAF: usize = 64;
const PAR_THRESHOLD: usize = 1024;

pub fn pairwise_sum(xs: &[f64]) -> f64 {
    sum_range(0, xs.len(), &|i| xs[i])
}

/// `Σ f(i)` for `i in 0..n`, evaluated in parallel with the same tree shape
/// as [`pairwise_sum`].
pub fn par_sum_by<F>(n: usize, f: F) -> f64
where
    F: Fn(usize) -> f64 + Sync,
{
    par_sum_range(0, n, &f)
}

/// Mean of `f(i)` over `0..n`; `0.0` when `n == 0`.
pub fn par_mean_by<F>(n: usize, f: F) -> f64
where
    F: Fn(usize) -> f64 + Sync,
{
    if n == 0 {
        return 0.0;
    }
    par_sum_by(n, f) / n as f64
}

fn sum_range<F: Fn(usize) -> f64>(lo: usize, hi: usize, f: &F) -> f64 {
    if hi - lo <= LEAF {
        let mut s = 0.0;
        for i in lo..hi {
            s += f(i);
        }
        return s;
    }
    let mid = lo + (hi - lo) / 2;
    sum_range(lo, mid, f) + sum_range(mid, hi, f)
}

fn par_sum_range<F: Fn(usize) -> f64 + Sync>(lo: usize, hi: usize, f: &F) -> f64 {
    if hi - lo <= PAR_THRESHOLD {
        return sum_range(lo, hi, f);
    }
    let mid = lo + (hi - lo) / 2;
    let (a, b) = rayon::join(|| par_sum_range(lo, mid, f), || par_sum_range(mid, hi, f));
    a + b
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::RngStream;

    #[test]
    fn parallel_matches_sequential_bitwise() {
        let mut r = RngStream::new(11, "sum");
        let xs: Vec<f64> = (0..100_003).map(|_| r.normal() * 1e3).collect();
        let seq = pairwise_sum(&xs);
        let par = par_sum_by(xs.len(), |i| xs[i]);
        assert_eq!(seq.to_bits(), par.to_bits());
    }

    #[test]
    fn thread_count_does_not_change_result() {
        let xs: Vec<f64> = (0..50_000).map(|i| ((i * 7919) % 1013) as f64 / 7.0).collect();
        let one = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .unwrap()
            .install(|| par_sum_by(xs.len(), |i| xs[i]));
        let four = rayon::ThreadPoolBuilder::new()
            .num_threads(4)
            .build()
            .unwrap()
            .install(|| par_sum_by(xs.len(), |i| xs[i]));
        assert_eq!(one.to_bits(), four.to_bits());
    }

    #[test]
    fn small_and_empty() {
        assert_eq!(pairwise_sum(&[]), 0.0);
        assert_eq!(pairwise_sum(&[1.5, 2.5]), 4.0);
        assert_eq!(par_mean_by(0, |_| 1.0), 0.0);
        assert_eq!(par_mean_by(4, |i| i as f64), 1.5);
    }
}
