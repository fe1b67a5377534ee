//! Deviation of empirical means of bounded random vectors.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::math::{median, norm2, RngStream};
use crate::theory::thresholds::concentration_bound;

/// With probability `sphere_weight` a uniform point on the radius-`C`
/// sphere, otherwise the fixed point `C/2 · e_1`. Mean is
/// `(1 - sphere_weight) C/2 · e_1`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SphereMixture {
    pub radius: f64,
    pub dim: usize,
    pub sphere_weight: f64,
}

impl SphereMixture {
    fn atom(&self) -> f64 {
        0.5 * self.radius
    }

    pub fn mean(&self) -> Vec<f64> {
        let mut v = vec![0.0; self.dim];
        v[0] = (1.0 - self.sphere_weight) * self.atom();
        v
    }

    fn draw_into(&self, rng: &mut RngStream, out: &mut [f64]) {
        if rng.uniform() < self.sphere_weight {
            let nrm = loop {
                for v in out.iter_mut() {
                    *v = rng.normal();
                }
                let n = norm2(out);
                if n > 0.0 {
                    break n;
                }
            };
            for v in out.iter_mut() {
                *v *= self.radius / nrm;
            }
        } else {
            out.fill(0.0);
            out[0] = self.atom();
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConcentrationResult {
    pub m: usize,
    pub delta: f64,
    pub trials: usize,
    pub bound: f64,
    pub failure_fraction: f64,
    pub median_error: f64,
    pub q90_error: f64,
}

/// Runs `trials` independent means of `m` draws and reports how often the
/// deviation from the true mean exceeds `(C/√m)(1 + √(2 log(1/δ)))`.
pub fn concentration_test(
    dist: &SphereMixture,
    m: usize,
    delta: f64,
    trials: usize,
    seed: u64,
) -> Result<ConcentrationResult> {
    if trials < 1000 {
        return Err(invalid("trials", "at least 1000 trials required"));
    }
    if m == 0 || dist.dim == 0 {
        return Err(invalid("m/dim", "must be positive"));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(invalid("delta", "must lie in (0, 1)"));
    }
    if !(0.0..=1.0).contains(&dist.sphere_weight) || !(dist.radius >= 0.0) {
        return Err(invalid("dist", "need radius >= 0 and weight in [0, 1]"));
    }
    let base = RngStream::new(seed, "concentration");
    let mean = dist.mean();
    let errors: Vec<f64> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut r = base.child(t);
            let mut acc = vec![0.0; dist.dim];
            let mut v = vec![0.0; dist.dim];
            for _ in 0..m {
                dist.draw_into(&mut r, &mut v);
                for (a, b) in acc.iter_mut().zip(&v) {
                    *a += b;
                }
            }
            let diff: Vec<f64> = acc.iter().zip(&mean).map(|(a, mu)| a / m as f64 - mu).collect();
            norm2(&diff)
        })
        .collect();
    let bound = concentration_bound(dist.radius, m, delta);
    let fails = errors.iter().filter(|&&e| e > bound).count();
    let mut sorted = errors.clone();
    sorted.sort_by(f64::total_cmp);
    Ok(ConcentrationResult {
        m,
        delta,
        trials,
        bound,
        failure_fraction: fails as f64 / trials as f64,
        median_error: median(&errors),
        q90_error: sorted[(trials * 9) / 10],
    })
}

/// `δ + z·√(δ(1-δ)/trials)` with `z` the one-sided 99% normal quantile.
pub fn binomial_margin(delta: f64, trials: usize) -> f64 {
    const Z99: f64 = 2.326_347_874_040_841;
    delta + Z99 * (delta * (1.0 - delta) / trials as f64).sqrt()
}
