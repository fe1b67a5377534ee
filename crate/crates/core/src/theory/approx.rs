//! Random-feature approximation of represented targets by sampled basis
//! functions.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::math::{dot, loglog_slope, norm2, sample_unit_ball, PointSet, RngStream};
use crate::pinn::{eval_zeta, BasisParam};
use crate::problem::RepresentedTarget;
use crate::theory::thresholds::approximation_bound;

/// `g(x) = Σ_i α_iᵀ ζ(x; θ_i)` with `θ_i` uniform on `Λ` and
/// `α_i = α(θ_i) / (k p(θ_i))`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RandomFeatureFit {
    pub thetas: Vec<BasisParam>,
    pub alphas: Vec<Vec<f64>>,
}

impl RandomFeatureFit {
    pub fn eval(&self, x: &[f64]) -> f64 {
        self.thetas
            .iter()
            .zip(&self.alphas)
            .map(|(th, al)| dot(al, &eval_zeta(th, x)))
            .sum()
    }

    pub fn len(&self) -> usize {
        self.thetas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.thetas.is_empty()
    }

    pub fn max_coefficient_norm(&self) -> f64 {
        self.alphas.iter().map(|a| norm2(a)).fold(0.0, f64::max)
    }
}

/// Samples `k` basis elements on the box of `target.cfg`.
pub fn fm_construct(target: &RepresentedTarget, k: usize, rng: &mut RngStream) -> RandomFeatureFit {
    let mut thetas = Vec::with_capacity(k);
    let mut alphas = Vec::with_capacity(k);
    for _ in 0..k {
        let th = BasisParam::sample(&target.cfg, rng);
        // α(θ) / (k p(θ)) = |Λ| α(θ) / k
        let al = target.density_scaled_alpha(&th).into_iter().map(|v| v / k as f64).collect();
        thetas.push(th);
        alphas.push(al);
    }
    RandomFeatureFit { thetas, alphas }
}

/// Target values on a fixed evaluation set, closed form when available.
#[derive(Clone, Debug)]
pub struct EvalGrid {
    pub points: PointSet,
    pub values: Vec<f64>,
}

impl EvalGrid {
    pub fn new(target: &RepresentedTarget, n: usize, seed: u64) -> Self {
        let points = sample_unit_ball(&mut RngStream::new(seed, "approx-eval"), target.cfg.d, n);
        let values = points.par_iter_values(|x| target.eval(x));
        EvalGrid { points, values }
    }

    /// `√(mean (g - f)²)` over the grid.
    pub fn l2_error(&self, fit: &RandomFeatureFit) -> f64 {
        let sq: f64 = self
            .points
            .iter()
            .zip(&self.values)
            .map(|(x, f)| (fit.eval(x) - f).powi(2))
            .sum();
        (sq / self.values.len() as f64).sqrt()
    }
}

trait ParValues {
    fn par_iter_values<F: Fn(&[f64]) -> f64 + Sync>(&self, f: F) -> Vec<f64>;
}

impl ParValues for PointSet {
    fn par_iter_values<F: Fn(&[f64]) -> f64 + Sync>(&self, f: F) -> Vec<f64> {
        (0..self.len()).into_par_iter().map(|n| f(self.point(n))).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ApproxCell {
    pub d: usize,
    pub m: usize,
    pub trials: usize,
    pub bound: f64,
    pub failure_fraction: f64,
    pub mean_error: f64,
    pub max_error: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecoupledRate {
    pub reference_m: usize,
    pub counts: Vec<usize>,
    pub mean_errors: Vec<f64>,
    pub slope: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ApproxSettings {
    pub trials: usize,
    pub delta: f64,
    pub eval_points: usize,
    pub seed: u64,
}

impl Default for ApproxSettings {
    fn default() -> Self {
        ApproxSettings {
            trials: 500,
            delta: 0.1,
            eval_points: 1000,
            seed: 0,
        }
    }
}

impl ApproxSettings {
    fn validate(&self) -> Result<()> {
        if self.trials < 100 {
            return Err(invalid("trials", "at least 100 trials required"));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(invalid("delta", "must lie in (0, 1)"));
        }
        if self.eval_points == 0 {
            return Err(invalid("eval_points", "must be positive"));
        }
        Ok(())
    }
}

fn trial_errors(target: &RepresentedTarget, grid: &EvalGrid, k: usize, trials: usize, seed: u64, tag: &str) -> Vec<f64> {
    let base = RngStream::new(seed, tag);
    (0..trials)
        .into_par_iter()
        .map(|t| {
            let fit = fm_construct(target, k, &mut base.child(t));
            grid.l2_error(&fit)
        })
        .collect()
}

/// Coupled experiment: at each width `m` the box `Λ` and the number of
/// sampled basis elements are both `m`; counts how often the L² error
/// exceeds the high-probability bound.
pub fn fm_approx_experiment(target: &RepresentedTarget, widths: &[usize], s: &ApproxSettings) -> Result<Vec<ApproxCell>> {
    s.validate()?;
    let mut cells = Vec::with_capacity(widths.len());
    for &m in widths {
        if m == 0 {
            return Err(invalid("m", "widths must be positive"));
        }
        let t = target.at_width(m);
        let grid = EvalGrid::new(&t, s.eval_points, s.seed);
        let errs = trial_errors(&t, &grid, m, s.trials, s.seed, &format!("approx-m{m}"));
        let bound = approximation_bound(t.cfg.d, t.f_norm_upper(), m, t.cfg.alpha, t.cfg.beta, s.delta);
        let fails = errs.iter().filter(|&&e| e > bound).count();
        cells.push(ApproxCell {
            d: t.cfg.d,
            m,
            trials: s.trials,
            bound,
            failure_fraction: fails as f64 / s.trials as f64,
            mean_error: errs.iter().sum::<f64>() / errs.len() as f64,
            max_error: errs.iter().cloned().fold(0.0, f64::max),
        });
    }
    Ok(cells)
}

/// Decoupled experiment: `Λ` frozen at `target.cfg.m` while the number of
/// sampled basis elements runs over `counts`; fits the log-log slope of
/// the mean error.
pub fn decoupled_rate(target: &RepresentedTarget, counts: &[usize], s: &ApproxSettings) -> Result<DecoupledRate> {
    s.validate()?;
    if counts.len() < 2 || counts.contains(&0) {
        return Err(invalid("counts", "need at least two positive counts"));
    }
    let grid = EvalGrid::new(target, s.eval_points, s.seed);
    let mean_errors: Vec<f64> = counts
        .iter()
        .map(|&k| {
            let errs = trial_errors(target, &grid, k, s.trials, s.seed, &format!("approx-k{k}"));
            errs.iter().sum::<f64>() / errs.len() as f64
        })
        .collect();
    let ks: Vec<f64> = counts.iter().map(|&k| k as f64).collect();
    let slope = if mean_errors.iter().all(|&e| e > 0.0) {
        loglog_slope(&ks, &mean_errors)
    } else {
        f64::NAN
    };
    Ok(DecoupledRate {
        reference_m: target.cfg.m,
        counts: counts.to_vec(),
        mean_errors,
        slope,
    })
}
