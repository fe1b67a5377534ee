//! Training cells, width/sample grids and the theory check suite.

use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

use pinn_core::math::{loglog_slope, sample_unit_ball, RngStream};
use pinn_core::pinn::{init_params, ModelConfig};
use pinn_core::problem::{build_dataset, make_target, shift_rhs, CoefficientField, RepresentedTarget};
use pinn_core::theory::{
    admissible_t, binomial_margin, concentration_test, constants_cd, decoupled_rate, fm_approx_experiment,
    iteration_cap_t0, rademacher_estimate, sample_threshold_n0, width_threshold_m, ApproxCell, ApproxSettings,
    AscentSettings, ConcentrationResult, DecoupledRate, RademacherEstimate, SphereMixture, ThresholdInputs,
};
use pinn_core::train::{run_training, TrainConfig, TrainReport};

use crate::config::RunConfig;

#[derive(Clone, Debug, Serialize)]
pub struct CellResult {
    /// Width named by the grid before any desk-scale cap.
    pub m_requested: usize,
    pub m: usize,
    pub n: usize,
    /// `f(0)` moved into the corrector, 0 when `f` already vanishes there.
    pub shifted_by: f64,
    pub report: TrainReport,
}

/// One training run at width `m` on `n` samples.
pub fn run_cell(cfg: &RunConfig, m_requested: usize, m: usize, n: usize) -> anyhow::Result<CellResult> {
    let model = cfg.model_config(m);
    let target = make_target(&cfg.target, &model)?;
    let (f, corrector) = shift_rhs(&target, model.d);
    let data = build_dataset(&f, n, model.d, &mut RngStream::new(cfg.data.seed, "data"))?;
    let report = run_training(&cfg.train_config(m), &model, &data, &f)?;
    Ok(CellResult {
        m_requested,
        m,
        n,
        shifted_by: corrector.f0,
        report,
    })
}

/// Every `(width, size)` cell of the configured grid (or the single
/// configured cell), run in parallel and returned in row-major order.
pub fn run_grid(cfg: &RunConfig, requested: &[usize]) -> anyhow::Result<Vec<CellResult>> {
    let (widths, sizes) = match &cfg.grid {
        Some(g) => (g.widths.clone(), g.sizes.clone()),
        None => (vec![cfg.model.m], vec![cfg.data.n]),
    };
    let cells: Vec<(usize, usize, usize)> = widths
        .iter()
        .enumerate()
        .flat_map(|(k, &m)| {
            let req = requested.get(k).copied().unwrap_or(m);
            sizes.iter().map(move |&n| (req, m, n))
        })
        .collect();
    // Capped widths can repeat; each distinct (m, n) runs once.
    let mut unique: Vec<(usize, usize)> = cells.iter().map(|&(_, m, n)| (m, n)).collect();
    unique.sort_unstable();
    unique.dedup();
    let done: Vec<CellResult> = unique
        .into_par_iter()
        .map(|(m, n)| run_cell(cfg, m, m, n))
        .collect::<anyhow::Result<_>>()?;
    Ok(cells
        .into_iter()
        .map(|(req, m, n)| {
            let mut c = done.iter().find(|c| c.m == m && c.n == n).expect("cell was run").clone();
            c.m_requested = req;
            c
        })
        .collect())
}

/// Outcome of one theory check.
#[derive(Clone, Debug, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
    pub metrics: Value,
}

/// Monotonicity of the threshold calculators over a 100-point grid plus the
/// closed-form constants at `d = 1`.
pub fn check_thresholds() -> Check {
    let grid = threshold_grid();
    let mut violations = Vec::new();
    for t in &grid {
        let mut looser = t.clone();
        looser.epsilon = (t.epsilon * 1.5).min(1.0);
        match (width_threshold_m(t), width_threshold_m(&looser)) {
            (Ok(a), Ok(b)) if b <= a * (1.0 + 1e-12) => {}
            other => violations.push(format!("M not non-increasing in epsilon at {t:?}: {other:?}")),
        }
        let (n_a, n_b) = (
            sample_threshold_n0(100.0, 0.01, 1e4, t),
            sample_threshold_n0(100.0, 0.01, 1e4, &looser),
        );
        match (n_a, n_b) {
            (Ok(a), Ok(b)) if b <= a * (1.0 + 1e-12) => {}
            other => violations.push(format!("N0 not non-increasing in epsilon: {other:?}")),
        }
        match (sample_threshold_n0(100.0, 0.01, 1e4, t), sample_threshold_n0(100.0, 0.01, 2e4, t)) {
            (Ok(a), Ok(b)) if b >= a * (1.0 - 1e-12) => {}
            other => violations.push(format!("N0 not non-decreasing in T: {other:?}")),
        }
        if t.alpha == 0.0 && t.beta == 0.5 {
            let mut prev = 0.0;
            for k in 1..16 {
                let v = iteration_cap_t0(2f64.powi(k), t).unwrap_or(f64::NAN);
                if v.is_nan() || v < prev {
                    violations.push(format!("T0 decreased at m=2^{k}"));
                }
                prev = v;
            }
        }
        if admissible_t(100.0, t).is_err() {
            violations.push(format!("admissible_t failed at {t:?}"));
        }
    }
    if constants_cd(1) != (44.0, 176.0) {
        violations.push(format!("constants_cd(1) = {:?}", constants_cd(1)));
    }
    Check {
        name: "thresholds".into(),
        passed: violations.is_empty(),
        detail: if violations.is_empty() {
            format!("{} grid points, all monotonicities hold", grid.len())
        } else {
            violations.join("; ")
        },
        metrics: json!({ "grid_points": grid.len(), "violations": violations.len() }),
    }
}

/// 100 threshold inputs spanning `ε`, `δ`, `‖f‖`, `(α, β)` and `d`.
pub fn threshold_grid() -> Vec<ThresholdInputs> {
    let mut out = Vec::new();
    let eps = [0.05, 0.1, 0.3, 0.6, 1.0];
    let deltas = [0.01, 0.1];
    let norms = [0.0, 0.5, 2.0, 10.0, 40.0];
    let exps = [(0.0, 0.5), (0.25, 0.5)];
    for (k, &e) in eps.iter().enumerate() {
        for &dl in &deltas {
            for &f in &norms {
                for &(a, b) in &exps {
                    out.push(ThresholdInputs {
                        epsilon: e,
                        delta: dl,
                        f_norm: f,
                        alpha: a,
                        beta: b,
                        d: 1 + (k + out.len()) % 4,
                    });
                }
            }
        }
    }
    out
}

#[derive(Clone, Debug, Serialize)]
pub struct TrajectoryResult {
    pub iters: Vec<u64>,
    pub drift: Vec<f64>,
    pub envelope: Vec<f64>,
    pub psi_g_gap: Vec<f64>,
    pub grad_gap: Vec<f64>,
    pub gap_slope: f64,
    pub drift_within_envelope: bool,
}

/// Short monitored run: width `m`, `iterations` steps at `η = 1/m` on
/// `‖x‖²` with 1000 samples.
pub fn trajectory_run(m: usize, iterations: u64, seed: u64) -> anyhow::Result<TrajectoryResult> {
    let model = ModelConfig::new(3, m, 0.0, 0.5, seed)?;
    let f = make_target("norm2", &model)?;
    let data = build_dataset(&f, 1000, 3, &mut RngStream::new(seed, "data"))?;
    let mut tc = TrainConfig::for_width(m, 1.0, iterations, seed);
    tc.eval_every = (iterations / 20).max(1);
    tc.n_test = 1000;
    tc.monitor_gaps = true;
    let report = run_training(&tc, &model, &data, &f)?;
    let recs: Vec<_> = report.records.iter().filter(|r| r.gap.is_some()).collect();
    let gaps: Vec<_> = recs.iter().map(|r| r.gap.unwrap()).collect();
    let drift_ok = recs
        .iter()
        .zip(&gaps)
        .all(|(r, g)| g.drift <= r.drift_envelope * (1.0 + 1e-12) + 1e-15);
    let (ts, gs): (Vec<f64>, Vec<f64>) = gaps
        .iter()
        .filter(|g| g.iter > 0 && g.psi_g_gap > 0.0)
        .map(|g| (g.iter as f64, g.psi_g_gap))
        .unzip();
    let gap_slope = if ts.len() >= 2 { loglog_slope(&ts, &gs) } else { f64::NAN };
    Ok(TrajectoryResult {
        iters: gaps.iter().map(|g| g.iter).collect(),
        drift: gaps.iter().map(|g| g.drift).collect(),
        envelope: recs.iter().map(|r| r.drift_envelope).collect(),
        psi_g_gap: gaps.iter().map(|g| g.psi_g_gap).collect(),
        grad_gap: gaps.iter().map(|g| g.grad_gap).collect(),
        gap_slope,
        drift_within_envelope: drift_ok,
    })
}

pub fn check_trajectory(scale: f64, seed: u64) -> anyhow::Result<Check> {
    let iterations = ((10_000.0 * scale).round() as u64).max(100);
    let r = trajectory_run(256, iterations, seed)?;
    let passed = r.drift_within_envelope && r.gap_slope <= 3.3;
    Ok(Check {
        name: "trajectory".into(),
        passed,
        detail: format!(
            "drift within one-step envelope: {}; psi-g gap growth exponent {:.3} (limit 3.3)",
            r.drift_within_envelope, r.gap_slope
        ),
        metrics: serde_json::to_value(&r)?,
    })
}

/// The aligned represented target `f(x) = ∫ α(θ)ᵀζ(x; θ)` used by the
/// approximation experiments.
pub fn aligned_target(d: usize, m: usize) -> anyhow::Result<RepresentedTarget> {
    let c: Vec<f64> = (0..d).map(|k| 1.0 / (1.0 + k as f64)).collect();
    Ok(RepresentedTarget::new(
        CoefficientField::OutputAligned(c),
        ModelConfig::new(d, m, 0.0, 0.5, 0)?,
    )?)
}

#[derive(Clone, Debug, Serialize)]
pub struct ApproxResult {
    pub cells: Vec<ApproxCell>,
    pub allowed_failure: f64,
    pub decoupled: DecoupledRate,
}

pub fn approx_run(
    dims: &[usize],
    widths: &[usize],
    trials: usize,
    delta: f64,
    seed: u64,
    decoupled_trials: usize,
) -> anyhow::Result<ApproxResult> {
    let s = ApproxSettings {
        trials,
        delta,
        eval_points: 1000,
        seed,
    };
    let mut cells = Vec::new();
    for &d in dims {
        cells.extend(fm_approx_experiment(&aligned_target(d, widths[0])?, widths, &s)?);
    }
    let counts: Vec<usize> = (6..=12).map(|k| 1usize << k).collect();
    let ds = ApproxSettings {
        trials: decoupled_trials,
        ..s
    };
    let decoupled = decoupled_rate(&aligned_target(3, 256)?, &counts, &ds)?;
    Ok(ApproxResult {
        cells,
        allowed_failure: delta + 0.03,
        decoupled,
    })
}

pub fn check_approx(scale: f64, seed: u64) -> anyhow::Result<Check> {
    let trials = ((500.0 * scale).round() as usize).max(100);
    let r = approx_run(&[1, 3], &[64, 256, 1024], trials, 0.1, seed, 100)?;
    let cells_ok = r.cells.iter().all(|c| c.failure_fraction <= r.allowed_failure);
    let slope_ok = (-0.6..=-0.4).contains(&r.decoupled.slope);
    Ok(Check {
        name: "approximation".into(),
        passed: cells_ok && slope_ok,
        detail: format!(
            "max failure fraction {:.3} (allowed {:.3}); decoupled slope {:.3} (band [-0.6, -0.4])",
            r.cells.iter().map(|c| c.failure_fraction).fold(0.0, f64::max),
            r.allowed_failure,
            r.decoupled.slope
        ),
        metrics: serde_json::to_value(&r)?,
    })
}

/// The bounded distribution used by the concentration check.
pub fn concentration_family(radius: f64) -> SphereMixture {
    SphereMixture {
        radius,
        dim: 5,
        sphere_weight: 0.5,
    }
}

pub fn check_concentration(scale: f64, seed: u64) -> anyhow::Result<Check> {
    let trials = ((5000.0 * scale).round() as usize).max(1000);
    let mut results: Vec<ConcentrationResult> = Vec::new();
    let mut passed = true;
    for delta in [0.05, 0.2] {
        let r = concentration_test(&concentration_family(1.0), 400, delta, trials, seed)?;
        passed &= r.failure_fraction <= binomial_margin(delta, trials);
        results.push(r);
    }
    Ok(Check {
        name: "concentration".into(),
        passed,
        detail: results
            .iter()
            .map(|r| format!("delta={}: failure {:.4}", r.delta, r.failure_fraction))
            .collect::<Vec<_>>()
            .join("; "),
        metrics: serde_json::to_value(&results)?,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct RademacherResult {
    pub small: RademacherEstimate,
    pub large: RademacherEstimate,
    pub ratio: f64,
    pub zero_radius: RademacherEstimate,
    pub zero_radius_limit: f64,
    pub kappa_small: f64,
    pub kappa_large: f64,
}

/// Estimates at `n` and `4n` points for width `m`, plus the `τ′ = 0` case.
pub fn rademacher_run(
    m: usize,
    n: usize,
    radius: f64,
    n_sign_draws: usize,
    ascent: &AscentSettings,
    seed: u64,
) -> anyhow::Result<RademacherResult> {
    let model = ModelConfig::new(3, m, 0.0, 0.5, seed)?;
    let p = init_params(&model, &mut RngStream::new(seed, "init"));
    let small_pts = sample_unit_ball(&mut RngStream::new(seed, "rademacher-small"), 3, n);
    let large_pts = sample_unit_ball(&mut RngStream::new(seed, "rademacher-large"), 3, 4 * n);
    let small = rademacher_estimate(&p, &small_pts, radius, n_sign_draws, ascent, seed)?;
    let large = rademacher_estimate(&p, &large_pts, radius, n_sign_draws, ascent, seed)?;
    let zero_radius = rademacher_estimate(&p, &small_pts, 0.0, n_sign_draws, ascent, seed)?;
    let scale = model.output_scale();
    Ok(RademacherResult {
        ratio: small.value / large.value,
        zero_radius_limit: 3.0 / ((n_sign_draws * n) as f64).sqrt(),
        kappa_small: small.kappa(scale),
        kappa_large: large.kappa(scale),
        small,
        large,
        zero_radius,
    })
}

pub fn check_rademacher(scale: f64, seed: u64) -> anyhow::Result<Check> {
    let draws = ((200.0 * scale).round() as usize).max(20);
    let r = rademacher_run(256, 25, 0.05, draws, &AscentSettings::default(), seed)?;
    let passed = (1.4..=2.9).contains(&r.ratio) && r.zero_radius.value.abs() <= r.zero_radius_limit;
    Ok(Check {
        name: "rademacher".into(),
        passed,
        detail: format!(
            "ratio R(N)/R(4N) = {:.3} (band [1.4, 2.9]); |R| at zero radius {:.2e} (limit {:.2e}); kappa {:.3}",
            r.ratio,
            r.zero_radius.value.abs(),
            r.zero_radius_limit,
            r.kappa_small
        ),
        metrics: serde_json::to_value(&r)?,
    })
}

/// The full theory suite at `scale`.
pub fn verify_suite(scale: f64, seed: u64) -> anyhow::Result<Vec<Check>> {
    Ok(vec![
        check_thresholds(),
        check_trajectory(scale, seed)?,
        check_approx(scale, seed)?,
        check_concentration(scale, seed)?,
        check_rademacher(scale, seed)?,
    ])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_has_one_hundred_points() {
        let g = threshold_grid();
        assert_eq!(g.len(), 100);
        assert!(g.iter().all(|t| t.validate().is_ok()));
    }

    #[test]
    fn thresholds_check_passes() {
        let c = check_thresholds();
        assert!(c.passed, "{}", c.detail);
    }

    #[test]
    fn cell_with_shifted_target() {
        let mut cfg = RunConfig::default();
        cfg.model.m = 10;
        cfg.target = "1 + x1".into();
        cfg.train.iterations = 20;
        cfg.train.eval_every = 10;
        cfg.train.n_test = 100;
        let c = run_cell(&cfg, 10, 10, 30).unwrap();
        assert_eq!(c.shifted_by, 1.0);
        assert_eq!(c.report.records.len(), 3);
    }
}
