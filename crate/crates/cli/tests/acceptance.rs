//! End-to-end acceptance checks. Each test prints one `PASS`/`FAIL` line
//! to the real stdout (bypassing libtest capture) before asserting.

use std::io::Write as _;
use std::path::Path;
use std::process::Command;
use std::sync::OnceLock;

use pinn_cli::commands::list_tree;
use pinn_cli::config::RunConfig;
use pinn_cli::experiments::{
    approx_run, check_concentration, check_rademacher, check_thresholds, run_cell, threshold_grid,
    trajectory_run,
};
use pinn_core::math::{
    fd_gradient, fd_laplacian, median, sample_unit_ball, sample_unit_sphere, MatrixNorm, RngStream,
    WeightMatrix, DEFAULT_GRADIENT_STEP,
};
use pinn_core::pinn::{
    eval_phi, eval_psi, eval_pseudo_g, eval_pseudo_gb, init_params, kink_margin, loss_grad_w, psi_at,
    ModelConfig, ModelParams,
};
use pinn_core::theory::{
    constants_cd, iteration_cap_t0, sample_threshold_n0, width_threshold_m, ThresholdInputs,
};

const SEED: u64 = 0;

fn report(name: &str, passed: bool, detail: &str) {
    let mut out = std::io::stdout().lock();
    let _ = writeln!(out, "{} {name}: {detail}", if passed { "PASS" } else { "FAIL" });
    let _ = out.flush();
    assert!(passed, "{name}: {detail}");
}

/// Random width/dimension, random `W` near `W0`.
fn random_model(rng: &mut RngStream, instance: usize) -> ModelParams {
    let d = 1 + rng.index(4);
    let m = 1 + rng.index(12);
    let cfg = ModelConfig::new(d, m, 0.0, 0.5, instance as u64).unwrap();
    let p = init_params(&cfg, &mut rng.child(instance));
    let mut w = p.w0().clone();
    for v in w.as_mut_slice() {
        *v += rng.symmetric(0.5);
    }
    p.with_weights(w)
}

/// A point in the ball at least `margin` away from every activation kink.
fn point_with_margin(rng: &mut RngStream, p: &ModelParams, margin: f64) -> Vec<f64> {
    loop {
        let x = sample_unit_ball(rng, p.dim(), 1).point(0).to_vec();
        if kink_margin(p, &x) > margin {
            return x;
        }
    }
}

#[test]
fn analytic_loss_gradient_matches_finite_differences() {
    let mut rng = RngStream::new(SEED, "acceptance-gradient");
    let mut worst: f64 = 0.0;
    for k in 0..1000 {
        let p = random_model(&mut rng, k);
        let x = point_with_margin(&mut rng, &p, 1e-5);
        let label = rng.symmetric(2.0);
        let analytic = loss_grad_w(&p, &x, label).unwrap();
        let loss = |w: &WeightMatrix| {
            let r = psi_at(&p, w, &x) - label;
            r * r
        };
        let numeric = fd_gradient(loss, &p.w, DEFAULT_GRADIENT_STEP);
        let diff = analytic.sub(&numeric).norm(MatrixNorm::Frobenius).unwrap();
        let scale = numeric.norm(MatrixNorm::Frobenius).unwrap();
        let rel = if scale > 0.0 { diff / scale } else { diff };
        worst = worst.max(rel);
    }
    report(
        "gradient oracle",
        worst < 1e-5,
        &format!("1000 instances, worst relative Frobenius error {worst:.3e} (limit 1e-5)"),
    );
}

#[test]
fn psi_is_the_laplacian_of_phi() {
    let mut rng = RngStream::new(SEED, "acceptance-laplacian");
    let mut worst: f64 = 0.0;
    for k in 0..1000 {
        let p = random_model(&mut rng, k);
        let x = point_with_margin(&mut rng, &p, 1e-5);
        let psi = eval_psi(&p, &x).unwrap();
        let numeric = fd_laplacian(|y| eval_phi(&p, y), &x, 1e-4);
        worst = worst.max((psi - numeric).abs() / (1.0 + psi.abs()));
    }
    report(
        "laplacian identity",
        worst < 1e-4,
        &format!("1000 instances, worst scaled error {worst:.3e} (limit 1e-4)"),
    );
}

#[test]
fn phi_is_exactly_zero_on_the_sphere() {
    let mut rng = RngStream::new(SEED, "acceptance-boundary");
    let mut nonzero = 0;
    for k in 0..10_000 {
        let p = random_model(&mut rng, k);
        let x = sample_unit_sphere(&mut rng, p.dim(), 1);
        if eval_phi(&p, x.point(0)) != 0.0 {
            nonzero += 1;
        }
    }
    report(
        "boundary exactness",
        nonzero == 0,
        &format!("{nonzero} of 10000 sphere points give a nonzero phi"),
    );
}

#[test]
fn pseudo_network_linearization_identities() {
    let mut rng = RngStream::new(SEED, "acceptance-linearization");
    let mut ulps_off = 0;
    let mut affine_worst: f64 = 0.0;
    let mut linear_worst: f64 = 0.0;
    for k in 0..10_000 {
        let p0 = random_model(&mut rng, k);
        let p0 = p0.clone().with_weights(p0.w0().clone());
        let x = sample_unit_ball(&mut rng, p0.dim(), 1).point(0).to_vec();
        if eval_pseudo_g(&p0, &x).to_bits() != eval_psi(&p0, &x).unwrap().to_bits() {
            ulps_off += 1;
        }
        let shape = (p0.width(), p0.dim());
        let mut draw = || {
            let data = (0..shape.0 * shape.1).map(|_| rng.symmetric(1.0)).collect();
            WeightMatrix::from_vec(shape.0, shape.1, data)
        };
        let (u, v) = (draw(), draw());
        let (s, t) = (rng.symmetric(3.0), rng.symmetric(3.0));

        let moved = p0.clone().with_weights(p0.w0().add(&u));
        let lhs = eval_pseudo_g(&moved, &x);
        let rhs = eval_pseudo_gb(&p0, &u, &x) + psi_at(&p0, p0.w0(), &x);
        affine_worst = affine_worst.max((lhs - rhs).abs() / (1.0 + rhs.abs()));

        let mut combo = u.scaled(s);
        combo.axpy(t, &v);
        let lhs = eval_pseudo_gb(&p0, &combo, &x);
        let rhs = s * eval_pseudo_gb(&p0, &u, &x) + t * eval_pseudo_gb(&p0, &v, &x);
        linear_worst = linear_worst.max((lhs - rhs).abs() / (1.0 + rhs.abs()));
    }
    report(
        "linearization identities",
        ulps_off == 0 && affine_worst <= 1e-10 && linear_worst <= 1e-12,
        &format!(
            "g(W0) != psi(W0) bitwise at {ulps_off} points; affine split error {affine_worst:.2e} (limit 1e-10); \
             linearity error {linear_worst:.2e} (limit 1e-12)"
        ),
    );
}

/// Median final averages for one `(m, N)` cell over three seeds.
#[derive(Clone, Copy, Debug)]
struct BandCell {
    m: usize,
    n: usize,
    avg_train: f64,
    gap: f64,
}

fn band_cells() -> &'static [BandCell] {
    static CELLS: OnceLock<Vec<BandCell>> = OnceLock::new();
    CELLS.get_or_init(|| {
        let mut out = Vec::new();
        for m in [100, 1000] {
            for n in [100, 1000, 10_000] {
                let mut train = Vec::new();
                let mut gaps = Vec::new();
                for seed in 1..=3 {
                    let mut cfg = RunConfig::default().with_seed(seed);
                    cfg.train.iterations = 200_000;
                    cfg.train.eval_every = 5000;
                    cfg.train.n_test = 10_000;
                    let cell = run_cell(&cfg, m, m, n).unwrap();
                    assert!(cell.report.blowup.is_none(), "blow-up at m={m}, N={n}");
                    let (tr, ex) = (cell.report.final_avg_train_loss(), cell.report.final_avg_expected_loss());
                    train.push(tr);
                    gaps.push(ex - tr);
                }
                out.push(BandCell {
                    m,
                    n,
                    avg_train: median(&train),
                    gap: median(&gaps),
                });
            }
        }
        out
    })
}

#[test]
fn desk_scale_table_band_and_gap_trend() {
    let cells = band_cells();
    let in_band = cells.iter().all(|c| (1e-5..=5e-3).contains(&c.avg_train));
    let trend = [100, 1000].iter().all(|&m| {
        let gap = |n| cells.iter().find(|c| c.m == m && c.n == n).unwrap().gap;
        gap(10_000) < gap(100)
    });
    let listing: Vec<String> = cells
        .iter()
        .map(|c| format!("(m={}, N={}) train {:.2e} gap {:.2e}", c.m, c.n, c.avg_train, c.gap))
        .collect();
    report(
        "table band",
        in_band && trend,
        &format!("band [1e-5, 5e-3] {in_band}; gap shrinks with N {trend}; {}", listing.join(", ")),
    );
}

#[test]
fn training_loss_is_width_independent_across_sample_sizes() {
    let row: Vec<f64> = band_cells().iter().filter(|c| c.m == 100).map(|c| c.avg_train).collect();
    let hi = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lo = row.iter().cloned().fold(f64::INFINITY, f64::min);
    report(
        "sample-size independence",
        hi <= 10.0 * lo,
        &format!(
            "m=100 average training losses [{}], max/min ratio {:.2}",
            row.iter().map(|v| format!("{v:.3e}")).collect::<Vec<_>>().join(", "),
            hi / lo
        ),
    );
}

#[test]
fn random_feature_approximation_bound() {
    let r = approx_run(&[1, 3], &[64, 256, 1024], 500, 0.1, SEED, 100).unwrap();
    let worst = r.cells.iter().map(|c| c.failure_fraction).fold(0.0, f64::max);
    let slope = r.decoupled.slope;
    report(
        "approximation bound",
        worst <= 0.13 && (-0.6..=-0.4).contains(&slope),
        &format!("worst failure fraction {worst:.3} (limit 0.13); decoupled slope {slope:.3} (band [-0.6, -0.4])"),
    );
}

#[test]
fn concentration_failure_rate() {
    let c = check_concentration(1.0, SEED).unwrap();
    report("concentration", c.passed, &c.detail);
}

#[test]
fn rademacher_scaling() {
    let c = check_rademacher(1.0, SEED).unwrap();
    report("rademacher scaling", c.passed, &c.detail);
}

fn relative_gap(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        (a - b).abs() / a.abs().max(b.abs())
    }
}

/// `base^(1/k)` through logarithms.
fn log_root(base: f64, k: f64) -> f64 {
    (base.ln() / k).exp()
}

fn oracle_cd(d: usize) -> (f64, f64) {
    let x = d as f64;
    let r = x.sqrt();
    let cd = 12.0 * x + 26.0 * x * r + 4.0 * x * x + 2.0 * x * x * r;
    let cdp = 24.0 * r + 76.0 * x + 60.0 * x * r + 12.0 * x * x + 4.0 * x * x * r;
    (cd, cdp)
}

fn oracle_m(t: &ThresholdInputs) -> f64 {
    let (cd, cdp) = oracle_cd(t.d);
    let (a, b, e, f) = (t.alpha, t.beta, t.epsilon, t.f_norm);
    let l = 1.0 + (-2.0 * t.delta.ln()).sqrt();
    [
        log_root(4.0 * cd * cd * f * f * l * l / e, 1.0 + 2.0 * a + 4.0 * b),
        log_root(cdp / e, 3.0 * b + a - 1.0),
        log_root(f / e, 5.0 * b + 2.0 * a - 1.0),
        log_root(f * f / e, 4.0 * b + 2.0 * a),
    ]
    .into_iter()
    .fold(0.0, f64::max)
}

fn oracle_t0(m: f64, t: &ThresholdInputs) -> f64 {
    let (a, b, e, f) = (t.alpha, t.beta, t.epsilon, t.f_norm);
    let (lm, le) = (m.ln(), e.ln());
    let term = |pm: f64, pe: f64| (pm * lm - pe * le).exp();
    let smallest = [
        term((1.0 + 3.0 * a + b) / 2.0, 0.75),
        term((1.0 + 5.0 * a + 3.0 * b) / 3.0, 2.0 / 3.0),
        term((2.0 + 4.0 * a) / 3.0, 2.0 / 3.0),
        term(2.0 * (a + b), 0.5),
        term(3.0 * a + 5.0 * b - 1.0, 1.0),
        term((2.0 + 5.0 * a + 2.0 * b) / 3.0, 2.0 / 3.0),
        term((1.0 + 4.0 * a + 3.0 * b) / 2.0, 0.5),
        term(1.0 + 2.0 * a + b, 0.5),
    ]
    .into_iter()
    .fold(f64::INFINITY, f64::min);
    let c_f = 1.0 / ((1.0 + f) * (1.0 + f) * if f > 1.0 { f } else { 1.0 });
    c_f * smallest
}

fn oracle_n0(m: f64, eta: f64, iterations: f64, t: &ThresholdInputs) -> f64 {
    let scale = (-(t.alpha + 2.0 * t.beta) * m.ln()).exp();
    let lead = ((scale * t.f_norm + 1.0) / t.epsilon).powi(2);
    let opt = (eta * iterations).powi(2) * (-4.0 * t.alpha * m.ln()).exp();
    lead * if opt > -t.delta.ln() { opt } else { -t.delta.ln() }
}

#[test]
fn threshold_calculators_match_reevaluation() {
    let mut worst: f64 = 0.0;
    for d in 1..=6 {
        let (a, b) = (constants_cd(d), oracle_cd(d));
        worst = worst.max(relative_gap(a.0, b.0)).max(relative_gap(a.1, b.1));
    }
    let grid = threshold_grid();
    for t in &grid {
        worst = worst.max(relative_gap(width_threshold_m(t).unwrap(), oracle_m(t)));
        for m in [2.0, 100.0, 1e4] {
            worst = worst.max(relative_gap(iteration_cap_t0(m, t).unwrap(), oracle_t0(m, t)));
            for (eta, iters) in [(1.0 / m, 1e3), (0.01, 1e5)] {
                worst = worst.max(relative_gap(
                    sample_threshold_n0(m, eta, iters, t).unwrap(),
                    oracle_n0(m, eta, iters, t),
                ));
            }
        }
    }
    let mono = check_thresholds();
    report(
        "threshold calculators",
        worst <= 1e-12 && mono.passed,
        &format!("{} grid points, worst relative deviation {worst:.2e} (limit 1e-12); {}", grid.len(), mono.detail),
    );
}

#[test]
fn trajectory_monitors_stay_within_envelopes() {
    let r = trajectory_run(256, 10_000, SEED).unwrap();
    report(
        "trajectory monitors",
        r.drift_within_envelope && r.gap_slope <= 3.3,
        &format!(
            "drift within envelope at all {} checkpoints: {}; psi-g gap growth exponent {:.3} (limit 3.3)",
            r.iters.len(),
            r.drift_within_envelope,
            r.gap_slope
        ),
    );
}

fn run_table1(out: &Path) {
    let status = Command::new(env!("CARGO_BIN_EXE_pinn"))
        .args(["table1", "--scale", "0.1", "--out"])
        .arg(out)
        .stderr(std::process::Stdio::null())
        .stdout(std::process::Stdio::null())
        .status()
        .unwrap();
    assert!(status.success(), "table1 exited with {status}");
}

#[test]
fn table1_output_is_byte_identical_across_runs() {
    let root = tempfile::tempdir().unwrap();
    let (first, second) = (root.path().join("first"), root.path().join("second"));
    run_table1(&first);
    run_table1(&second);
    let (a, b) = (list_tree(&first).unwrap(), list_tree(&second).unwrap());
    let mut differing: Vec<String> = Vec::new();
    if a != b {
        differing.push("file lists differ".into());
    }
    for rel in &a {
        let (x, y) = (std::fs::read(first.join(rel)), std::fs::read(second.join(rel)));
        if x.ok() != y.ok() {
            differing.push(rel.display().to_string());
        }
    }
    report(
        "determinism",
        !a.is_empty() && differing.is_empty(),
        &format!("{} files compared; differing: {differing:?}", a.len()),
    );
}
