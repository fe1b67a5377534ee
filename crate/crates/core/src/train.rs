//! Plain SGD on the hidden weights with loss tracking and blow-up detection.

use std::io::Write;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::math::{norm2, RngStream, WeightMatrix};
use crate::pinn::{accumulate_grad_psi, init_params, psi_at, ModelConfig, ModelParams};
use crate::problem::{build_dataset, empirical_loss, Dataset, TargetFunction};
use crate::theory::monitor::{gap_monitor, GapRecord, DEFAULT_PROBE_SIZE};

pub const DEFAULT_EVAL_EVERY: u64 = 1000;
pub const DEFAULT_N_TEST: usize = 100_000;
pub const DEFAULT_BLOWUP_W_MAX: f64 = 10.0;
pub const DEFAULT_BLOWUP_PSI_MAX: f64 = 1e3;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub eta: f64,
    pub iterations: u64,
    pub eval_every: u64,
    pub n_test: usize,
    pub blowup_w_max: f64,
    pub blowup_psi_max: f64,
    pub seed: u64,
    /// Record ψ-vs-g gaps at every checkpoint.
    pub monitor_gaps: bool,
    pub probe_size: usize,
}

impl TrainConfig {
    /// Defaults with `η = eta_scale / m`.
    pub fn for_width(m: usize, eta_scale: f64, iterations: u64, seed: u64) -> Self {
        TrainConfig {
            eta: eta_scale / m as f64,
            iterations,
            eval_every: DEFAULT_EVAL_EVERY.min(iterations.max(1)),
            n_test: DEFAULT_N_TEST,
            blowup_w_max: DEFAULT_BLOWUP_W_MAX,
            blowup_psi_max: DEFAULT_BLOWUP_PSI_MAX,
            seed,
            monitor_gaps: false,
            probe_size: DEFAULT_PROBE_SIZE,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eta >= 0.0 && self.eta.is_finite()) {
            return Err(invalid("eta", "must be finite and >= 0"));
        }
        if self.eval_every == 0 {
            return Err(invalid("eval_every", "must be at least 1"));
        }
        if self.iterations > 0 && self.eval_every > self.iterations {
            return Err(invalid("eval_every", "must not exceed the iteration count"));
        }
        if self.n_test == 0 {
            return Err(invalid("n_test", "must be at least 1"));
        }
        if !(self.blowup_w_max > 0.0) {
            return Err(invalid("blowup_w_max", "must be positive"));
        }
        if !(self.blowup_psi_max > 0.0) {
            return Err(invalid("blowup_psi_max", "must be positive"));
        }
        if self.monitor_gaps && self.probe_size == 0 {
            return Err(invalid("probe_size", "must be at least 1"));
        }
        Ok(())
    }
}

/// What one SGD step did.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepInfo {
    pub index: usize,
    /// ψ at the drawn sample before the update.
    pub psi: f64,
    /// `η · max_i ‖∂L/∂w_i‖₂`, a bound on how far any row moved.
    pub max_row_step: f64,
}

/// Draws one sample index and moves `W` by `-η ∇_W L` at it.
pub fn sgd_step(p: &mut ModelParams, data: &Dataset, rng: &mut RngStream, eta: f64) -> Result<StepInfo> {
    let mut grad = WeightMatrix::zeros(p.width(), p.dim());
    sgd_step_with(p, data, rng, eta, &mut grad)
}

fn sgd_step_with(
    p: &mut ModelParams,
    data: &Dataset,
    rng: &mut RngStream,
    eta: f64,
    grad: &mut WeightMatrix,
) -> Result<StepInfo> {
    assert!(eta >= 0.0, "learning rate must be nonnegative");
    let index = rng.index(data.len());
    let (x, y) = data.sample(index);
    let psi = psi_at(p, &p.w, x);
    if !psi.is_finite() {
        return Err(Error::NonFinite(format!("psi = {psi} at sample {index}")));
    }
    grad.as_mut_slice().fill(0.0);
    accumulate_grad_psi(p, &p.w, x, 2.0 * (psi - y), grad);
    let max_row = grad.row_norms().fold(0.0, f64::max);
    p.w.axpy(-eta, grad);
    if !p.w.is_finite() {
        return Err(Error::NonFinite(format!("weights after step at sample {index}")));
    }
    Ok(StepInfo {
        index,
        psi,
        max_row_step: eta * max_row,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlowupEvent {
    pub iter: u64,
    pub reason: String,
}

/// Flags a row of `W` longer than `blowup_w_max` or `|ψ|` above
/// `blowup_psi_max` at the current sample.
pub fn blowup_check(p: &ModelParams, psi_sample: f64, cfg: &TrainConfig) -> Option<String> {
    if !(psi_sample.abs() <= cfg.blowup_psi_max) {
        return Some(format!("|psi| = {psi_sample:e} exceeds {:e}", cfg.blowup_psi_max));
    }
    let w_max = p.w.row_norms().fold(0.0, f64::max);
    if !(w_max <= cfg.blowup_w_max) {
        return Some(format!("max row norm {w_max:e} exceeds {:e}", cfg.blowup_w_max));
    }
    None
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub iter: u64,
    pub train_loss: f64,
    pub avg_train_loss: f64,
    pub expected_loss: f64,
    pub avg_expected_loss: f64,
    /// Largest row drift seen at any checkpoint so far.
    pub max_drift: f64,
    /// `Σ_t η max_i ‖∂L/∂w_i‖₂` up to this checkpoint.
    pub drift_envelope: f64,
    pub gap: Option<GapRecord>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TrainReport {
    pub records: Vec<EvalRecord>,
    pub blowup: Option<BlowupEvent>,
    pub iterations_completed: u64,
    pub final_params: ModelParams,
    #[serde(skip)]
    pub wall_clock_secs: f64,
}

/// Equality ignores the wall-clock time.
impl PartialEq for TrainReport {
    fn eq(&self, other: &Self) -> bool {
        self.records == other.records
            && self.blowup == other.blowup
            && self.iterations_completed == other.iterations_completed
            && self.final_params == other.final_params
    }
}

pub const CURVE_CSV_HEADER: &str = "# pinn loss-curve v1";

impl TrainReport {
    pub fn last(&self) -> &EvalRecord {
        self.records.last().expect("a report always holds the initial record")
    }

    pub fn final_avg_train_loss(&self) -> f64 {
        self.last().avg_train_loss
    }

    pub fn final_avg_expected_loss(&self) -> f64 {
        self.last().avg_expected_loss
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "{CURVE_CSV_HEADER}")?;
        writeln!(out, "iter,train_loss,avg_train_loss,expected_loss,avg_expected_loss,max_drift")?;
        for r in &self.records {
            writeln!(
                out,
                "{},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
                r.iter, r.train_loss, r.avg_train_loss, r.expected_loss, r.avg_expected_loss, r.max_drift
            )?;
        }
        Ok(())
    }
}

/// Running mean `(1/T′) Σ_{t<T′} L_t` at each stamp, with `L_t` held at the
/// last recorded value (exact when every iteration is recorded). The first
/// stamp must be 0 and reports its own value.
pub fn average_losses(history: &[(u64, f64)]) -> Result<Vec<f64>> {
    if history.is_empty() {
        return Err(Error::EmptyHistory);
    }
    check_stamps(history)?;
    let mut out = Vec::with_capacity(history.len());
    out.push(history[0].1);
    let mut acc = 0.0;
    for k in 1..history.len() {
        let (t_prev, v_prev) = history[k - 1];
        acc += v_prev * (history[k].0 - t_prev) as f64;
        out.push(acc / history[k].0 as f64);
    }
    Ok(out)
}

/// The same step-weighted mean at an arbitrary horizon `T′ ≥ 1`.
pub fn average_loss_at(history: &[(u64, f64)], t_prime: u64) -> Result<f64> {
    if history.is_empty() {
        return Err(Error::EmptyHistory);
    }
    if t_prime == 0 {
        return Err(invalid("t_prime", "must be at least 1"));
    }
    check_stamps(history)?;
    let mut acc = 0.0;
    for (k, &(t, v)) in history.iter().enumerate() {
        if t >= t_prime {
            break;
        }
        let end = history.get(k + 1).map_or(t_prime, |n| n.0.min(t_prime));
        acc += v * (end - t) as f64;
    }
    Ok(acc / t_prime as f64)
}

fn check_stamps(history: &[(u64, f64)]) -> Result<()> {
    if history[0].0 != 0 {
        return Err(invalid("history", "stamps must start at 0"));
    }
    if history.windows(2).any(|w| w[1].0 <= w[0].0) {
        return Err(invalid("history", "stamps must be strictly increasing"));
    }
    Ok(())
}

/// Incremental form of [`average_losses`].
#[derive(Clone, Debug, Default)]
struct RunningAverage {
    acc: f64,
    last: Option<(u64, f64)>,
}

impl RunningAverage {
    fn push(&mut self, t: u64, v: f64) -> f64 {
        match self.last {
            None => {
                self.last = Some((t, v));
                v
            }
            Some((t_prev, v_prev)) => {
                self.acc += v_prev * (t - t_prev) as f64;
                self.last = Some((t, v));
                self.acc / t as f64
            }
        }
    }
}

/// Seed-determined test set used for every expected-loss estimate of a run.
pub fn test_set(f: &TargetFunction, cfg: &TrainConfig, d: usize) -> Result<Dataset> {
    build_dataset(f, cfg.n_test, d, &mut RngStream::new(cfg.seed, "test"))
}

/// Initializes a model and runs `cfg.iterations` SGD steps on `data`.
///
/// Losses are recorded at `t = 0`, every `eval_every` steps and at `t = T`.
/// A blow-up stops the run and returns the records so far, closed by a
/// record at the failing iteration when its losses are still finite.
pub fn run_training(
    cfg: &TrainConfig,
    model_cfg: &ModelConfig,
    data: &Dataset,
    f: &TargetFunction,
) -> Result<TrainReport> {
    cfg.validate()?;
    model_cfg.validate()?;
    if data.is_empty() {
        return Err(invalid("data", "dataset must be nonempty"));
    }
    if data.dim() != model_cfg.d {
        return Err(invalid("data", "dimension does not match the model"));
    }
    let params = init_params(model_cfg, &mut RngStream::new(model_cfg.seed, "init"));
    let test = test_set(f, cfg, model_cfg.d)?;
    run_training_from(cfg, params, data, &test, f)
}

/// [`run_training`] from given parameters and a prebuilt test set.
pub fn run_training_from(
    cfg: &TrainConfig,
    mut p: ModelParams,
    data: &Dataset,
    test: &Dataset,
    f: &TargetFunction,
) -> Result<TrainReport> {
    cfg.validate()?;
    let started = Instant::now();
    let probe = if cfg.monitor_gaps {
        Some(build_dataset(f, cfg.probe_size, p.dim(), &mut RngStream::new(cfg.seed, "probe"))?)
    } else {
        None
    };
    let mut rng = RngStream::new(cfg.seed, "sgd");
    let mut grad = WeightMatrix::zeros(p.width(), p.dim());
    let mut tracker = Tracker::default();
    let mut records = Vec::new();
    let mut blowup = None;

    records.push(tracker.record(&p, data, test, probe.as_ref(), 0)?);
    let mut t = 0;
    while t < cfg.iterations {
        let step = sgd_step_with(&mut p, data, &mut rng, cfg.eta, &mut grad);
        t += 1;
        let reason = match step {
            Ok(info) => {
                tracker.envelope += info.max_row_step;
                blowup_check(&p, info.psi, cfg)
            }
            Err(e) => Some(e.to_string()),
        };
        if let Some(reason) = reason {
            blowup = Some(BlowupEvent { iter: t, reason });
            if let Ok(r) = tracker.record(&p, data, test, probe.as_ref(), t) {
                records.push(r);
            }
            break;
        }
        if t % cfg.eval_every == 0 || t == cfg.iterations {
            match tracker.record(&p, data, test, probe.as_ref(), t) {
                Ok(r) => records.push(r),
                Err(e) => {
                    blowup = Some(BlowupEvent {
                        iter: t,
                        reason: e.to_string(),
                    });
                    break;
                }
            }
        }
    }

    Ok(TrainReport {
        records,
        blowup,
        iterations_completed: t,
        final_params: p,
        wall_clock_secs: started.elapsed().as_secs_f64(),
    })
}

#[derive(Default)]
struct Tracker {
    train_avg: RunningAverage,
    test_avg: RunningAverage,
    max_drift: f64,
    envelope: f64,
}

impl Tracker {
    fn record(
        &mut self,
        p: &ModelParams,
        data: &Dataset,
        test: &Dataset,
        probe: Option<&Dataset>,
        iter: u64,
    ) -> Result<EvalRecord> {
        let train_loss = empirical_loss(p, data)?;
        let expected_loss = empirical_loss(p, test)?;
        self.max_drift = self.max_drift.max(p.max_drift());
        Ok(EvalRecord {
            iter,
            train_loss,
            avg_train_loss: self.train_avg.push(iter, train_loss),
            expected_loss,
            avg_expected_loss: self.test_avg.push(iter, expected_loss),
            max_drift: self.max_drift,
            drift_envelope: self.envelope,
            gap: probe.map(|pr| gap_monitor(p, pr, iter)),
        })
    }
}

/// `‖w_i⁽ᵗ⁾ - w_i⁽⁰⁾‖₂` for every row.
pub fn row_drifts(p: &ModelParams) -> Vec<f64> {
    (0..p.width())
        .map(|i| {
            let d: Vec<f64> = p.w.row(i).iter().zip(p.w0().row(i)).map(|(a, b)| a - b).collect();
            norm2(&d)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::PointSet;
    use crate::pinn::eval_psi;

    fn toy() -> (ModelParams, Dataset) {
        let p = ModelParams::new(vec![1.0], vec![1.0], WeightMatrix::zeros(1, 3));
        let ds = Dataset::new(PointSet::new(3, vec![0.2, -0.1, 0.4]), vec![0.0]).unwrap();
        (p, ds)
    }

    #[test]
    fn zero_rate_leaves_weights() {
        let cfg = ModelConfig::new(3, 20, 0.0, 0.5, 0).unwrap();
        let mut p = init_params(&cfg, &mut RngStream::new(0, "init"));
        let before = p.clone();
        let f = TargetFunction::squared_norm(3);
        let ds = build_dataset(&f, 10, 3, &mut RngStream::new(0, "d")).unwrap();
        let mut r = RngStream::new(0, "sgd");
        for _ in 0..10 {
            sgd_step(&mut p, &ds, &mut r, 0.0).unwrap();
        }
        assert_eq!(p, before);
    }

    #[test]
    fn exact_label_leaves_weights() {
        let cfg = ModelConfig::new(3, 20, 0.0, 0.5, 0).unwrap();
        let mut p = init_params(&cfg, &mut RngStream::new(0, "init"));
        let x = [0.1, 0.2, -0.3];
        let y = eval_psi(&p, &x).unwrap();
        let ds = Dataset::new(PointSet::new(3, x.to_vec()), vec![y]).unwrap();
        let before = p.w.clone();
        sgd_step(&mut p, &ds, &mut RngStream::new(0, "sgd"), 0.5).unwrap();
        assert_eq!(p.w, before);
    }

    #[test]
    fn single_neuron_step() {
        let (mut p, ds) = toy();
        let eta = 1e-3;
        let info = sgd_step(&mut p, &ds, &mut RngStream::new(0, "sgd"), eta).unwrap();
        assert_eq!(info.index, 0);
        assert_eq!(info.psi, 6.0);
        // ∇_w L = 2·residual·∂ψ/∂w = 2·6·30x
        let x = ds.points.point(0);
        for j in 0..3 {
            assert!((p.w[(0, j)] + 360.0 * eta * x[j]).abs() < 1e-15);
        }
        assert_eq!(p.a(), &[1.0]);
        assert_eq!(p.b(), &[1.0]);
        assert_eq!(p.w0(), &WeightMatrix::zeros(1, 3));
    }

    #[test]
    fn averaging_rule() {
        let h = [(0, 4.0), (2, 0.0)];
        assert_eq!(average_loss_at(&h, 2).unwrap(), 4.0);
        assert!((average_loss_at(&h, 3).unwrap() - 8.0 / 3.0).abs() < 1e-15);
        assert_eq!(average_losses(&h).unwrap(), vec![4.0, 4.0]);
        let c: Vec<(u64, f64)> = (0..50).map(|t| (t * 7, 1.25)).collect();
        assert!(average_losses(&c).unwrap().iter().all(|&v| v == 1.25));
        assert_eq!(average_losses(&[]), Err(Error::EmptyHistory));
        assert!(average_losses(&[(1, 1.0)]).is_err());
        assert!(average_losses(&[(0, 1.0), (0, 2.0)]).is_err());
    }

    #[test]
    fn unit_stride_matches_definition() {
        let mut r = RngStream::new(9, "series");
        let h: Vec<(u64, f64)> = (0..500).map(|t| (t, r.uniform() * 3.0)).collect();
        let avg = average_losses(&h).unwrap();
        for tp in 1..h.len() {
            let direct = h[..tp].iter().map(|v| v.1).sum::<f64>() / tp as f64;
            assert!((avg[tp] - direct).abs() <= 1e-15 * direct.max(1.0) * 4.0);
            assert!((average_loss_at(&h, tp as u64).unwrap() - direct).abs() < 1e-14);
        }
    }

    #[test]
    fn running_average_matches_batch_form() {
        let h = [(0, 3.0), (5, 1.0), (7, 2.0), (20, 0.5)];
        let mut ra = RunningAverage::default();
        let inc: Vec<f64> = h.iter().map(|&(t, v)| ra.push(t, v)).collect();
        assert_eq!(inc, average_losses(&h).unwrap());
    }

    #[test]
    fn blowup_detection() {
        let cfg = TrainConfig::for_width(10, 1.0, 10, 0);
        let mc = ModelConfig::new(3, 10, 0.0, 0.5, 0).unwrap();
        let mut p = init_params(&mc, &mut RngStream::new(0, "init"));
        assert!(blowup_check(&p, 0.5, &cfg).is_none());
        assert!(blowup_check(&p, 2e3, &cfg).is_some());
        assert!(blowup_check(&p, f64::NAN, &cfg).is_some());
        p.w.row_mut(3)[0] = 1e6;
        assert!(blowup_check(&p, 0.0, &cfg).is_some());
    }

    #[test]
    fn absurd_rate_blows_up_fast() {
        let (p, ds) = toy();
        let mut cfg = TrainConfig::for_width(1, 1e6, 100, 0);
        cfg.eval_every = 10;
        cfg.n_test = 10;
        let f = TargetFunction::custom("zero", 3, |_| 0.0);
        let test = build_dataset(&f, 10, 3, &mut RngStream::new(0, "t")).unwrap();
        let rep = run_training_from(&cfg, p, &ds, &test, &f).unwrap();
        let ev = rep.blowup.expect("should diverge");
        assert!(ev.iter <= 5, "{ev:?}");
        assert_eq!(rep.iterations_completed, ev.iter);
    }

    fn small_run(t: u64, seed: u64) -> TrainReport {
        let mc = ModelConfig::new(3, 30, 0.0, 0.5, seed).unwrap();
        let f = TargetFunction::squared_norm(3);
        let ds = build_dataset(&f, 50, 3, &mut RngStream::new(seed, "data")).unwrap();
        let mut cfg = TrainConfig::for_width(30, 1.0, t, seed);
        cfg.eval_every = 100.min(t.max(1));
        cfg.n_test = 500;
        cfg.monitor_gaps = true;
        cfg.probe_size = 16;
        run_training(&cfg, &mc, &ds, &f).unwrap()
    }

    #[test]
    fn zero_iterations_report_initial_losses() {
        let rep = small_run(0, 1);
        assert_eq!(rep.records.len(), 1);
        let r = &rep.records[0];
        assert_eq!(r.iter, 0);
        assert_eq!(r.avg_train_loss, r.train_loss);
        assert_eq!(r.max_drift, 0.0);
        assert_eq!(r.gap.unwrap().psi_g_gap, 0.0);
    }

    #[test]
    fn runs_are_deterministic_and_freeze_other_params() {
        let a = small_run(1050, 3);
        let b = small_run(1050, 3);
        assert_eq!(a, b);
        let iters: Vec<u64> = a.records.iter().map(|r| r.iter).collect();
        assert_eq!(iters.first(), Some(&0));
        assert_eq!(iters.last(), Some(&1050));
        assert_eq!(iters.len(), 12);
        let mc = ModelConfig::new(3, 30, 0.0, 0.5, 3).unwrap();
        let init = init_params(&mc, &mut RngStream::new(3, "init"));
        assert_eq!(a.final_params.a(), init.a());
        assert_eq!(a.final_params.b(), init.b());
        assert_eq!(a.final_params.w0(), init.w0());
        for r in &a.records {
            assert!(r.max_drift <= r.drift_envelope * (1.0 + 1e-12));
        }
        assert!(a.records.windows(2).all(|w| w[1].max_drift >= w[0].max_drift));
    }

    #[test]
    fn csv_has_header_and_one_row_per_record() {
        let rep = small_run(200, 2);
        let mut buf = Vec::new();
        rep.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], CURVE_CSV_HEADER);
        assert_eq!(lines.len(), 2 + rep.records.len());
    }

    #[test]
    fn config_validation() {
        let mut c = TrainConfig::for_width(10, 1.0, 100, 0);
        assert!(c.validate().is_ok());
        c.eval_every = 200;
        assert!(c.validate().is_err());
        c.eval_every = 0;
        assert!(c.validate().is_err());
        let mut c = TrainConfig::for_width(10, 1.0, 0, 0);
        assert!(c.validate().is_ok());
        c.eta = -1.0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn row_drifts_match_max() {
        let rep = small_run(300, 4);
        let m = row_drifts(&rep.final_params).into_iter().fold(0.0, f64::max);
        assert!((m - rep.final_params.max_drift()).abs() < 1e-15);
    }
}
