//! Subcommand implementations behind the `pinn` binary.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use crate::config::{parse_config, ConfigError, RunConfig};
use crate::experiments::{approx_run, run_grid, verify_suite, CellResult, Check};
use crate::output::{log_y_plot, num, write_atomic, write_json, CsvTable, Series};

pub const EXIT_OK: u8 = 0;
pub const EXIT_CONFIG: u8 = 1;
pub const EXIT_VERIFY: u8 = 2;
pub const EXIT_BLOWUP: u8 = 3;

#[derive(Parser, Debug)]
#[command(name = "pinn", version, about = "Two-layer ReLU³ PINN experiments for Poisson's equation on the unit ball")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct Common {
    /// Overrides every seed in the configuration.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Desk-scale multiplier for iteration counts and trial budgets; values
    /// below 1 also cap widths at 1000.
    #[arg(long, default_value_t = 1.0)]
    pub scale: f64,
    /// Run configuration file.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// One training run: loss-curve CSV, summary JSON and SVG plot.
    Train(Common),
    /// Width × sample-size grid of final average losses.
    Table1(Common),
    /// Average training-loss curves, one plot per width.
    Fig1(Common),
    /// The theory check suite with a pass/fail report.
    Verify(Common),
    /// Random-feature approximation experiment on a custom grid.
    Approx {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',', default_values_t = vec![1usize, 3])]
        dims: Vec<usize>,
        #[arg(long, value_delimiter = ',', default_values_t = vec![64usize, 256, 1024])]
        widths: Vec<usize>,
        #[arg(long, default_value_t = 500)]
        trials: usize,
        #[arg(long, default_value_t = 0.1)]
        delta: f64,
    },
}

#[derive(Debug)]
pub enum Failure {
    Config(String),
    Runtime(anyhow::Error),
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Config(e.to_string())
    }
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Runtime(e)
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Runtime(e.into())
    }
}

fn load(common: &Common, preset: Option<RunConfig>) -> Result<(RunConfig, PathBuf), Failure> {
    if !(common.scale > 0.0 && common.scale.is_finite()) {
        return Err(Failure::Config(format!("--scale: must be positive (got {})", common.scale)));
    }
    let mut cfg = match &common.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?;
            let c = parse_config(&text)?;
            match preset {
                Some(p) if c.grid.is_none() => RunConfig {
                    grid: p.grid,
                    ..c
                },
                _ => c,
            }
        }
        None => preset.unwrap_or_default(),
    };
    if let Some(seed) = common.seed {
        cfg = cfg.with_seed(seed);
    }
    let out = common.out.clone().unwrap_or_else(|| cfg.output_dir.clone());
    Ok((cfg, out))
}

fn summary(command: &str, cfg: &RunConfig, scale: f64, metrics: serde_json::Value) -> serde_json::Value {
    json!({
        "tool": "pinn",
        "version": env!("CARGO_PKG_VERSION"),
        "command": command,
        "scale": scale,
        "config": cfg,
        "seeds": { "model": cfg.model.seed, "data": cfg.data.seed, "train": cfg.train.seed },
        "metrics": metrics,
    })
}

fn curve_csv(cell: &CellResult) -> std::io::Result<Vec<u8>> {
    let mut buf = Vec::new();
    cell.report.write_csv(&mut buf).map_err(std::io::Error::other)?;
    Ok(buf)
}

fn any_blowup(cells: &[CellResult]) -> bool {
    cells.iter().any(|c| c.report.blowup.is_some())
}

pub fn train(common: &Common) -> Result<u8, Failure> {
    let (cfg, out) = load(common, None)?;
    let cfg = cfg.scaled(common.scale);
    let started = Instant::now();
    let cell = crate::experiments::run_cell(&cfg, cfg.model.m, cfg.model.m, cfg.data.n)?;
    if cell.shifted_by != 0.0 {
        eprintln!("note: f(0) = {} is nonzero; training on the shifted right-hand side", cell.shifted_by);
    }
    write_atomic(&out.join("curve.csv"), &curve_csv(&cell)?)?;
    let recs = &cell.report.records;
    let series = |name: &str, pick: fn(&pinn_core::train::EvalRecord) -> f64| Series {
        label: name.into(),
        points: recs.iter().map(|r| (r.iter as f64, pick(r))).collect(),
    };
    let svg = log_y_plot(
        &format!("m = {}, N = {}", cell.m, cell.n),
        "iteration",
        "loss",
        &[
            series("train", |r| r.train_loss),
            series("avg train", |r| r.avg_train_loss),
            series("expected", |r| r.expected_loss),
            series("avg expected", |r| r.avg_expected_loss),
        ],
    );
    write_atomic(&out.join("curve.svg"), svg.as_bytes())?;
    let last = cell.report.last();
    let metrics = json!({
        "iterations_completed": cell.report.iterations_completed,
        "initial": recs[0],
        "final": last,
        "blowup": cell.report.blowup,
        "shifted_by": cell.shifted_by,
    });
    write_json(&out.join("summary.json"), &summary("train", &cfg, common.scale, metrics))?;
    eprintln!("train: {:.1}s", started.elapsed().as_secs_f64());
    println!(
        "final avg train loss {:.4e}, avg expected loss {:.4e}",
        last.avg_train_loss, last.avg_expected_loss
    );
    if let Some(b) = &cell.report.blowup {
        println!("blow-up at iteration {}: {}", b.iter, b.reason);
        return Ok(EXIT_BLOWUP);
    }
    Ok(EXIT_OK)
}

fn grid_cells(common: &Common) -> Result<(RunConfig, PathBuf, Vec<usize>, Vec<CellResult>), Failure> {
    let (cfg, out) = load(common, Some(RunConfig::table1()))?;
    let requested = cfg.grid.as_ref().map(|g| g.widths.clone()).unwrap_or_else(|| vec![cfg.model.m]);
    let cfg = cfg.scaled(common.scale);
    let cells = run_grid(&cfg, &requested)?;
    Ok((cfg, out, requested, cells))
}

pub fn table1(common: &Common) -> Result<u8, Failure> {
    let started = Instant::now();
    let (cfg, out, _, cells) = grid_cells(common)?;
    let mut csv = CsvTable::new(
        "pinn table1 v1",
        &["m", "m_run", "n", "avg_train_loss", "avg_expected_loss", "iterations", "blowup"],
    );
    for c in &cells {
        csv.push(vec![
            c.m_requested.to_string(),
            c.m.to_string(),
            c.n.to_string(),
            num(c.report.final_avg_train_loss()),
            num(c.report.final_avg_expected_loss()),
            c.report.iterations_completed.to_string(),
            c.report.blowup.is_some().to_string(),
        ]);
        write_atomic(
            &out.join("curves").join(format!("m{}_n{}.csv", c.m_requested, c.n)),
            &curve_csv(c)?,
        )?;
    }
    write_atomic(&out.join("table1.csv"), csv.render().as_bytes())?;
    let text = render_table(&cells);
    write_atomic(&out.join("table1.txt"), text.as_bytes())?;
    let metrics: Vec<_> = cells
        .iter()
        .map(|c| {
            json!({
                "m": c.m_requested, "m_run": c.m, "n": c.n,
                "avg_train_loss": c.report.final_avg_train_loss(),
                "avg_expected_loss": c.report.final_avg_expected_loss(),
                "blowup": c.report.blowup,
            })
        })
        .collect();
    write_json(&out.join("table1.json"), &summary("table1", &cfg, common.scale, json!(metrics)))?;
    print!("{text}");
    eprintln!("table1: {:.1}s", started.elapsed().as_secs_f64());
    Ok(if any_blowup(&cells) { EXIT_BLOWUP } else { EXIT_OK })
}

/// `train/expected` per cell, widths as rows and sample sizes as columns.
fn render_table(cells: &[CellResult]) -> String {
    let mut sizes: Vec<usize> = cells.iter().map(|c| c.n).collect();
    sizes.sort_unstable();
    sizes.dedup();
    let mut rows: Vec<usize> = Vec::new();
    for c in cells {
        if !rows.contains(&c.m_requested) {
            rows.push(c.m_requested);
        }
    }
    let mut out = format!("{:>8}", "m \\ N");
    for n in &sizes {
        out.push_str(&format!(" | {:>21}", n));
    }
    out.push('\n');
    for m in rows {
        out.push_str(&format!("{m:>8}"));
        for n in &sizes {
            let cell = cells.iter().find(|c| c.m_requested == m && c.n == *n);
            let s = match cell {
                Some(c) => format!(
                    "{:.2e}/{:.2e}",
                    c.report.final_avg_train_loss(),
                    c.report.final_avg_expected_loss()
                ),
                None => "-".into(),
            };
            out.push_str(&format!(" | {s:>21}"));
        }
        out.push('\n');
    }
    out
}

pub fn fig1(common: &Common) -> Result<u8, Failure> {
    let started = Instant::now();
    let (cfg, out, requested, cells) = grid_cells(common)?;
    let mut by_width: BTreeMap<usize, Vec<&CellResult>> = BTreeMap::new();
    for c in &cells {
        by_width.entry(c.m_requested).or_default().push(c);
    }
    for m in &requested {
        let group = &by_width[m];
        let mut header = vec!["iter".to_string()];
        header.extend(group.iter().map(|c| format!("avg_train_loss_n{}", c.n)));
        let header_refs: Vec<&str> = header.iter().map(|s| s.as_str()).collect();
        let mut csv = CsvTable::new("pinn fig1 v1", &header_refs);
        let len = group.iter().map(|c| c.report.records.len()).max().unwrap_or(0);
        for k in 0..len {
            let iter = group
                .iter()
                .find_map(|c| c.report.records.get(k).map(|r| r.iter))
                .unwrap_or_default();
            let mut row = vec![iter.to_string()];
            row.extend(
                group
                    .iter()
                    .map(|c| c.report.records.get(k).map_or(String::new(), |r| num(r.avg_train_loss))),
            );
            csv.push(row);
        }
        write_atomic(&out.join(format!("fig1_m{m}.csv")), csv.render().as_bytes())?;
        let series: Vec<Series> = group
            .iter()
            .map(|c| Series {
                label: format!("N = {}", c.n),
                points: c.report.records.iter().map(|r| (r.iter as f64, r.avg_train_loss)).collect(),
            })
            .collect();
        let run_m = group.first().map_or(*m, |c| c.m);
        let title = if run_m == *m {
            format!("average training loss, m = {m}")
        } else {
            format!("average training loss, m = {m} (run at {run_m})")
        };
        let svg = log_y_plot(&title, "iteration", "average training loss", &series);
        write_atomic(&out.join(format!("fig1_m{m}.svg")), svg.as_bytes())?;
    }
    let metrics: Vec<_> = cells
        .iter()
        .map(|c| json!({"m": c.m_requested, "m_run": c.m, "n": c.n, "final_avg_train_loss": c.report.final_avg_train_loss()}))
        .collect();
    write_json(&out.join("fig1.json"), &summary("fig1", &cfg, common.scale, json!(metrics)))?;
    eprintln!("fig1: {:.1}s", started.elapsed().as_secs_f64());
    Ok(if any_blowup(&cells) { EXIT_BLOWUP } else { EXIT_OK })
}

fn report_checks(checks: &[Check]) {
    for c in checks {
        println!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
    }
}

pub fn verify(common: &Common) -> Result<u8, Failure> {
    let (cfg, out) = load(common, None)?;
    let started = Instant::now();
    let checks = verify_suite(common.scale, cfg.train.seed)?;
    report_checks(&checks);
    let all = checks.iter().all(|c| c.passed);
    write_json(
        &out.join("verify.json"),
        &json!({
            "tool": "pinn",
            "version": env!("CARGO_PKG_VERSION"),
            "scale": common.scale,
            "seed": cfg.train.seed,
            "passed": all,
            "checks": checks,
        }),
    )?;
    eprintln!("verify: {:.1}s", started.elapsed().as_secs_f64());
    Ok(if all { EXIT_OK } else { EXIT_VERIFY })
}

pub fn approx(common: &Common, dims: &[usize], widths: &[usize], trials: usize, delta: f64) -> Result<u8, Failure> {
    let (cfg, out) = load(common, None)?;
    if dims.is_empty() || widths.is_empty() || dims.contains(&0) || widths.contains(&0) {
        return Err(Failure::Config("--dims/--widths: need positive entries".into()));
    }
    if trials < 100 {
        return Err(Failure::Config(format!("--trials: at least 100 required (got {trials})")));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Failure::Config(format!("--delta: must lie in (0, 1) (got {delta})")));
    }
    let started = Instant::now();
    let trials = ((trials as f64 * common.scale).round() as usize).max(100);
    let r = approx_run(dims, widths, trials, delta, cfg.train.seed, 100)?;
    let mut csv = CsvTable::new(
        "pinn approx v1",
        &["d", "m", "trials", "bound", "failure_fraction", "mean_error", "max_error", "pass"],
    );
    for c in &r.cells {
        csv.push(vec![
            c.d.to_string(),
            c.m.to_string(),
            c.trials.to_string(),
            num(c.bound),
            num(c.failure_fraction),
            num(c.mean_error),
            num(c.max_error),
            (c.failure_fraction <= r.allowed_failure).to_string(),
        ]);
    }
    write_atomic(&out.join("approx.csv"), csv.render().as_bytes())?;
    let mut dec = CsvTable::new("pinn approx-decoupled v1", &["k", "mean_error"]);
    for (k, e) in r.decoupled.counts.iter().zip(&r.decoupled.mean_errors) {
        dec.push(vec![k.to_string(), num(*e)]);
    }
    write_atomic(&out.join("approx_decoupled.csv"), dec.render().as_bytes())?;
    let cells_ok = r.cells.iter().all(|c| c.failure_fraction <= r.allowed_failure);
    let slope_ok = (-0.6..=-0.4).contains(&r.decoupled.slope);
    write_json(
        &out.join("approx.json"),
        &summary("approx", &cfg, common.scale, json!({ "result": r, "passed": cells_ok && slope_ok })),
    )?;
    for c in &r.cells {
        println!(
            "d={} m={}: failure fraction {:.3} (allowed {:.3}), mean error {:.3e}, bound {:.3e}",
            c.d, c.m, c.failure_fraction, r.allowed_failure, c.mean_error, c.bound
        );
    }
    println!("decoupled slope {:.3} (band [-0.6, -0.4])", r.decoupled.slope);
    eprintln!("approx: {:.1}s", started.elapsed().as_secs_f64());
    Ok(if cells_ok && slope_ok { EXIT_OK } else { EXIT_VERIFY })
}

pub fn run(cli: &Cli) -> Result<u8, Failure> {
    match &cli.command {
        Command::Train(c) => train(c),
        Command::Table1(c) => table1(c),
        Command::Fig1(c) => fig1(c),
        Command::Verify(c) => verify(c),
        Command::Approx {
            common,
            dims,
            widths,
            trials,
            delta,
        } => approx(common, dims, widths, *trials, *delta),
    }
}

/// Output directory contents relative to `root`, for comparisons.
pub fn list_tree(root: &Path) -> std::io::Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in std::fs::read_dir(&dir)? {
            let p = entry?.path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push(p.strip_prefix(root).map(Path::to_path_buf).unwrap_or(p));
            }
        }
    }
    out.sort();
    Ok(out)
}
