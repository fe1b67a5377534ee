//! Run configuration: sectioned `key = value` documents.
//!
//! ```text
//! preset = "table1"        # optional
//!
//! [model]
//! d = 3
//! m = 100
//! alpha = 0.0
//! beta = 0.5
//! seed = 0
//!
//! [target]
//! spec = "norm2"
//!
//! [data]
//! n = 1000
//! seed = 0
//!
//! [train]
//! eta_scale = 1.0          # eta = eta_scale / m unless eta is given
//! iterations = 100000
//! eval_every = 1000
//! n_test = 100000
//! blowup_w_max = 10.0
//! blowup_psi_max = 1000.0
//! seed = 0
//!
//! [monitor]
//! gaps = false
//! probe_size = 256
//!
//! [grid]
//! widths = [100, 1000, 10000]
//! sizes = [100, 1000, 10000]
//!
//! [output]
//! dir = "out"
//! ```

use std::fmt;
use std::path::PathBuf;

use pinn_core::pinn::ModelConfig;
use pinn_core::train::TrainConfig;
use serde::Serialize;
use toml::{Table, Value};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ModelSection {
    pub d: usize,
    pub m: usize,
    pub alpha: f64,
    pub beta: f64,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DataSection {
    pub n: usize,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TrainSection {
    pub eta: Option<f64>,
    pub eta_scale: f64,
    pub iterations: u64,
    pub eval_every: u64,
    pub n_test: usize,
    pub blowup_w_max: f64,
    pub blowup_psi_max: f64,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MonitorSection {
    pub gaps: bool,
    pub probe_size: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Grid {
    pub widths: Vec<usize>,
    pub sizes: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunConfig {
    pub preset: Option<String>,
    pub model: ModelSection,
    pub target: String,
    pub data: DataSection,
    pub train: TrainSection,
    pub monitor: MonitorSection,
    pub grid: Option<Grid>,
    pub output_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            preset: None,
            model: ModelSection {
                d: 3,
                m: 100,
                alpha: 0.0,
                beta: 0.5,
                seed: 0,
            },
            target: "norm2".into(),
            data: DataSection { n: 1000, seed: 0 },
            train: TrainSection {
                eta: None,
                eta_scale: 1.0,
                iterations: 100_000,
                eval_every: 1000,
                n_test: 100_000,
                blowup_w_max: 10.0,
                blowup_psi_max: 1e3,
                seed: 0,
            },
            monitor: MonitorSection {
                gaps: false,
                probe_size: 256,
            },
            grid: None,
            output_dir: PathBuf::from("out"),
        }
    }
}

/// Every problem found in a document.
#[derive(Clone, Debug, PartialEq)]
pub struct ConfigError {
    pub violations: Vec<String>,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{} configuration problem(s):", self.violations.len())?;
        for v in &self.violations {
            writeln!(f, "  - {v}")?;
        }
        Ok(())
    }
}

impl std::error::Error for ConfigError {}

impl RunConfig {
    /// The 3 × 3 width/sample-size grid at `T = 10⁶`.
    pub fn table1() -> Self {
        let mut c = RunConfig {
            preset: Some("table1".into()),
            ..RunConfig::default()
        };
        c.model.d = 3;
        c.model.alpha = 0.0;
        c.model.beta = 0.5;
        c.target = "norm2".into();
        c.train.iterations = 1_000_000;
        c.train.eval_every = 10_000;
        c.train.n_test = 100_000;
        c.grid = Some(Grid {
            widths: vec![100, 1000, 10_000],
            sizes: vec![100, 1000, 10_000],
        });
        c
    }

    pub fn model_config(&self, m: usize) -> ModelConfig {
        ModelConfig {
            d: self.model.d,
            m,
            alpha: self.model.alpha,
            beta: self.model.beta,
            seed: self.model.seed,
        }
    }

    pub fn train_config(&self, m: usize) -> TrainConfig {
        TrainConfig {
            eta: self.train.eta.unwrap_or(self.train.eta_scale / m as f64),
            iterations: self.train.iterations,
            eval_every: self.train.eval_every,
            n_test: self.train.n_test,
            blowup_w_max: self.train.blowup_w_max,
            blowup_psi_max: self.train.blowup_psi_max,
            seed: self.train.seed,
            monitor_gaps: self.monitor.gaps,
            probe_size: self.monitor.probe_size,
        }
    }

    /// Sets every seed to `seed`.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.model.seed = seed;
        self.data.seed = seed;
        self.train.seed = seed;
        self
    }

    /// Desk-scale version: `T`, the evaluation stride and the test-set size
    /// shrink by `scale`, and widths are capped at 1000.
    pub fn scaled(mut self, scale: f64) -> Self {
        assert!(scale > 0.0 && scale.is_finite(), "scale must be positive");
        if scale == 1.0 {
            return self;
        }
        let shrink = |v: u64| ((v as f64 * scale).round() as u64).max(1);
        if self.train.iterations > 0 {
            self.train.iterations = shrink(self.train.iterations);
        }
        self.train.eval_every = shrink(self.train.eval_every).min(self.train.iterations.max(1));
        self.train.n_test = (shrink(self.train.n_test as u64) as usize).max(1000.min(self.train.n_test));
        if scale < 1.0 {
            self.model.m = self.model.m.min(1000);
            if let Some(g) = &mut self.grid {
                for w in &mut g.widths {
                    *w = (*w).min(1000);
                }
            }
        }
        self
    }

    /// Cross-field and module-level checks.
    fn check(&self, errors: &mut Vec<String>) {
        let widths: Vec<usize> = match &self.grid {
            Some(g) => g.widths.clone(),
            None => vec![self.model.m],
        };
        for &m in &widths {
            if let Err(e) = self.model_config(m).validate() {
                errors.push(format!("model: {e}"));
                break;
            }
            if let Err(e) = self.train_config(m).validate() {
                errors.push(format!("train: {e}"));
                break;
            }
        }
        if let Err(e) = pinn_core::problem::make_target(&self.target, &self.model_config(widths[0].max(1))) {
            errors.push(format!("target.spec: {e}"));
        }
    }
}

#[derive(Clone, Copy)]
enum Kind {
    Uint { min: u64 },
    Float { min: f64, exclusive: bool },
    Bool,
    Str,
    UintList,
}

const SCHEMA: &[(&str, &str, Kind)] = &[
    ("model", "d", Kind::Uint { min: 1 }),
    ("model", "m", Kind::Uint { min: 1 }),
    ("model", "alpha", Kind::Float { min: 0.0, exclusive: false }),
    ("model", "beta", Kind::Float { min: 0.0, exclusive: false }),
    ("model", "seed", Kind::Uint { min: 0 }),
    ("target", "spec", Kind::Str),
    ("data", "n", Kind::Uint { min: 1 }),
    ("data", "seed", Kind::Uint { min: 0 }),
    ("train", "eta", Kind::Float { min: 0.0, exclusive: true }),
    ("train", "eta_scale", Kind::Float { min: 0.0, exclusive: true }),
    ("train", "iterations", Kind::Uint { min: 0 }),
    ("train", "eval_every", Kind::Uint { min: 1 }),
    ("train", "n_test", Kind::Uint { min: 1 }),
    ("train", "blowup_w_max", Kind::Float { min: 0.0, exclusive: true }),
    ("train", "blowup_psi_max", Kind::Float { min: 0.0, exclusive: true }),
    ("train", "seed", Kind::Uint { min: 0 }),
    ("monitor", "gaps", Kind::Bool),
    ("monitor", "probe_size", Kind::Uint { min: 1 }),
    ("grid", "widths", Kind::UintList),
    ("grid", "sizes", Kind::UintList),
    ("output", "dir", Kind::Str),
];

#[derive(Clone, Debug)]
enum Parsed {
    Uint(u64),
    Float(f64),
    Bool(bool),
    Str(String),
    List(Vec<u64>),
}

fn as_uint(v: &Value) -> Option<i128> {
    match v {
        Value::Integer(i) => Some(*i as i128),
        Value::Float(f) if f.fract() == 0.0 && f.is_finite() && f.abs() < 1.8e19 => Some(*f as i128),
        _ => None,
    }
}

fn convert(section: &str, key: &str, kind: Kind, v: &Value) -> Result<Parsed, String> {
    let name = format!("{section}.{key}");
    match kind {
        Kind::Uint { min } => {
            let i = as_uint(v).ok_or_else(|| format!("{name}: expected an integer, got {}", v.type_str()))?;
            if i < min as i128 || i > u64::MAX as i128 {
                return Err(format!("{name}: must be an integer >= {min} (got {i})"));
            }
            Ok(Parsed::Uint(i as u64))
        }
        Kind::Float { min, exclusive } => {
            let f = match v {
                Value::Float(f) => *f,
                Value::Integer(i) => *i as f64,
                _ => return Err(format!("{name}: expected a number, got {}", v.type_str())),
            };
            let ok = f.is_finite() && if exclusive { f > min } else { f >= min };
            if !ok {
                let op = if exclusive { ">" } else { ">=" };
                return Err(format!("{name}: must be finite and {op} {min} (got {f})"));
            }
            Ok(Parsed::Float(f))
        }
        Kind::Bool => match v {
            Value::Boolean(b) => Ok(Parsed::Bool(*b)),
            _ => Err(format!("{name}: expected true or false, got {}", v.type_str())),
        },
        Kind::Str => match v {
            Value::String(s) => Ok(Parsed::Str(s.clone())),
            _ => Err(format!("{name}: expected a string, got {}", v.type_str())),
        },
        Kind::UintList => {
            let arr = v
                .as_array()
                .ok_or_else(|| format!("{name}: expected a list of integers, got {}", v.type_str()))?;
            if arr.is_empty() {
                return Err(format!("{name}: list must be nonempty"));
            }
            let mut out = Vec::with_capacity(arr.len());
            for item in arr {
                match as_uint(item) {
                    Some(i) if i >= 1 && i <= u64::MAX as i128 => out.push(i as u64),
                    _ => return Err(format!("{name}: entries must be integers >= 1")),
                }
            }
            Ok(Parsed::List(out))
        }
    }
}

/// Parses and validates a document, reporting every violation.
pub fn parse_config(text: &str) -> Result<RunConfig, ConfigError> {
    let table: Table = text.parse().map_err(|e: toml::de::Error| ConfigError {
        violations: vec![format!("syntax: {}", e.message())],
    })?;
    let mut errors = Vec::new();

    let mut cfg = match table.get("preset") {
        None => RunConfig::default(),
        Some(Value::String(p)) if p == "table1" => RunConfig::table1(),
        Some(Value::String(p)) => {
            errors.push(format!("preset: unknown preset `{p}` (known: table1)"));
            RunConfig::default()
        }
        Some(v) => {
            errors.push(format!("preset: expected a string, got {}", v.type_str()));
            RunConfig::default()
        }
    };

    let mut grid_widths = None;
    let mut grid_sizes = None;
    for (section, value) in &table {
        if section == "preset" {
            continue;
        }
        let Some(body) = value.as_table() else {
            errors.push(format!("{section}: unknown top-level key"));
            continue;
        };
        if !SCHEMA.iter().any(|(s, _, _)| s == section) {
            errors.push(format!("[{section}]: unknown section"));
            continue;
        }
        for (key, v) in body {
            let Some(&(_, _, kind)) = SCHEMA.iter().find(|(s, k, _)| s == section && k == key) else {
                errors.push(format!("{section}.{key}: unknown key"));
                continue;
            };
            let parsed = match convert(section, key, kind, v) {
                Ok(p) => p,
                Err(e) => {
                    errors.push(e);
                    continue;
                }
            };
            match (section.as_str(), key.as_str(), parsed) {
                ("model", "d", Parsed::Uint(u)) => cfg.model.d = u as usize,
                ("model", "m", Parsed::Uint(u)) => cfg.model.m = u as usize,
                ("model", "alpha", Parsed::Float(f)) => cfg.model.alpha = f,
                ("model", "beta", Parsed::Float(f)) => cfg.model.beta = f,
                ("model", "seed", Parsed::Uint(u)) => cfg.model.seed = u,
                ("target", "spec", Parsed::Str(s)) => cfg.target = s,
                ("data", "n", Parsed::Uint(u)) => cfg.data.n = u as usize,
                ("data", "seed", Parsed::Uint(u)) => cfg.data.seed = u,
                ("train", "eta", Parsed::Float(f)) => cfg.train.eta = Some(f),
                ("train", "eta_scale", Parsed::Float(f)) => cfg.train.eta_scale = f,
                ("train", "iterations", Parsed::Uint(u)) => cfg.train.iterations = u,
                ("train", "eval_every", Parsed::Uint(u)) => cfg.train.eval_every = u,
                ("train", "n_test", Parsed::Uint(u)) => cfg.train.n_test = u as usize,
                ("train", "blowup_w_max", Parsed::Float(f)) => cfg.train.blowup_w_max = f,
                ("train", "blowup_psi_max", Parsed::Float(f)) => cfg.train.blowup_psi_max = f,
                ("train", "seed", Parsed::Uint(u)) => cfg.train.seed = u,
                ("monitor", "gaps", Parsed::Bool(b)) => cfg.monitor.gaps = b,
                ("monitor", "probe_size", Parsed::Uint(u)) => cfg.monitor.probe_size = u as usize,
                ("grid", "widths", Parsed::List(l)) => grid_widths = Some(l),
                ("grid", "sizes", Parsed::List(l)) => grid_sizes = Some(l),
                ("output", "dir", Parsed::Str(s)) => cfg.output_dir = PathBuf::from(s),
                (s, k, p) => unreachable!("schema mismatch for {s}.{k}: {p:?}"),
            }
        }
    }

    if grid_widths.is_some() || grid_sizes.is_some() {
        let base = cfg.grid.clone();
        let widths = grid_widths.or_else(|| base.as_ref().map(|g| g.widths.iter().map(|&w| w as u64).collect()));
        let sizes = grid_sizes.or_else(|| base.as_ref().map(|g| g.sizes.iter().map(|&n| n as u64).collect()));
        match (widths, sizes) {
            (Some(w), Some(n)) => {
                cfg.grid = Some(Grid {
                    widths: w.into_iter().map(|v| v as usize).collect(),
                    sizes: n.into_iter().map(|v| v as usize).collect(),
                })
            }
            _ => errors.push("grid: widths and sizes must both be given".into()),
        }
    }

    if errors.is_empty() {
        cfg.check(&mut errors);
    }
    if errors.is_empty() {
        Ok(cfg)
    } else {
        Err(ConfigError { violations: errors })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_gives_defaults() {
        assert_eq!(parse_config("").unwrap(), RunConfig::default());
    }

    #[test]
    fn minimal_document() {
        let c = parse_config("[model]\nm = 50\n[train]\niterations = 1e4\n").unwrap();
        assert_eq!(c.model.m, 50);
        assert_eq!(c.train.iterations, 10_000);
        assert_eq!(c.train_config(50).eta, 1.0 / 50.0);
        assert_eq!(c.data, RunConfig::default().data);
    }

    #[test]
    fn negative_width_names_key() {
        let e = parse_config("[model]\nm = -5\n").unwrap_err();
        assert_eq!(e.violations.len(), 1);
        assert!(e.violations[0].starts_with("model.m:"), "{e}");
    }

    #[test]
    fn collects_every_violation() {
        let doc = "[model]\nm = 0\nalpha = \"x\"\nwidth = 3\n[train]\neta = -1\n[bogus]\nk = 1\n";
        let e = parse_config(doc).unwrap_err();
        assert_eq!(e.violations.len(), 5, "{e}");
        for key in ["model.m", "model.alpha", "model.width", "train.eta", "[bogus]"] {
            assert!(e.violations.iter().any(|v| v.starts_with(key)), "missing {key}: {e}");
        }
    }

    #[test]
    fn cross_field_checks() {
        let e = parse_config("[train]\niterations = 10\neval_every = 100\n").unwrap_err();
        assert!(e.violations[0].contains("eval_every"), "{e}");
        let e = parse_config("[target]\nspec = \"x9\"\n").unwrap_err();
        assert!(e.violations[0].starts_with("target.spec"), "{e}");
    }

    #[test]
    fn table1_preset_expands() {
        let c = parse_config("preset = \"table1\"\n").unwrap();
        let g = c.grid.as_ref().unwrap();
        assert_eq!(g.widths, vec![100, 1000, 10_000]);
        assert_eq!(g.sizes, vec![100, 1000, 10_000]);
        assert_eq!((c.model.d, c.model.alpha, c.model.beta), (3, 0.0, 0.5));
        assert_eq!(c.train.iterations, 1_000_000);
        assert_eq!(c.target, "norm2");
        let o = parse_config("preset = \"table1\"\n[train]\niterations = 500\neval_every = 50\n").unwrap();
        assert_eq!(o.train.iterations, 500);
        assert!(o.grid.is_some());
        assert!(parse_config("preset = \"nope\"\n").is_err());
    }

    #[test]
    fn scaling_shrinks_and_caps() {
        let c = RunConfig::table1().scaled(0.1);
        assert_eq!(c.train.iterations, 100_000);
        assert_eq!(c.train.eval_every, 1000);
        assert_eq!(c.train.n_test, 10_000);
        assert_eq!(c.grid.unwrap().widths, vec![100, 1000, 1000]);
    }

    #[test]
    fn syntax_errors_reported() {
        let e = parse_config("[model\nm = 3").unwrap_err();
        assert!(e.violations[0].starts_with("syntax"));
    }
}
