//! Right-hand sides `f`, the `f(0) ≠ 0` shift, datasets and losses.

use std::fmt;
use std::io::{BufRead, Write};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::math::{dot, norm2, norm2_sq, par_mean_by, sample_unit_ball, PointSet, RngStream};
use crate::pinn::{eval_zeta, psi_at, BasisParam, ModelConfig, ModelParams};

/// `coef · Π x_k^{e_k}` (`exponents[k]` for coordinate `k`).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Monomial {
    pub coef: f64,
    pub exponents: Vec<u32>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Polynomial {
    pub dim: usize,
    pub terms: Vec<Monomial>,
}

impl Polynomial {
    pub fn squared_norm(dim: usize) -> Self {
        let terms = (0..dim)
            .map(|k| {
                let mut e = vec![0; dim];
                e[k] = 2;
                Monomial {
                    coef: 1.0,
                    exponents: e,
                }
            })
            .collect();
        Polynomial { dim, terms }
    }

    pub fn constant(dim: usize, c: f64) -> Self {
        Polynomial {
            dim,
            terms: vec![Monomial {
                coef: c,
                exponents: vec![0; dim],
            }],
        }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        let mut acc = 0.0;
        for t in &self.terms {
            let mut v = t.coef;
            for (xk, &e) in x.iter().zip(&t.exponents) {
                if e > 0 {
                    v *= xk.powi(e as i32);
                }
            }
            acc += v;
        }
        acc
    }

    /// Parses sums of products such as `x1^2 + x2^2 - 0.5*x1*x3 + 2`.
    /// Coordinates are 1-based; `norm2` is shorthand for `Σ x_k²`.
    pub fn parse(text: &str, dim: usize) -> Result<Self> {
        let text = text.trim();
        if text == "norm2" {
            return Ok(Polynomial::squared_norm(dim));
        }
        if text.is_empty() {
            return Err(Error::TargetSpec("empty polynomial".into()));
        }
        // Split into signed terms, keeping exponent signs (e.g. 1e-3) intact.
        let mut terms = Vec::new();
        let mut current = String::new();
        let mut sign = 1.0;
        let chars: Vec<char> = text.chars().filter(|c| !c.is_whitespace()).collect();
        for (idx, &c) in chars.iter().enumerate() {
            let is_exp_sign = idx > 0 && matches!(chars[idx - 1], 'e' | 'E') && {
                // Only a float exponent if the 'e' follows a digit or '.'.
                idx >= 2 && (chars[idx - 2].is_ascii_digit() || chars[idx - 2] == '.')
            };
            if (c == '+' || c == '-') && !is_exp_sign {
                if !current.is_empty() {
                    terms.push(parse_monomial(&current, sign, dim)?);
                    current.clear();
                } else if idx > 0 {
                    return Err(Error::TargetSpec(format!("dangling operator in `{text}`")));
                }
                sign = if c == '-' { -1.0 } else { 1.0 };
            } else {
                current.push(c);
            }
        }
        if current.is_empty() {
            return Err(Error::TargetSpec(format!("trailing operator in `{text}`")));
        }
        terms.push(parse_monomial(&current, sign, dim)?);
        Ok(Polynomial { dim, terms })
    }
}

fn parse_monomial(text: &str, sign: f64, dim: usize) -> Result<Monomial> {
    let mut coef = sign;
    let mut exponents = vec![0u32; dim];
    for factor in text.split('*') {
        if factor.is_empty() {
            return Err(Error::TargetSpec(format!("empty factor in `{text}`")));
        }
        if let Some(var) = factor.strip_prefix('x') {
            let (idx, pow) = match var.split_once('^') {
                Some((i, p)) => (i, p),
                None => (var, "1"),
            };
            let k: usize = idx
                .parse()
                .map_err(|_| Error::TargetSpec(format!("bad variable `{factor}`")))?;
            if k == 0 || k > dim {
                return Err(Error::TargetSpec(format!(
                    "variable `{factor}` out of range for d={dim}"
                )));
            }
            let p: u32 = pow
                .parse()
                .map_err(|_| Error::TargetSpec(format!("bad exponent in `{factor}`")))?;
            exponents[k - 1] += p;
        } else {
            let v: f64 = factor
                .parse()
                .map_err(|_| Error::TargetSpec(format!("bad number `{factor}`")))?;
            if !v.is_finite() {
                return Err(Error::TargetSpec(format!("non-finite number `{factor}`")));
            }
            coef *= v;
        }
    }
    Ok(Monomial { coef, exponents })
}

/// Closed-form coefficient fields `α(θ)` over `Λ`.
///
/// Each field is `c · h(θ) / |Λ|` with `|h| ≤ 1`, so `|Λ| max ‖α‖₂ = ‖c‖₂`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum CoefficientField {
    Zero,
    /// `h = 1`. Integrates to `f ≡ 0` since ζ is odd in `a⁽⁰⁾`.
    Constant(Vec<f64>),
    /// `h = a⁽⁰⁾ / m^{-α}`.
    OutputAligned(Vec<f64>),
    /// `h = sign(b⁽⁰⁾) a⁽⁰⁾ / m^{-α}`; no closed form for `f`.
    BiasSigned(Vec<f64>),
}

impl CoefficientField {
    fn direction(&self) -> Option<&[f64]> {
        match self {
            CoefficientField::Zero => None,
            CoefficientField::Constant(c)
            | CoefficientField::OutputAligned(c)
            | CoefficientField::BiasSigned(c) => Some(c),
        }
    }
}

/// A target `f(x) = ∫_Λ α(θ)ᵀ ζ(x; θ) dθ` given by its coefficient field.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RepresentedTarget {
    pub field: CoefficientField,
    /// Fixes `d` and the box `Λ` through `(m, α, β)`.
    pub cfg: ModelConfig,
    pub oracle_draws: usize,
    pub oracle_seed: u64,
}

pub const DEFAULT_ORACLE_DRAWS: usize = 10_000_000;

impl RepresentedTarget {
    pub fn new(field: CoefficientField, cfg: ModelConfig) -> Result<Self> {
        if let Some(c) = field.direction() {
            if c.len() != cfg.d {
                return Err(invalid("field", format!("coefficient needs {} entries", cfg.d)));
            }
            if c.iter().any(|v| !v.is_finite()) {
                return Err(invalid("field", "coefficient must be finite"));
            }
        }
        Ok(RepresentedTarget {
            field,
            cfg,
            oracle_draws: DEFAULT_ORACLE_DRAWS,
            oracle_seed: 0,
        })
    }

    /// The same field on the box `Λ` of a different width.
    pub fn at_width(&self, m: usize) -> Self {
        let mut t = self.clone();
        t.cfg.m = m;
        t
    }

    /// `α(θ)`.
    pub fn alpha(&self, theta: &BasisParam) -> Vec<f64> {
        let vol = self.cfg.lambda_volume();
        let h = self.field_weight(theta);
        match self.field.direction() {
            None => vec![0.0; self.cfg.d],
            Some(c) => c.iter().map(|ck| ck * h / vol).collect(),
        }
    }

    /// `|Λ| · α(θ)`, i.e. `c · h(θ)`.
    pub fn density_scaled_alpha(&self, theta: &BasisParam) -> Vec<f64> {
        let h = self.field_weight(theta);
        match self.field.direction() {
            None => vec![0.0; self.cfg.d],
            Some(c) => c.iter().map(|ck| ck * h).collect(),
        }
    }

    fn field_weight(&self, theta: &BasisParam) -> f64 {
        let sa = self.cfg.output_scale();
        match self.field {
            CoefficientField::Zero => 0.0,
            CoefficientField::Constant(_) => 1.0,
            CoefficientField::OutputAligned(_) => theta.a0 / sa,
            CoefficientField::BiasSigned(_) => {
                let s = if theta.b0 >= 0.0 { 1.0 } else { -1.0 };
                s * theta.a0 / sa
            }
        }
    }

    /// `|Λ| max_θ ‖α(θ)‖₂`, an upper bound on the class norm of `f`.
    pub fn f_norm_upper(&self) -> f64 {
        self.field.direction().map_or(0.0, norm2)
    }

    /// Closed-form value, when the field admits one.
    ///
    /// For fields that depend on `θ` only through `a⁽⁰⁾`, flipping
    /// `(w, b) → (-w, -b)` leaves the bracket of ζ unchanged and swaps the
    /// indicator, so the `(w, b)` average of `bracket·𝕀` is half the plain
    /// polynomial moment `(r²/3)((8d+12)‖x‖² - 4d)`, `r = m^{-β}`.
    pub fn eval_exact(&self, x: &[f64]) -> Option<f64> {
        match &self.field {
            CoefficientField::Zero | CoefficientField::Constant(_) => Some(0.0),
            CoefficientField::OutputAligned(c) => {
                let d = self.cfg.d as f64;
                let scale = self.cfg.output_scale() * self.cfg.hidden_scale().powi(2) / 18.0;
                Some(scale * dot(c, x) * ((8.0 * d + 12.0) * norm2_sq(x) - 4.0 * d))
            }
            CoefficientField::BiasSigned(_) => None,
        }
    }

    /// Monte-Carlo estimate of `f(x)` with `draws` uniform samples of `θ`;
    /// returns `(mean, standard error)`. Deterministic for a given `seed`.
    pub fn eval_monte_carlo(&self, x: &[f64], draws: usize, seed: u64) -> (f64, f64) {
        const CHUNKS: usize = 64;
        let base = RngStream::new(seed, "oracle");
        let per = draws.div_ceil(CHUNKS);
        use rayon::prelude::*;
        let partial: Vec<(f64, f64, usize)> = (0..CHUNKS)
            .into_par_iter()
            .map(|k| {
                let n = per.min(draws.saturating_sub(k * per));
                let mut r = base.child(k);
                let (mut s, mut s2) = (0.0, 0.0);
                for _ in 0..n {
                    let theta = BasisParam::sample(&self.cfg, &mut r);
                    let v = dot(&self.density_scaled_alpha(&theta), &eval_zeta(&theta, x));
                    s += v;
                    s2 += v * v;
                }
                (s, s2, n)
            })
            .collect();
        let (s, s2, n) = partial
            .iter()
            .fold((0.0, 0.0, 0usize), |acc, p| (acc.0 + p.0, acc.1 + p.1, acc.2 + p.2));
        let n = n as f64;
        let mean = s / n;
        let var = (s2 / n - mean * mean).max(0.0);
        (mean, (var / n).sqrt())
    }

    /// Ground-truth value: closed form when available, otherwise the
    /// Monte-Carlo oracle at the configured draw count and seed.
    pub fn eval(&self, x: &[f64]) -> f64 {
        self.eval_exact(x)
            .unwrap_or_else(|| self.eval_monte_carlo(x, self.oracle_draws, self.oracle_seed).0)
    }
}

type CustomFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

#[derive(Clone)]
pub enum TargetKind {
    Polynomial(Polynomial),
    Represented(Box<RepresentedTarget>),
    Custom { name: String, fun: CustomFn },
    /// `base(x) + base(0)·((2 + 4/d)‖x‖² - 1)`.
    Shifted { base: Box<TargetFunction>, shift: f64 },
}

/// The right-hand side `f` of `Δu = f`.
#[derive(Clone)]
pub struct TargetFunction {
    kind: TargetKind,
    dim: usize,
    value_at_zero: f64,
}

impl fmt::Debug for TargetFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TargetFunction")
            .field("kind", &self.describe())
            .field("dim", &self.dim)
            .field("value_at_zero", &self.value_at_zero)
            .finish()
    }
}

impl TargetFunction {
    fn from_kind(kind: TargetKind, dim: usize) -> Self {
        let mut t = TargetFunction {
            kind,
            dim,
            value_at_zero: 0.0,
        };
        t.value_at_zero = t.eval(&vec![0.0; dim]);
        t
    }

    pub fn polynomial(p: Polynomial) -> Self {
        let dim = p.dim;
        Self::from_kind(TargetKind::Polynomial(p), dim)
    }

    pub fn squared_norm(dim: usize) -> Self {
        Self::polynomial(Polynomial::squared_norm(dim))
    }

    pub fn represented(t: RepresentedTarget) -> Self {
        let dim = t.cfg.d;
        Self::from_kind(TargetKind::Represented(Box::new(t)), dim)
    }

    pub fn custom<F>(name: &str, dim: usize, fun: F) -> Self
    where
        F: Fn(&[f64]) -> f64 + Send + Sync + 'static,
    {
        Self::from_kind(
            TargetKind::Custom {
                name: name.to_owned(),
                fun: Arc::new(fun),
            },
            dim,
        )
    }

    pub fn kind(&self) -> &TargetKind {
        &self.kind
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn value_at_zero(&self) -> f64 {
        self.value_at_zero
    }

    pub fn vanishes_at_zero(&self) -> bool {
        self.value_at_zero == 0.0
    }

    pub fn as_represented(&self) -> Option<&RepresentedTarget> {
        match &self.kind {
            TargetKind::Represented(t) => Some(t),
            _ => None,
        }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        match &self.kind {
            TargetKind::Polynomial(p) => p.eval(x),
            TargetKind::Represented(t) => t.eval(x),
            TargetKind::Custom { fun, .. } => fun(x),
            TargetKind::Shifted { base, shift } => {
                let d = x.len() as f64;
                base.eval(x) + shift * ((2.0 + 4.0 / d) * norm2_sq(x) - 1.0)
            }
        }
    }

    pub fn describe(&self) -> String {
        match &self.kind {
            TargetKind::Polynomial(p) => format!("polynomial({} terms)", p.terms.len()),
            TargetKind::Represented(t) => format!("represented({:?})", t.field),
            TargetKind::Custom { name, .. } => format!("custom({name})"),
            TargetKind::Shifted { base, shift } => format!("shifted({}, {shift})", base.describe()),
        }
    }
}

/// Builds a target from a text spec:
///
/// * a polynomial such as `x1^2 + x2^2 + x3^2` (or `norm2`);
/// * `represented:<zero|constant|aligned|bias_signed>:c1,c2,...`, a
///   coefficient field over the box `Λ` of `cfg`.
pub fn make_target(spec: &str, cfg: &ModelConfig) -> Result<TargetFunction> {
    let spec = spec.trim();
    if let Some(rest) = spec.strip_prefix("represented:") {
        let (kind, coefs) = rest.split_once(':').unwrap_or((rest, ""));
        let c: Vec<f64> = if coefs.trim().is_empty() {
            Vec::new()
        } else {
            coefs
                .split(',')
                .map(|v| {
                    v.trim()
                        .parse::<f64>()
                        .map_err(|_| Error::TargetSpec(format!("bad coefficient `{v}`")))
                })
                .collect::<Result<_>>()?
        };
        let field = match kind.trim() {
            "zero" => CoefficientField::Zero,
            "constant" => CoefficientField::Constant(c),
            "aligned" => CoefficientField::OutputAligned(c),
            "bias_signed" => CoefficientField::BiasSigned(c),
            other => return Err(Error::TargetSpec(format!("unknown field `{other}`"))),
        };
        let t = RepresentedTarget::new(field, cfg.clone())
            .map_err(|e| Error::TargetSpec(e.to_string()))?;
        return Ok(TargetFunction::represented(t));
    }
    Ok(TargetFunction::polynomial(Polynomial::parse(spec, cfg.d)?))
}

/// The corrector `(f(0) / 2d) ‖x‖² (‖x‖² - 1)` with `u = v - corrector`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Corrector {
    pub f0: f64,
    pub d: usize,
}

impl Corrector {
    pub fn eval(&self, x: &[f64]) -> f64 {
        let r2 = norm2_sq(x);
        self.f0 / (2.0 * self.d as f64) * r2 * (r2 - 1.0)
    }
}

/// Moves a nonzero `f(0)` into a polynomial correction so the new
/// right-hand side vanishes at the origin: solve `Δv = f̃`, then
/// `u = v - corrector`.
pub fn shift_rhs(f: &TargetFunction, d: usize) -> (TargetFunction, Corrector) {
    assert!(d >= 1);
    let f0 = f.value_at_zero();
    let corrector = Corrector { f0, d };
    if f0 == 0.0 {
        return (f.clone(), corrector);
    }
    let shifted = TargetFunction::from_kind(
        TargetKind::Shifted {
            base: Box::new(f.clone()),
            shift: f0,
        },
        f.dim(),
    );
    (shifted, corrector)
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub points: PointSet,
    pub labels: Vec<f64>,
    pub seed: u64,
    pub stream: String,
}

impl Dataset {
    pub fn new(points: PointSet, labels: Vec<f64>) -> Result<Self> {
        if points.len() != labels.len() {
            return Err(invalid("labels", "one label per point required"));
        }
        if points.is_empty() {
            return Err(invalid("points", "dataset must be nonempty"));
        }
        if points.iter().any(|p| norm2(p) > 1.0) {
            return Err(invalid("points", "all points must lie in the unit ball"));
        }
        if labels.iter().any(|v| !v.is_finite()) {
            return Err(invalid("labels", "labels must be finite"));
        }
        Ok(Dataset {
            points,
            labels,
            seed: 0,
            stream: String::new(),
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.points.dim()
    }

    pub fn sample(&self, n: usize) -> (&[f64], f64) {
        (self.points.point(n), self.labels[n])
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "# pinn dataset v1 seed={} stream={}", self.seed, self.stream)?;
        let header: Vec<String> = (1..=self.dim()).map(|k| format!("x_{k}")).collect();
        writeln!(out, "{},label", header.join(","))?;
        for (p, y) in self.points.iter().zip(&self.labels) {
            for v in p {
                write!(out, "{v:.16e},")?;
            }
            writeln!(out, "{y:.16e}")?;
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(input: R) -> Result<Self> {
        let mut dim = None;
        let mut data = Vec::new();
        let mut labels = Vec::new();
        let mut seed = 0;
        let mut stream = String::new();
        for (lineno, line) in input.lines().enumerate() {
            let line = line?;
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(comment) = line.strip_prefix('#') {
                for tok in comment.split_whitespace() {
                    if let Some(s) = tok.strip_prefix("seed=") {
                        seed = s.parse().unwrap_or(0);
                    } else if let Some(s) = tok.strip_prefix("stream=") {
                        stream = s.to_owned();
                    }
                }
                continue;
            }
            if dim.is_none() {
                let cols: Vec<&str> = line.split(',').collect();
                if cols.last() != Some(&"label") || cols.len() < 2 {
                    return Err(Error::Csv(format!("bad header `{line}`")));
                }
                dim = Some(cols.len() - 1);
                continue;
            }
            let d = dim.unwrap_or_default();
            let vals: Vec<f64> = line
                .split(',')
                .map(|v| v.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::Csv(format!("line {}: {e}", lineno + 1)))?;
            if vals.len() != d + 1 {
                return Err(Error::Csv(format!(
                    "line {}: expected {} columns, got {}",
                    lineno + 1,
                    d + 1,
                    vals.len()
                )));
            }
            data.extend_from_slice(&vals[..d]);
            labels.push(vals[d]);
        }
        let d = dim.ok_or_else(|| Error::Csv("missing header".into()))?;
        let mut ds = Dataset::new(PointSet::new(d, data), labels)?;
        ds.seed = seed;
        ds.stream = stream;
        Ok(ds)
    }
}

/// `n` uniform points in the ball labelled by `f`.
pub fn build_dataset(f: &TargetFunction, n: usize, d: usize, rng: &mut RngStream) -> Result<Dataset> {
    if n == 0 {
        return Err(invalid("n", "dataset must be nonempty"));
    }
    if f.dim() != d {
        return Err(invalid("d", format!("target has dimension {}", f.dim())));
    }
    let points = sample_unit_ball(rng, d, n);
    let labels = label_points(f, &points);
    let mut ds = Dataset::new(points, labels)?;
    ds.seed = rng.seed();
    ds.stream = rng.label().to_owned();
    Ok(ds)
}

fn label_points(f: &TargetFunction, points: &PointSet) -> Vec<f64> {
    use rayon::prelude::*;
    (0..points.len())
        .into_par_iter()
        .map(|n| f.eval(points.point(n)))
        .collect()
}

/// `(1/N) Σ |ψ(x_n) - y_n|²` with a fixed reduction order.
pub fn empirical_loss(p: &ModelParams, data: &Dataset) -> Result<f64> {
    let v = par_mean_by(data.len(), |n| {
        let (x, y) = data.sample(n);
        let r = psi_at(p, &p.w, x) - y;
        r * r
    });
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::NonFinite(format!("empirical loss = {v}")))
    }
}

/// Mean squared residual and its Monte-Carlo standard error.
pub fn loss_with_stderr(p: &ModelParams, data: &Dataset) -> Result<(f64, f64)> {
    let mean = empirical_loss(p, data)?;
    let second = par_mean_by(data.len(), |n| {
        let (x, y) = data.sample(n);
        let r = psi_at(p, &p.w, x) - y;
        r * r * r * r
    });
    let var = (second - mean * mean).max(0.0);
    Ok((mean, (var / data.len() as f64).sqrt()))
}

/// Monte-Carlo estimate of `E_x |ψ(x) - f(x)|²` on a test set drawn from
/// `rng`. Long-running callers should build the test set once with
/// [`build_dataset`] and reuse it through [`empirical_loss`].
pub fn expected_loss(
    p: &ModelParams,
    f: &TargetFunction,
    n_test: usize,
    rng: &mut RngStream,
) -> Result<f64> {
    let test = build_dataset(f, n_test, p.dim(), rng)?;
    empirical_loss(p, &test)
}
