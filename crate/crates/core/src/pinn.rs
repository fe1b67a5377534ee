//! The two-layer ReLU³ PINN for `Δu = f` on the unit ball.
//!
//! The network is `φ(x) = (‖x‖² - 1) Σ_i a_i σ(w_iᵀx + b_i)` with
//! `σ(t) = max(0, t)³`, and the trained quantity is its Laplacian
//! `ψ = Δφ`, evaluated in closed form:
//!
//! ```text
//! ψ(x) = Σ_i a_i 𝕀[s_i ≥ 0] ( 2d s_i³ + 12 s_i² (w_iᵀx) + 6 s_i ‖w_i‖² (‖x‖² - 1) )
//! ```
//!
//! with `s_i = w_iᵀx + b_i`. Only the hidden weights `W` are trained; `a`,
//! `b` and the initial weights `W0` are frozen at initialization.
//!
//! All per-neuron contributions (ψ, the pseudo networks `g` and `g⁽ᵇ⁾`, the
//! random basis ζ) go through [`neuron_term`], so `g(·; W0)` and `ψ(·; W0)`
//! agree to the last bit.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::math::{dot, norm2_sq, RngStream, WeightMatrix};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub d: usize,
    pub m: usize,
    pub alpha: f64,
    pub beta: f64,
    pub seed: u64,
}

impl ModelConfig {
    pub fn new(d: usize, m: usize, alpha: f64, beta: f64, seed: u64) -> Result<Self> {
        let cfg = ModelConfig {
            d,
            m,
            alpha,
            beta,
            seed,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.d == 0 {
            return Err(invalid("d", "must be at least 1"));
        }
        if self.m == 0 {
            return Err(invalid("m", "must be at least 1"));
        }
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return Err(invalid("alpha", "must be finite and >= 0"));
        }
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return Err(invalid("beta", "must be finite and >= 0"));
        }
        let (sa, sb) = (self.output_scale(), self.hidden_scale());
        if !(sa > 0.0 && sa.is_finite() && sb > 0.0 && sb.is_finite()) {
            return Err(invalid("alpha/beta", "initialization scales underflow"));
        }
        Ok(())
    }

    /// `m^{-α}`, the half-width of the output-weight initialization.
    pub fn output_scale(&self) -> f64 {
        (self.m as f64).powf(-self.alpha)
    }

    /// `m^{-β}`, the half-width for hidden weights and biases.
    pub fn hidden_scale(&self) -> f64 {
        (self.m as f64).powf(-self.beta)
    }

    /// Whether `α + 3β > 1`, the hypothesis the width and iteration
    /// thresholds rely on.
    pub fn satisfies_width_hypothesis(&self) -> bool {
        self.alpha + 3.0 * self.beta > 1.0
    }

    /// Volume of the parameter box `Λ`.
    pub fn lambda_volume(&self) -> f64 {
        2.0 * self.output_scale() * (2.0 * self.hidden_scale()).powi(self.d as i32 + 1)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    a: Vec<f64>,
    b: Vec<f64>,
    w0: WeightMatrix,
    /// Current hidden weights, the only trainable part.
    pub w: WeightMatrix,
}

/// One draw `θ = (a⁽⁰⁾, w⁽⁰⁾, b⁽⁰⁾)` from the initialization box `Λ`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BasisParam {
    pub a0: f64,
    pub w0: Vec<f64>,
    pub b0: f64,
}

impl BasisParam {
    pub fn sample(cfg: &ModelConfig, rng: &mut RngStream) -> Self {
        let (sa, sb) = (cfg.output_scale(), cfg.hidden_scale());
        let a0 = rng.symmetric(sa);
        let w0 = (0..cfg.d).map(|_| rng.symmetric(sb)).collect();
        let b0 = rng.symmetric(sb);
        BasisParam { a0, w0, b0 }
    }

    pub fn in_lambda(&self, cfg: &ModelConfig) -> bool {
        let (sa, sb) = (cfg.output_scale(), cfg.hidden_scale());
        self.a0.abs() <= sa && self.b0.abs() <= sb && self.w0.iter().all(|v| v.abs() <= sb)
    }
}

/// Draws `a_i ~ U(-m^{-α}, m^{-α})`, then every `W0` entry and `b_i` from
/// `U(-m^{-β}, m^{-β})`, neuron by neuron; `W` starts equal to `W0`.
pub fn init_params(cfg: &ModelConfig, rng: &mut RngStream) -> ModelParams {
    let mut a = Vec::with_capacity(cfg.m);
    let mut b = Vec::with_capacity(cfg.m);
    let mut w0 = WeightMatrix::zeros(cfg.m, cfg.d);
    for i in 0..cfg.m {
        let theta = BasisParam::sample(cfg, rng);
        a.push(theta.a0);
        b.push(theta.b0);
        w0.row_mut(i).copy_from_slice(&theta.w0);
    }
    ModelParams::new(a, b, w0)
}

impl ModelParams {
    /// Parameters with `W = W0`.
    pub fn new(a: Vec<f64>, b: Vec<f64>, w0: WeightMatrix) -> Self {
        assert_eq!(a.len(), w0.rows(), "a has wrong length");
        assert_eq!(b.len(), w0.rows(), "b has wrong length");
        let w = w0.clone();
        ModelParams { a, b, w0, w }
    }

    pub fn with_weights(mut self, w: WeightMatrix) -> Self {
        assert_eq!((w.rows(), w.cols()), (self.w0.rows(), self.w0.cols()));
        self.w = w;
        self
    }

    pub fn width(&self) -> usize {
        self.a.len()
    }

    pub fn dim(&self) -> usize {
        self.w0.cols()
    }

    pub fn a(&self) -> &[f64] {
        &self.a
    }

    pub fn b(&self) -> &[f64] {
        &self.b
    }

    pub fn w0(&self) -> &WeightMatrix {
        &self.w0
    }

    /// `W - W0`.
    pub fn displacement(&self) -> WeightMatrix {
        self.w.sub(&self.w0)
    }

    /// `max_i ‖w_i - w_i⁽⁰⁾‖₂`.
    pub fn max_drift(&self) -> f64 {
        (0..self.width())
            .map(|i| {
                let mut s = 0.0;
                for (x, y) in self.w.row(i).iter().zip(self.w0.row(i)) {
                    s += (x - y) * (x - y);
                }
                s.sqrt()
            })
            .fold(0.0, f64::max)
    }

    /// `θ_i = (a_i, w_i⁽⁰⁾, b_i)`.
    pub fn theta(&self, i: usize) -> BasisParam {
        BasisParam {
            a0: self.a[i],
            w0: self.w0.row(i).to_vec(),
            b0: self.b[i],
        }
    }

    /// Support of the initialization: `|a_i| ≤ m^{-α}`, `|b_i|, |W0_ij| ≤ m^{-β}`.
    pub fn within_init_support(&self, cfg: &ModelConfig) -> bool {
        let (sa, sb) = (cfg.output_scale(), cfg.hidden_scale());
        self.a.iter().all(|v| v.abs() <= sa)
            && self.b.iter().all(|v| v.abs() <= sb)
            && self.w0.max_abs() <= sb
    }
}

/// Shared per-neuron kernel:
/// `2d·lin·s0² + 12·lin·z0·s0 + 6·lin·ww0·r2`.
///
/// ψ passes `(s, z, s, ‖w‖², ‖x‖²-1)`; the pseudo networks pass their
/// linear factor as `lin` with `W0` quantities for the rest.
#[inline]
fn neuron_term(two_d: f64, lin: f64, z0: f64, s0: f64, ww0: f64, r2: f64) -> f64 {
    two_d * (lin * (s0 * s0)) + 12.0 * (lin * (z0 * s0)) + 6.0 * (lin * (ww0 * r2))
}

#[inline]
fn boundary_factor(x: &[f64]) -> f64 {
    norm2_sq(x) - 1.0
}

#[inline]
fn relu3(t: f64) -> f64 {
    if t > 0.0 {
        t * t * t
    } else {
        0.0
    }
}

/// `φ(x) = (‖x‖² - 1) Σ_i a_i σ(w_iᵀx + b_i)` at the current weights.
pub fn eval_phi(p: &ModelParams, x: &[f64]) -> f64 {
    eval_phi_with(p, &p.w, x)
}

/// [`eval_phi`] at explicit hidden weights `w`.
pub fn eval_phi_with(p: &ModelParams, w: &WeightMatrix, x: &[f64]) -> f64 {
    let r2 = boundary_factor(x);
    let mut inner = 0.0;
    for i in 0..p.width() {
        inner += p.a[i] * relu3(dot(w.row(i), x) + p.b[i]);
    }
    r2 * inner
}

/// ψ at the current weights; errors when the value is not finite.
pub fn eval_psi(p: &ModelParams, x: &[f64]) -> Result<f64> {
    let v = psi_at(p, &p.w, x);
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::NonFinite(format!("psi = {v}")))
    }
}

/// ψ at explicit hidden weights, without the finiteness check.
pub fn psi_at(p: &ModelParams, w: &WeightMatrix, x: &[f64]) -> f64 {
    let two_d = 2.0 * x.len() as f64;
    let r2 = boundary_factor(x);
    let mut acc = 0.0;
    for i in 0..p.width() {
        let wi = w.row(i);
        let z = dot(wi, x);
        let s = z + p.b[i];
        if s >= 0.0 {
            acc += p.a[i] * neuron_term(two_d, s, z, s, norm2_sq(wi), r2);
        }
    }
    acc
}

/// One neuron's contribution `a·𝕀[s ≥ 0](…)` to ψ at hidden weight `w`,
/// with `scale` times its `w`-gradient added to `grad`.
pub(crate) fn neuron_psi_grad(a: f64, b: f64, w: &[f64], x: &[f64], scale: f64, grad: &mut [f64]) -> f64 {
    let z = dot(w, x);
    let s = z + b;
    if s < 0.0 {
        return 0.0;
    }
    let d = x.len() as f64;
    let r2 = boundary_factor(x);
    let ww = norm2_sq(w);
    let cx = scale * a * (6.0 * d * s * s + 24.0 * s * z + 12.0 * s * s + 6.0 * ww * r2);
    let cw = scale * a * 12.0 * s * r2;
    for j in 0..grad.len() {
        grad[j] += cx * x[j] + cw * w[j];
    }
    a * neuron_term(2.0 * d, s, z, s, ww, r2)
}

/// The random basis ζ(x; θ), a `d`-vector.
pub fn eval_zeta(theta: &BasisParam, x: &[f64]) -> Vec<f64> {
    let c = zeta_coefficient(theta.a0, &theta.w0, theta.b0, x);
    x.iter().map(|xj| c * xj).collect()
}

/// The scalar `c` with `ζ(x; θ) = c·x`.
fn zeta_coefficient(a0: f64, w0: &[f64], b0: f64, x: &[f64]) -> f64 {
    let z0 = dot(w0, x);
    let s0 = z0 + b0;
    if s0 >= 0.0 {
        let two_d = 2.0 * x.len() as f64;
        a0 * neuron_term(two_d, 1.0, z0, s0, norm2_sq(w0), boundary_factor(x))
    } else {
        0.0
    }
}

/// Pseudo network `g(x; W)`: the linearization of ψ around `W0`, evaluated
/// at the current weights.
pub fn eval_pseudo_g(p: &ModelParams, x: &[f64]) -> f64 {
    pseudo_g_at(p, &p.w, x)
}

pub fn pseudo_g_at(p: &ModelParams, w: &WeightMatrix, x: &[f64]) -> f64 {
    let two_d = 2.0 * x.len() as f64;
    let r2 = boundary_factor(x);
    let mut acc = 0.0;
    for i in 0..p.width() {
        let w0i = p.w0.row(i);
        let z0 = dot(w0i, x);
        let s0 = z0 + p.b[i];
        if s0 >= 0.0 {
            let lin = dot(w.row(i), x) + p.b[i];
            acc += p.a[i] * neuron_term(two_d, lin, z0, s0, norm2_sq(w0i), r2);
        }
    }
    acc
}

/// Bias-free pseudo network `g⁽ᵇ⁾(x; W′)`, linear in `W′`.
pub fn eval_pseudo_gb(p: &ModelParams, w_prime: &WeightMatrix, x: &[f64]) -> f64 {
    let two_d = 2.0 * x.len() as f64;
    let r2 = boundary_factor(x);
    let mut acc = 0.0;
    for i in 0..p.width() {
        let w0i = p.w0.row(i);
        let z0 = dot(w0i, x);
        let s0 = z0 + p.b[i];
        if s0 >= 0.0 {
            let lin = dot(w_prime.row(i), x);
            acc += p.a[i] * neuron_term(two_d, lin, z0, s0, norm2_sq(w0i), r2);
        }
    }
    acc
}

/// `∂ψ/∂W` at the current weights. Row `i` is
/// `a_i 𝕀_i [ (6d s² + 24 s z + 12 s² + 6‖w‖²(‖x‖²-1)) x + 12 s (‖x‖²-1) w_i ]`.
pub fn grad_psi_w(p: &ModelParams, x: &[f64]) -> WeightMatrix {
    let mut g = WeightMatrix::zeros(p.width(), p.dim());
    accumulate_grad_psi(p, &p.w, x, 1.0, &mut g);
    g
}

/// `out += scale · ∂ψ/∂W (x; w)`.
pub(crate) fn accumulate_grad_psi(
    p: &ModelParams,
    w: &WeightMatrix,
    x: &[f64],
    scale: f64,
    out: &mut WeightMatrix,
) {
    let d = x.len() as f64;
    let r2 = boundary_factor(x);
    for i in 0..p.width() {
        let wi = w.row(i);
        let z = dot(wi, x);
        let s = z + p.b[i];
        if s < 0.0 {
            continue;
        }
        let ww = norm2_sq(wi);
        let cx = scale * p.a[i] * (6.0 * d * s * s + 24.0 * s * z + 12.0 * s * s + 6.0 * ww * r2);
        let cw = scale * p.a[i] * 12.0 * s * r2;
        let row = out.row_mut(i);
        for j in 0..row.len() {
            row[j] += cx * x[j] + cw * wi[j];
        }
    }
}

/// Gradient of the per-sample loss `|ψ(x) - label|²` with respect to `W`.
pub fn loss_grad_w(p: &ModelParams, x: &[f64], label: f64) -> Result<WeightMatrix> {
    let residual = eval_psi(p, x)? - label;
    let mut g = WeightMatrix::zeros(p.width(), p.dim());
    accumulate_grad_psi(p, &p.w, x, 2.0 * residual, &mut g);
    if !g.is_finite() {
        return Err(Error::NonFinite("loss gradient".into()));
    }
    Ok(g)
}

/// `∂g/∂W`: `g` is affine in `W`, row `i` is `ζ(x; θ_i)`.
pub fn grad_pseudo_g_w(p: &ModelParams, x: &[f64]) -> WeightMatrix {
    let mut g = WeightMatrix::zeros(p.width(), p.dim());
    for i in 0..p.width() {
        let c = zeta_coefficient(p.a[i], p.w0.row(i), p.b[i], x);
        if c != 0.0 {
            for (gj, xj) in g.row_mut(i).iter_mut().zip(x) {
                *gj = c * xj;
            }
        }
    }
    g
}

/// Gradient of `|g(x) - label|²` with respect to `W`.
pub fn pseudo_loss_grad_w(p: &ModelParams, x: &[f64], label: f64) -> WeightMatrix {
    let residual = eval_pseudo_g(p, x) - label;
    grad_pseudo_g_w(p, x).scaled(2.0 * residual)
}

/// `min_i |w_iᵀx + b_i|` at the current weights: distance to the nearest
/// activation kink.
pub fn kink_margin(p: &ModelParams, x: &[f64]) -> f64 {
    (0..p.width())
        .map(|i| (dot(p.w.row(i), x) + p.b[i]).abs())
        .fold(f64::INFINITY, f64::min)
}

/// The constant `C_d = 2d^{5/2} + 4d² + 26d^{3/2} + 12d` bounding
/// `‖ζ(x; θ)‖₂ ≤ C_d m^{-α-2β}` on the ball.
pub fn zeta_bound_constant(d: usize) -> f64 {
    let d = d as f64;
    2.0 * d.powf(2.5) + 4.0 * d * d + 26.0 * d.powf(1.5) + 12.0 * d
}
