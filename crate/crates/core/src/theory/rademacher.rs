//! Monte-Carlo lower estimates of the empirical Rademacher complexity of
//! networks within a row-wise ball around the initialization.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::math::{norm2, PointSet, RngStream};
use crate::pinn::{neuron_psi_grad, ModelParams};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AscentSettings {
    pub restarts: usize,
    pub steps: usize,
    /// Initial step as a fraction of the radius.
    pub step_fraction: f64,
}

impl Default for AscentSettings {
    fn default() -> Self {
        AscentSettings {
            restarts: 8,
            steps: 200,
            step_fraction: 0.5,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RademacherEstimate {
    pub value: f64,
    pub stderr: f64,
    pub n_points: usize,
    pub n_sign_draws: usize,
    pub radius: f64,
}

impl RademacherEstimate {
    /// `value · √N / (m^{-α} τ′)`, the constant in front of the bound's
    /// form; NaN when `τ′ = 0`.
    pub fn kappa(&self, output_scale: f64) -> f64 {
        if self.radius > 0.0 {
            self.value * (self.n_points as f64).sqrt() / (output_scale * self.radius)
        } else {
            f64::NAN
        }
    }
}

/// `E_ξ sup_{‖W′‖_{2,∞} ≤ τ′} (1/N) Σ_n ξ_n ψ(x_n; W0 + W′)`.
///
/// The objective splits into one term per neuron with independent
/// constraints, so each row is maximized on its own by projected gradient
/// ascent from `W′ = 0` plus random starts. The best iterate found is a
/// feasible point, so the result never exceeds the true supremum.
pub fn rademacher_estimate(
    p: &ModelParams,
    points: &PointSet,
    radius: f64,
    n_sign_draws: usize,
    ascent: &AscentSettings,
    seed: u64,
) -> Result<RademacherEstimate> {
    if !(radius >= 0.0 && radius.is_finite()) {
        return Err(invalid("radius", "must be finite and >= 0"));
    }
    if points.is_empty() || n_sign_draws == 0 {
        return Err(invalid("points/n_sign_draws", "must be nonempty"));
    }
    if points.dim() != p.dim() {
        return Err(invalid("points", "dimension does not match the model"));
    }
    let base = RngStream::new(seed, "rademacher");
    let sups: Vec<f64> = (0..n_sign_draws)
        .into_par_iter()
        .map(|k| {
            let mut r = base.child(k);
            let signs: Vec<f64> = (0..points.len()).map(|_| r.sign()).collect();
            (0..p.width())
                .map(|i| neuron_sup(p, i, points, &signs, radius, ascent, &mut r))
                .sum::<f64>()
        })
        .collect();
    let n = sups.len() as f64;
    let value = sups.iter().sum::<f64>() / n;
    let var = if sups.len() > 1 {
        sups.iter().map(|v| (v - value).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    Ok(RademacherEstimate {
        value,
        stderr: (var / n).sqrt(),
        n_points: points.len(),
        n_sign_draws,
        radius,
    })
}

/// `(1/N) Σ_n ξ_n a_i h(w0_i + u; x_n)` and its gradient in `u`.
fn neuron_objective(p: &ModelParams, i: usize, points: &PointSet, signs: &[f64], u: &[f64], grad: &mut [f64]) -> f64 {
    let w: Vec<f64> = p.w0().row(i).iter().zip(u).map(|(a, b)| a + b).collect();
    let inv_n = 1.0 / points.len() as f64;
    grad.fill(0.0);
    let mut acc = 0.0;
    for (x, &xi) in points.iter().zip(signs) {
        acc += xi * neuron_psi_grad(p.a()[i], p.b()[i], &w, x, xi * inv_n, grad);
    }
    acc * inv_n
}

fn project(u: &mut [f64], radius: f64) {
    let n = norm2(u);
    if n > radius {
        for v in u.iter_mut() {
            *v *= radius / n;
        }
    }
}

fn neuron_sup(
    p: &ModelParams,
    i: usize,
    points: &PointSet,
    signs: &[f64],
    radius: f64,
    s: &AscentSettings,
    rng: &mut RngStream,
) -> f64 {
    let d = p.dim();
    let mut grad = vec![0.0; d];
    let mut u = vec![0.0; d];
    let mut best = neuron_objective(p, i, points, signs, &u, &mut grad);
    if radius == 0.0 {
        return best;
    }
    for restart in 0..s.restarts.max(1) {
        if restart == 0 {
            u.fill(0.0);
        } else {
            for v in u.iter_mut() {
                *v = rng.normal();
            }
            let n = norm2(&u).max(f64::MIN_POSITIVE);
            let r = radius * rng.uniform().powf(1.0 / d as f64);
            for v in u.iter_mut() {
                *v *= r / n;
            }
        }
        let mut val = neuron_objective(p, i, points, signs, &u, &mut grad);
        best = best.max(val);
        let mut step = s.step_fraction * radius;
        for _ in 0..s.steps {
            let gn = norm2(&grad);
            if gn == 0.0 || step < 1e-9 * radius {
                break;
            }
            let trial: Vec<f64> = {
                let mut t: Vec<f64> = u.iter().zip(&grad).map(|(a, g)| a + step * g / gn).collect();
                project(&mut t, radius);
                t
            };
            let mut tgrad = vec![0.0; d];
            let tval = neuron_objective(p, i, points, signs, &trial, &mut tgrad);
            if tval > val {
                u = trial;
                val = tval;
                grad = tgrad;
                best = best.max(val);
            } else {
                step *= 0.5;
            }
        }
    }
    best
}
