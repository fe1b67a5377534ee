//! Closed-form width, iteration and sample-count thresholds.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::pinn::zeta_bound_constant;

/// `(C_d, C_d′)` with `C_d = 2d^{5/2} + 4d² + 26d^{3/2} + 12d` and
/// `C_d′ = 4d^{5/2} + 12d² + 60d^{3/2} + 76d + 24d^{1/2}`.
pub fn constants_cd(d: usize) -> (f64, f64) {
    assert!(d >= 1, "dimension must be positive");
    let x = d as f64;
    let cd_prime = 4.0 * x.powf(2.5) + 12.0 * x * x + 60.0 * x.powf(1.5) + 76.0 * x + 24.0 * x.sqrt();
    (zeta_bound_constant(d), cd_prime)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThresholdInputs {
    pub epsilon: f64,
    pub delta: f64,
    /// Upper bound on the class norm of `f`.
    pub f_norm: f64,
    pub alpha: f64,
    pub beta: f64,
    pub d: usize,
}

impl ThresholdInputs {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0 && self.epsilon <= 1.0) {
            return Err(invalid("epsilon", "must lie in (0, 1]"));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(invalid("delta", "must lie in (0, 1)"));
        }
        if !(self.f_norm >= 0.0 && self.f_norm.is_finite()) {
            return Err(invalid("f_norm", "must be finite and >= 0"));
        }
        if !(self.alpha >= 0.0 && self.beta >= 0.0) {
            return Err(invalid("alpha/beta", "must be >= 0"));
        }
        if self.d == 0 {
            return Err(invalid("d", "must be at least 1"));
        }
        if self.alpha + 3.0 * self.beta <= 1.0 {
            return Err(Error::Hypothesis(format!(
                "alpha + 3 beta = {} must exceed 1",
                self.alpha + 3.0 * self.beta
            )));
        }
        Ok(())
    }

    fn log_term(&self) -> f64 {
        1.0 + (2.0 * (1.0 / self.delta).ln()).sqrt()
    }
}

fn root(base: f64, exponent_denominator: f64, what: &str) -> Result<f64> {
    if exponent_denominator <= 0.0 {
        return Err(Error::Hypothesis(format!("{what} = {exponent_denominator} must be positive")));
    }
    Ok(base.powf(1.0 / exponent_denominator))
}

/// Width `M` beyond which the optimization guarantee applies.
pub fn width_threshold_m(t: &ThresholdInputs) -> Result<f64> {
    t.validate()?;
    let (cd, cdp) = constants_cd(t.d);
    let (a, b, eps, f) = (t.alpha, t.beta, t.epsilon, t.f_norm);
    let lead = 2.0 * cd * f * t.log_term();
    let terms = [
        root(lead * lead / eps, 2.0 * a + 4.0 * b + 1.0, "2 alpha + 4 beta + 1")?,
        root(cdp / eps, a + 3.0 * b - 1.0, "alpha + 3 beta - 1")?,
        root(f / eps, 2.0 * a + 5.0 * b - 1.0, "2 alpha + 5 beta - 1")?,
        root(f * f / eps, 2.0 * a + 4.0 * b, "2 alpha + 4 beta")?,
    ];
    Ok(terms.into_iter().fold(f64::NEG_INFINITY, f64::max))
}

/// `C_f = 1 / ((‖f‖ + 1)² max{‖f‖, 1})`.
pub fn c_f(f_norm: f64) -> f64 {
    1.0 / ((f_norm + 1.0).powi(2) * f_norm.max(1.0))
}

/// Iteration cap `T₀` at width `m`.
pub fn iteration_cap_t0(m: f64, t: &ThresholdInputs) -> Result<f64> {
    t.validate()?;
    if !(m > 0.0) {
        return Err(invalid("m", "must be positive"));
    }
    let (a, b, eps) = (t.alpha, t.beta, t.epsilon);
    let terms = [
        m.powf((1.0 + 3.0 * a + b) / 2.0) / eps.powf(0.75),
        m.powf((1.0 + 5.0 * a + 3.0 * b) / 3.0) / eps.powf(2.0 / 3.0),
        m.powf((2.0 + 4.0 * a) / 3.0) / eps.powf(2.0 / 3.0),
        m.powf(2.0 * a + 2.0 * b) / eps.sqrt(),
        m.powf(-1.0 + 3.0 * a + 5.0 * b) / eps,
        m.powf((2.0 + 5.0 * a + 2.0 * b) / 3.0) / eps.powf(2.0 / 3.0),
        m.powf((1.0 + 4.0 * a + 3.0 * b) / 2.0) / eps.sqrt(),
        m.powf(1.0 + 2.0 * a + b) / eps.sqrt(),
    ];
    Ok(c_f(t.f_norm) * terms.into_iter().fold(f64::INFINITY, f64::min))
}

/// The admissible iteration range `[‖f‖²/ε², T₀]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationWindow {
    pub lower: f64,
    pub upper: f64,
}

impl IterationWindow {
    /// The theorem needs `T₀` strictly above the lower end.
    pub fn is_empty(&self) -> bool {
        self.upper <= self.lower
    }

    pub fn contains(&self, t: f64) -> bool {
        !self.is_empty() && t >= self.lower && t <= self.upper
    }
}

pub fn admissible_t(m: f64, t: &ThresholdInputs) -> Result<IterationWindow> {
    let upper = iteration_cap_t0(m, t)?;
    Ok(IterationWindow {
        lower: t.f_norm * t.f_norm / (t.epsilon * t.epsilon),
        upper,
    })
}

/// Sample count `N₀ = ((m^{-α-2β}‖f‖ + 1)² / ε²) max{log(1/δ), η²T²m^{-4α}}`.
pub fn sample_threshold_n0(m: f64, eta: f64, iterations: f64, t: &ThresholdInputs) -> Result<f64> {
    if !(m > 0.0 && eta > 0.0 && iterations > 0.0) {
        return Err(invalid("m/eta/T", "must be positive"));
    }
    if !(t.epsilon > 0.0 && t.delta > 0.0 && t.delta < 1.0 && t.f_norm >= 0.0) {
        return Err(invalid("inputs", "need epsilon > 0, delta in (0, 1), f_norm >= 0"));
    }
    let lead = (m.powf(-t.alpha - 2.0 * t.beta) * t.f_norm + 1.0).powi(2) / (t.epsilon * t.epsilon);
    let opt = eta * eta * iterations * iterations * m.powf(-4.0 * t.alpha);
    Ok(lead * (1.0 / t.delta).ln().max(opt))
}

/// `(C / √m)(1 + √(2 log(1/δ)))`, the deviation bound for means of `m`
/// independent vectors of norm at most `C`.
pub fn concentration_bound(c: f64, m: usize, delta: f64) -> f64 {
    c / (m as f64).sqrt() * (1.0 + (2.0 * (1.0 / delta).ln()).sqrt())
}

/// `C_d ‖f‖ m^{-α-2β-1/2} (1 + √(2 log(1/δ)))`, the random-feature
/// approximation bound.
pub fn approximation_bound(d: usize, f_norm: f64, m: usize, alpha: f64, beta: f64, delta: f64) -> f64 {
    let (cd, _) = constants_cd(d);
    cd * f_norm * (m as f64).powf(-alpha - 2.0 * beta - 0.5) * (1.0 + (2.0 * (1.0 / delta).ln()).sqrt())
}
