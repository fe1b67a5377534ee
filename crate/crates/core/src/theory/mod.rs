//! Numerical checks of the approximation, optimization and generalization
//! theory: threshold calculators, trajectory monitors and Monte-Carlo
//! experiments.

pub mod approx;
pub mod concentration;
pub mod monitor;
pub mod rademacher;
pub mod thresholds;

pub use approx::{decoupled_rate, fm_approx_experiment, fm_construct, ApproxCell, ApproxSettings, DecoupledRate, RandomFeatureFit};
pub use concentration::{binomial_margin, concentration_test, ConcentrationResult, SphereMixture};
pub use monitor::{gap_monitor, GapRecord};
pub use rademacher::{rademacher_estimate, AscentSettings, RademacherEstimate};
pub use thresholds::{
    admissible_t, approximation_bound, concentration_bound, constants_cd, iteration_cap_t0, sample_threshold_n0,
    width_threshold_m, IterationWindow, ThresholdInputs,
};

use crate::error::Result;
use crate::math::RngStream;
use crate::pinn::ModelParams;
use crate::problem::{empirical_loss, expected_loss, Dataset, TargetFunction};

/// `|expected loss - empirical loss|` for the current model.
pub fn generalization_gap(
    p: &ModelParams,
    data: &Dataset,
    f: &TargetFunction,
    n_test: usize,
    rng: &mut RngStream,
) -> Result<f64> {
    Ok((expected_loss(p, f, n_test, rng)? - empirical_loss(p, data)?).abs())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pinn::{init_params, ModelConfig};
    use crate::problem::build_dataset;

    #[test]
    fn gap_vanishes_when_test_set_is_training_set() {
        let cfg = ModelConfig::new(3, 20, 0.0, 0.5, 0).unwrap();
        let p = init_params(&cfg, &mut RngStream::new(0, "init"));
        let f = TargetFunction::squared_norm(3);
        let data = build_dataset(&f, 500, 3, &mut RngStream::new(5, "same")).unwrap();
        let gap = generalization_gap(&p, &data, &f, 500, &mut RngStream::new(5, "same")).unwrap();
        assert_eq!(gap, 0.0);
    }
}
