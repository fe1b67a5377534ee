//! Distance between the trained network and its linearization along an
//! SGD trajectory.

use serde::{Deserialize, Serialize};

use crate::math::MatrixNorm;
use crate::pinn::{accumulate_grad_psi, psi_at, pseudo_g_at, pseudo_loss_grad_w, ModelParams};
use crate::problem::Dataset;

pub const DEFAULT_PROBE_SIZE: usize = 256;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GapRecord {
    pub iter: u64,
    /// `max_i ‖w_i - w_i⁽⁰⁾‖₂`
    pub drift: f64,
    /// `max_x |ψ(x) - g(x)|` over the probe.
    pub psi_g_gap: f64,
    /// `max_x ‖∇_W L(ψ) - ∇_W L(g)‖_{2,1}` over the probe.
    pub grad_gap: f64,
}

/// Gap statistics for the current weights on a labelled probe set.
pub fn gap_monitor(p: &ModelParams, probe: &Dataset, iter: u64) -> GapRecord {
    let mut psi_g_gap: f64 = 0.0;
    let mut grad_gap: f64 = 0.0;
    for n in 0..probe.len() {
        let (x, y) = probe.sample(n);
        let psi = psi_at(p, &p.w, x);
        let g = pseudo_g_at(p, &p.w, x);
        psi_g_gap = psi_g_gap.max((psi - g).abs());
        let mut diff = pseudo_loss_grad_w(p, x, y).scaled(-1.0);
        accumulate_grad_psi(p, &p.w, x, 2.0 * (psi - y), &mut diff);
        let gap = diff.norm(MatrixNorm::TwoOne).unwrap_or(f64::INFINITY);
        grad_gap = grad_gap.max(gap);
    }
    GapRecord {
        iter,
        drift: p.max_drift(),
        psi_g_gap,
        grad_gap,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::RngStream;
    use crate::pinn::{init_params, ModelConfig};
    use crate::problem::{build_dataset, TargetFunction};

    fn setup() -> (ModelParams, Dataset) {
        let cfg = ModelConfig::new(3, 64, 0.0, 0.5, 0).unwrap();
        let p = init_params(&cfg, &mut RngStream::new(0, "init"));
        let f = TargetFunction::squared_norm(3);
        let probe = build_dataset(&f, DEFAULT_PROBE_SIZE, 3, &mut RngStream::new(0, "probe")).unwrap();
        (p, probe)
    }

    #[test]
    fn no_gap_at_initialization() {
        let (p, probe) = setup();
        let r = gap_monitor(&p, &probe, 0);
        assert_eq!(r.psi_g_gap, 0.0);
        assert_eq!(r.drift, 0.0);
        assert!(r.grad_gap.is_finite() && r.grad_gap > 0.0);
    }

    #[test]
    fn gaps_are_reproducible_and_grow_with_displacement() {
        let (p, probe) = setup();
        let mut r = RngStream::new(1, "move");
        let mut shift = p.w.clone();
        for v in shift.as_mut_slice() {
            *v = r.symmetric(1.0);
        }
        let small = p.clone().with_weights(p.w0().add(&shift.scaled(0.01)));
        let large = p.clone().with_weights(p.w0().add(&shift.scaled(0.1)));
        let a = gap_monitor(&small, &probe, 1);
        assert_eq!(a, gap_monitor(&small, &probe, 1));
        let b = gap_monitor(&large, &probe, 1);
        assert!(b.drift > a.drift);
        assert!(b.psi_g_gap > a.psi_g_gap);
    }
}
