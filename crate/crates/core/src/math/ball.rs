//! Points in the closed unit ball.

use serde::{Deserialize, Serialize};

use super::matrix::{norm2, norm2_sq};
use super::rng::RngStream;

/// `n` points of dimension `dim`, stored contiguously.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PointSet {
    dim: usize,
    data: Vec<f64>,
}

impl PointSet {
    pub fn new(dim: usize, data: Vec<f64>) -> Self {
        assert!(dim > 0, "points need a positive dimension");
        assert_eq!(data.len() % dim, 0, "flat data is not a multiple of dim");
        PointSet { dim, data }
    }

    pub fn from_points(dim: usize, points: &[Vec<f64>]) -> Self {
        let mut data = Vec::with_capacity(points.len() * dim);
        for p in points {
            assert_eq!(p.len(), dim);
            data.extend_from_slice(p);
        }
        PointSet::new(dim, data)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn point(&self, n: usize) -> &[f64] {
        &self.data[n * self.dim..(n + 1) * self.dim]
    }

    pub fn iter(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.data.chunks_exact(self.dim)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn push(&mut self, p: &[f64]) {
        assert_eq!(p.len(), self.dim);
        self.data.extend_from_slice(p);
    }
}

/// `n` points uniform by volume in the `d`-dimensional unit ball: a Gaussian
/// direction scaled to radius `U^{1/d}`. Each point consumes exactly
/// `2d + 1` draws, so there is no rejection step.
pub fn sample_unit_ball(rng: &mut RngStream, d: usize, n: usize) -> PointSet {
    assert!(d >= 1, "dimension must be positive");
    let mut data = Vec::with_capacity(n * d);
    let mut dir = vec![0.0; d];
    for _ in 0..n {
        let mut nrm;
        loop {
            for v in dir.iter_mut() {
                *v = rng.normal();
            }
            nrm = norm2(&dir);
            // A zero Gaussian vector has probability zero; guard anyway.
            if nrm > 0.0 {
                break;
            }
        }
        let radius = rng.uniform().powf(1.0 / d as f64);
        for v in &dir {
            data.push(v / nrm * radius);
        }
        // Rounding can push the norm a hair past 1.
        let start = data.len() - d;
        let r = norm2(&data[start..]);
        if r > 1.0 {
            for v in &mut data[start..] {
                *v /= r;
            }
        }
    }
    PointSet::new(d, data)
}

/// `n` points on the unit sphere (normalised Gaussians), each adjusted so
/// that its computed `‖x‖²` is exactly `1.0`.
pub fn sample_unit_sphere(rng: &mut RngStream, d: usize, n: usize) -> PointSet {
    let mut data = Vec::with_capacity(n * d);
    let mut dir = vec![0.0; d];
    for _ in 0..n {
        loop {
            for v in dir.iter_mut() {
                *v = rng.normal();
            }
            let nrm = norm2(&dir);
            if nrm == 0.0 {
                continue;
            }
            for v in dir.iter_mut() {
                *v /= nrm;
            }
            if snap_to_sphere(&mut dir) {
                break;
            }
        }
        data.extend_from_slice(&dir);
    }
    PointSet::new(d, data)
}

/// Re-solves the largest coordinate from the others, then walks it a few
/// ulps until `norm2_sq` rounds to exactly 1.
fn snap_to_sphere(x: &mut [f64]) -> bool {
    let k = (0..x.len())
        .max_by(|&i, &j| x[i].abs().total_cmp(&x[j].abs()))
        .unwrap_or(0);
    let rest: f64 = x.iter().enumerate().filter(|&(i, _)| i != k).map(|(_, v)| v * v).sum();
    if rest > 1.0 {
        return false;
    }
    let sign = if x[k] < 0.0 { -1.0 } else { 1.0 };
    let base = (1.0 - rest).sqrt();
    for step in 0..16i64 {
        for dir in [1i64, -1] {
            let bits = base.to_bits() as i64 + dir * step;
            let cand = f64::from_bits(bits as u64);
            x[k] = sign * cand;
            if norm2_sq(x) == 1.0 {
                return true;
            }
        }
    }
    false
}
