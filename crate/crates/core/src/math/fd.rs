//! Central finite differences, used as ground truth for the analytic
//! Laplacian and gradient formulas.

use super::matrix::WeightMatrix;

pub const DEFAULT_LAPLACIAN_STEP: f64 = 1e-4;
pub const DEFAULT_GRADIENT_STEP: f64 = 1e-6;

/// `Σ_i (f(x + h e_i) - 2 f(x) + f(x - h e_i)) / h²`
pub fn fd_laplacian<F>(fun: F, x: &[f64], h: f64) -> f64
where
    F: Fn(&[f64]) -> f64,
{
    assert!(h > 0.0, "finite-difference step must be positive");
    let centre = fun(x);
    let mut probe = x.to_vec();
    let mut acc = 0.0;
    for i in 0..x.len() {
        probe[i] = x[i] + h;
        let plus = fun(&probe);
        probe[i] = x[i] - h;
        let minus = fun(&probe);
        probe[i] = x[i];
        acc += (plus - 2.0 * centre + minus) / (h * h);
    }
    acc
}

/// Entry-wise central differences of a scalar function of a weight matrix.
pub fn fd_gradient<F>(fun: F, w: &WeightMatrix, h: f64) -> WeightMatrix
where
    F: Fn(&WeightMatrix) -> f64,
{
    assert!(h > 0.0, "finite-difference step must be positive");
    let mut probe = w.clone();
    let mut grad = WeightMatrix::zeros(w.rows(), w.cols());
    for k in 0..w.as_slice().len() {
        let orig = w.as_slice()[k];
        probe.as_mut_slice()[k] = orig + h;
        let plus = fun(&probe);
        probe.as_mut_slice()[k] = orig - h;
        let minus = fun(&probe);
        probe.as_mut_slice()[k] = orig;
        grad.as_mut_slice()[k] = (plus - minus) / (2.0 * h);
    }
    grad
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::{norm2_sq, MatrixNorm};

    #[test]
    fn laplacian_of_squared_norm() {
        let v = fd_laplacian(norm2_sq, &[0.3, -0.2, 0.5], 1e-4);
        assert!((v - 6.0).abs() < 1e-6, "{v}");
    }

    #[test]
    fn laplacian_of_constant() {
        let v = fd_laplacian(|_| 3.25, &[0.1, 0.4], 1e-4);
        assert!(v.abs() < 1e-8);
    }

    #[test]
    fn laplacian_exact_on_cubics() {
        // Δ(x³ + 2xy² - z² + 4y) = 6x + 4x - 2 = 10x - 2
        let f = |p: &[f64]| p[0].powi(3) + 2.0 * p[0] * p[1] * p[1] - p[2] * p[2] + 4.0 * p[1];
        let x = [0.4, -0.3, 0.2];
        let v = fd_laplacian(f, &x, 1e-4);
        assert!((v - (10.0 * x[0] - 2.0)).abs() < 1e-7, "{v}");
    }

    #[test]
    fn gradient_of_frobenius_square() {
        let w = WeightMatrix::from_rows(&[vec![0.3, -1.2], vec![2.0, 0.5], vec![0.0, 0.1]]);
        let g = fd_gradient(
            |m| m.norm(MatrixNorm::Frobenius).unwrap().powi(2),
            &w,
            1e-6,
        );
        let expect = w.scaled(2.0);
        for (a, b) in g.as_slice().iter().zip(expect.as_slice()) {
            assert!((a - b).abs() < 1e-8, "{a} vs {b}");
        }
    }

    #[test]
    fn gradient_of_constant() {
        let w = WeightMatrix::from_rows(&[vec![1.0, 2.0]]);
        let g = fd_gradient(|_| 7.0, &w, 1e-6);
        assert!(g.as_slice().iter().all(|&v| v == 0.0));
    }
}
