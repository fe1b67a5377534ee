use proptest::prelude::*;

use pinn_core::math::{fd_laplacian, norm2_sq, sample_unit_ball, sample_unit_sphere, RngStream, WeightMatrix};
use pinn_core::pinn::{eval_phi, eval_psi, init_params, ModelConfig, ModelParams};
use pinn_core::problem::{build_dataset, shift_rhs, Dataset, Polynomial, TargetFunction};
use pinn_core::train::average_losses;

fn params(d: usize, m: usize, seed: u64) -> ModelParams {
    init_params(&ModelConfig::new(d, m, 0.0, 0.5, seed).unwrap(), &mut RngStream::new(seed, "init"))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn samples_stay_in_the_ball(seed in any::<u64>(), d in 1usize..6) {
        let mut rng = RngStream::new(seed, "ball");
        for x in sample_unit_ball(&mut rng, d, 200).iter() {
            prop_assert!(norm2_sq(x) <= 1.0);
        }
        for x in sample_unit_sphere(&mut rng, d, 200).iter() {
            prop_assert_eq!(norm2_sq(x), 1.0);
        }
    }

    #[test]
    fn psi_is_homogeneous_in_output_weights(seed in any::<u64>(), d in 1usize..5, m in 1usize..20) {
        let p = params(d, m, seed);
        let doubled: Vec<f64> = p.a().iter().map(|v| 2.0 * v).collect();
        let q = ModelParams::new(doubled, p.b().to_vec(), p.w0().clone());
        let mut rng = RngStream::new(seed, "x");
        for x in sample_unit_ball(&mut rng, d, 20).iter() {
            prop_assert_eq!(eval_psi(&q, x).unwrap(), 2.0 * eval_psi(&p, x).unwrap());
            prop_assert_eq!(eval_phi(&q, x), 2.0 * eval_phi(&p, x));
        }
    }

    #[test]
    fn zero_output_weights_give_zero_network(seed in any::<u64>(), d in 1usize..5, m in 1usize..20) {
        let p = params(d, m, seed);
        let q = ModelParams::new(vec![0.0; m], p.b().to_vec(), WeightMatrix::zeros(m, d));
        let x = vec![0.3 / d as f64; d];
        prop_assert_eq!(eval_psi(&q, &x).unwrap(), 0.0);
    }

    #[test]
    fn shift_moves_the_origin_value_into_the_corrector(c0 in -5.0f64..5.0, c1 in -5.0f64..5.0, d in 1usize..5) {
        let f = TargetFunction::polynomial(Polynomial::parse(&format!("{c0} {} {}*x1^2", if c1 < 0.0 { '-' } else { '+' }, c1.abs()), d).unwrap());
        let (shifted, corrector) = shift_rhs(&f, d);
        prop_assert!(shifted.eval(&vec![0.0; d]).abs() <= 1e-12);
        let x: Vec<f64> = (0..d).map(|k| 0.2 - 0.1 * k as f64).collect();
        let lap = fd_laplacian(|y| corrector.eval(y), &x, 1e-4);
        prop_assert!((lap - (shifted.eval(&x) - f.eval(&x))).abs() <= 1e-5 * (1.0 + lap.abs()));
        prop_assert_eq!(corrector.eval(&[1.0]), 0.0);
    }

    #[test]
    fn dataset_csv_round_trips(seed in any::<u64>(), d in 1usize..5, n in 1usize..40) {
        let f = TargetFunction::squared_norm(d);
        let data = build_dataset(&f, n, d, &mut RngStream::new(seed, "data")).unwrap();
        let mut buf = Vec::new();
        data.write_csv(&mut buf).unwrap();
        let back = Dataset::read_csv(buf.as_slice()).unwrap();
        prop_assert_eq!(back.points, data.points);
        prop_assert_eq!(back.labels, data.labels);
    }

    #[test]
    fn constant_history_averages_to_itself(v in 0.0f64..10.0, gaps in prop::collection::vec(1u64..500, 1..20)) {
        let mut t = 0;
        let mut hist = vec![(0, v)];
        for g in gaps {
            t += g;
            hist.push((t, v));
        }
        for a in average_losses(&hist).unwrap() {
            prop_assert!((a - v).abs() <= 1e-12 * (1.0 + v));
        }
    }

    #[test]
    fn streams_are_reproducible_and_label_separated(seed in any::<u64>()) {
        let draw = |label: &str| {
            let mut r = RngStream::new(seed, label);
            (0..8).map(|_| r.next_u64()).collect::<Vec<_>>()
        };
        prop_assert_eq!(draw("a"), draw("a"));
        prop_assert_ne!(draw("a"), draw("b"));
    }
}
