use learnchan::data::{bianchini_label, encode_idx, parse_idx, IdxArray};
use learnchan::linalg::Matrix;
use learnchan::net::sample_mask;
use learnchan::ode::{analyze, integrate, IntegrateOptions, OdeSystem, Variant};
use learnchan::rng::RngStream;
use learnchan::transfer::TransferFunction;
use proptest::prelude::*;

fn matrix(rows: usize, cols: usize) -> impl Strategy<Value = Matrix> {
    prop::collection::vec(-3.0f64..3.0, rows * cols).prop_map(move |d| Matrix::new(rows, cols, d).unwrap())
}

fn naive_matmul(a: &Matrix, b: &Matrix) -> Matrix {
    Matrix::from_fn(a.rows(), b.cols(), |i, j| (0..a.cols()).map(|k| a.get(i, k) * b.get(k, j)).sum())
}

proptest! {
    #[test]
    fn softmax_rows_sum_to_one(s in prop::collection::vec(-50.0f64..50.0, 1..12)) {
        let p = TransferFunction::Softmax.apply(&s).unwrap();
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        prop_assert!(p.iter().all(|&v| (0.0..=1.0).contains(&v)));
    }

    #[test]
    fn derivatives_match_finite_differences(s in -4.0f64..4.0, which in 0usize..4) {
        let f = [TransferFunction::Tanh, TransferFunction::Logistic, TransferFunction::Identity, TransferFunction::Power(3.0)][which];
        let h = 1e-6;
        let up = f.apply(&[s + h]).unwrap()[0];
        let down = f.apply(&[s - h]).unwrap()[0];
        let fd = (up - down) / (2.0 * h);
        let d = f.derivative_at(s).unwrap();
        prop_assert!((fd - d).abs() <= 1e-6 * d.abs().max(1.0), "{f:?} at {s}: {fd} vs {d}");
    }

    #[test]
    fn matmul_agrees_with_triple_loop((a, b) in (1usize..6, 1usize..6, 1usize..6).prop_flat_map(|(n, k, m)| (matrix(n, k), matrix(k, m)))) {
        let fast = a.matmul(&b).unwrap();
        prop_assert!(fast.max_abs_diff(&naive_matmul(&a, &b)).unwrap() < 1e-12);
        let nt = a.matmul_nt(&b.transpose()).unwrap();
        let tn = a.transpose().matmul_tn(&b).unwrap();
        prop_assert!(nt.max_abs_diff(&fast).unwrap() < 1e-12);
        prop_assert!(tn.max_abs_diff(&fast).unwrap() < 1e-12);
    }

    #[test]
    fn bianchini_labels_are_sign_symmetric(x in -1.0f64..1.0, y in -1.0f64..1.0, k in 0u32..5) {
        let l = bianchini_label(k, [x, y]);
        for p in [[-x, y], [x, -y], [-x, -y], [y, x]] {
            prop_assert_eq!(bianchini_label(k, p), l);
        }
    }

    #[test]
    fn idx_round_trips(dims in prop::collection::vec(1usize..5, 1..4), seed in any::<u64>()) {
        let n: usize = dims.iter().product();
        let mut rng = RngStream::new(seed);
        let data = (0..n).map(|_| (rng.next_u64() & 0xff) as u8).collect();
        let a = IdxArray { dims, data };
        prop_assert_eq!(parse_idx(&encode_idx(&a)).unwrap(), a);
    }

    #[test]
    fn dropout_preserves_expectation(p in 0.05f64..0.8, seed in any::<u64>()) {
        let mut rng = RngStream::new(seed);
        let m = sample_mask(200, 100, p, &mut rng);
        let mean = m.data().iter().sum::<f64>() / m.data().len() as f64;
        // Standard error of the mean is sqrt(p/(1-p)/n) ≤ 0.02 here.
        prop_assert!((mean - 1.0).abs() < 0.1, "p={p}: mean {mean}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn chain_invariants_hold(depth in 2usize..5, asrbp in any::<bool>(), seed in any::<u64>()) {
        let variant = if asrbp { Variant::Asrbp } else { Variant::Arbp };
        let sys = OdeSystem::chain(depth, variant, 1.0, 1.0).unwrap();
        let mut rng = RngStream::new(seed);
        let x0: Vec<f64> = (0..sys.len()).map(|_| rng.uniform_range(-0.5, 0.5)).collect();
        let mut opts = IntegrateOptions::adaptive(20.0, 1e-11);
        opts.rest_steps = None;
        let report = analyze(&integrate(&sys, &x0, &opts).unwrap(), &sys);
        prop_assume!(report.t_final >= 20.0);
        prop_assert!(report.max_drift() < 1e-8, "{report:?}");
    }
}
