mod common;

use common::*;
use cvek::ensemble::{project_onto_simplex, stage2_weights_residuals, stage3_ensemble_kernel};
use cvek::interaction::{compose, satterthwaite_pvalue};
use cvek::kernel::{hadamard, kernel_matrix, trace_standardize, KernelSpec};
use cvek::krr::fit_krr;
use cvek::reml::reml_fit;
use cvek::NuisancePolicy;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn simplex_projection_is_idempotent(v in prop::collection::vec(-5.0f64..5.0, 1..12)) {
        let w = project_onto_simplex(&v);
        prop_assert!(w.iter().all(|&x| x >= 0.0));
        prop_assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let again = project_onto_simplex(&w);
        for (a, b) in w.iter().zip(&again) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn stacking_weights_beat_every_vertex(seed in 0u64..1000, d in 1usize..6) {
        let mut r = rng(seed);
        let res: Vec<DVector<f64>> = (0..d).map(|_| normal_vector(&mut r, 20)).collect();
        let u = stage2_weights_residuals(&res).unwrap();
        prop_assert!(u.iter().all(|&x| x >= 0.0));
        prop_assert!((u.iter().sum::<f64>() - 1.0).abs() < 1e-10);
        let mix = res.iter().zip(&u).fold(DVector::zeros(20), |acc, (e, w)| acc + e * *w);
        for e in &res {
            prop_assert!(mix.norm_squared() <= e.norm_squared() + 1e-9);
        }
    }

    #[test]
    fn composed_kernels_are_psd_and_symmetric_in_the_pair(seed in 0u64..1000, three in any::<bool>()) {
        let mut r = rng(seed);
        let n = 12;
        let m = if three { 3 } else { 2 };
        let groups: Vec<DMatrix<f64>> = (0..m)
            .map(|_| {
                let z = normal_matrix(&mut r, n, 2);
                trace_standardize(&kernel_matrix(&KernelSpec::rbf(1.0).unwrap(), &z).unwrap())
                    .unwrap()
                    .into_values()
            })
            .collect();
        let refs: Vec<&DMatrix<f64>> = groups.iter().collect();
        let policy = if three { NuisancePolicy::MultiGroupWithNuisance } else { NuisancePolicy::TwoGroup };
        let (k0, k12) = compose(&refs, (0, 1), policy).unwrap();
        let (s0, s12) = compose(&refs, (1, 0), policy).unwrap();
        prop_assert!(max_abs(&(&k0 - s0)) < 1e-12);
        prop_assert!(max_abs(&(&k12 - s12)) < 1e-12);
        for k in [k0, k12] {
            prop_assert!(cvek::linalg::min_eigen_ratio(&k) >= -1e-8);
        }
    }

    #[test]
    fn trace_standardized_kernels_have_unit_trace(seed in 0u64..1000, sigma in 0.1f64..5.0) {
        let mut r = rng(seed);
        let z = normal_matrix(&mut r, 9, 3);
        let k = trace_standardize(&kernel_matrix(&KernelSpec::rbf(sigma).unwrap(), &z).unwrap()).unwrap();
        prop_assert!((k.trace() - 1.0).abs() < 1e-12);
        let h = hadamard(&k, &k).unwrap();
        prop_assert!(h.min_eigen_ratio() >= -1e-8);
    }

    #[test]
    fn ensemble_hat_round_trips(seed in 0u64..1000, d in 1usize..4) {
        let mut r = rng(seed);
        let n = 10;
        let y = normal_vector(&mut r, n);
        let lambdas: Vec<f64> = (0..d).map(|i| 0.05 * (i + 1) as f64).collect();
        let raw: Vec<f64> = (0..d).map(|i| 1.0 + ((seed + i as u64) % 5) as f64).collect();
        let total: f64 = raw.iter().sum();
        let mut hat = DMatrix::zeros(n, n);
        for (l, w) in lambdas.iter().zip(&raw) {
            hat += fit_krr(&random_psd(&mut r, n, 4), &y, *l).unwrap().hat * (w / total);
        }
        cvek::linalg::symmetrize(&mut hat);
        let ek = stage3_ensemble_kernel(&hat, &lambdas).unwrap();
        let k = ek.k_ens.values();
        let back = k * (k + DMatrix::identity(n, n) * ek.lambda_k).try_inverse().unwrap();
        prop_assert!(max_abs(&(back - hat)) < 1e-6);
    }

    #[test]
    fn p_value_decreases_in_statistic(seed in 0u64..200, t in 0.0f64..50.0, dt in 0.0f64..10.0) {
        let mut r = rng(seed);
        let n = 15;
        let k0 = random_psd(&mut r, n, 5);
        let k12 = hadamard(&k0, &random_psd(&mut r, n, 5)).unwrap();
        let x = DMatrix::from_element(n, 1, 1.0);
        let y = normal_vector(&mut r, n);
        let fit = reml_fit(&k0, &x, &y).unwrap();
        let a = satterthwaite_pvalue(t, &fit, &k0, &k12).unwrap();
        let b = satterthwaite_pvalue(t + dt, &fit, &k0, &k12).unwrap();
        prop_assert!(b.p_value <= a.p_value + 1e-15);
        prop_assert!((0.0..=1.0).contains(&a.p_value));
    }
}
