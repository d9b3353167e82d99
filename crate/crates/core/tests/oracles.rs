mod common;

use common::*;
use cvek::ensemble::{stage3_ensemble_kernel, EnsembleConfig};
use cvek::interaction::{
    build_null_and_interaction_kernels, efficient_statistic, satterthwaite_pvalue, score_statistic, InteractionBridge, TestConfig,
};
use cvek::kernel::{eval_kernel, kernel_matrix, trace_standardize, KernelSpec, MaternNu};
use cvek::krr::{fit_krr, kfold_error, loo_error};
use cvek::reml::{reml_fit, restricted_log_likelihood};
use cvek::{test_interaction, ModelKernel, NuisancePolicy, TestSpec};
use nalgebra::{DMatrix, DVector};
use statrs::distribution::{ChiSquared, ContinuousCDF};

fn setup(seed: u64, n: usize) -> (DMatrix<f64>, DVector<f64>, cvek::KernelMatrix, cvek::KernelMatrix) {
    let mut r = rng(seed);
    let design = two_group_design(&mut r, n, 2);
    let test = TestSpec::for_design(&design, "z1", "z2", NuisancePolicy::TwoGroup).unwrap();
    let groups: Vec<_> = design
        .groups()
        .iter()
        .map(|g| trace_standardize(&kernel_matrix(&KernelSpec::rbf(1.0).unwrap(), &g.values).unwrap()).unwrap())
        .collect();
    let pair = build_null_and_interaction_kernels(&groups, &test).unwrap();
    let h = pair.null.values().column_sum() / n as f64;
    let y = h * 3.0 + normal_vector(&mut r, n) * 0.5;
    (design.fixed_effects().clone(), y, pair.null, pair.interaction)
}

#[test]
fn score_statistic_matches_dense_formula() {
    for seed in 0..5 {
        let (x, y, k0, k12) = setup(seed, 40);
        let fit = reml_fit(&k0, &x, &y).unwrap();
        let v0 = k0.values() * fit.tau + DMatrix::identity(40, 40) * fit.sigma2;
        let vinv = v0.clone().cholesky().unwrap().inverse();
        let xtv = x.transpose() * &vinv;
        let beta = (&xtv * &x).try_inverse().unwrap() * (&xtv * &y);
        let r = &y - &x * &beta;
        let v = &vinv * &r;
        let g = if fit.tau > 0.0 { fit.tau } else { fit.sigma2 };
        let dense = g * v.dot(&(k12.values() * &v));
        let t0 = score_statistic(&y, &x, &fit, &k12).unwrap();
        assert!((t0 - dense).abs() <= 1e-8 * dense.abs().max(1.0), "{t0} vs {dense}");
        assert!((fit.beta[0] - beta[0]).abs() < 1e-8);
    }
}

#[test]
fn reml_optimum_beats_a_brute_force_grid() {
    let (x, y, k0, _) = setup(7, 30);
    let fit = reml_fit(&k0, &x, &y).unwrap();
    let best = restricted_log_likelihood(&k0, &x, &y, fit.tau, fit.sigma2).unwrap();
    assert!((best - fit.log_likelihood).abs() < 1e-8 * best.abs().max(1.0));
    for i in 0..25 {
        for j in 1..25 {
            let tau = 10f64.powf(-4.0 + 6.0 * i as f64 / 24.0);
            let s2 = 10f64.powf(-3.0 + 4.0 * j as f64 / 24.0);
            let ll = restricted_log_likelihood(&k0, &x, &y, tau, s2).unwrap();
            assert!(ll <= best + 1e-6, "({tau}, {s2}) gives {ll} > {best}");
        }
    }
}

#[test]
fn satterthwaite_tail_matches_chi_square() {
    let (x, y, k0, k12) = setup(3, 50);
    let fit = reml_fit(&k0, &x, &y).unwrap();
    for t in [0.01, 0.5, 2.0, 10.0] {
        let s = satterthwaite_pvalue(t, &fit, &k0, &k12).unwrap();
        let oracle = 1.0 - ChiSquared::new(s.nu).unwrap().cdf(t / s.kappa);
        assert!((s.p_value - oracle).abs() < 1e-10, "{} vs {oracle}", s.p_value);
        assert!((s.kappa * s.nu - s.mean).abs() < 1e-10 * s.mean);
    }
}

#[test]
fn null_mean_of_statistic_matches_monte_carlo() {
    // With P₀ held fixed, E[yᵀP₀K₁₂P₀y] = tr(P₀K₁₂) when y ~ N(Xβ, V₀).
    let (x, y, k0, k12) = setup(5, 30);
    let fit = reml_fit(&k0, &x, &y).unwrap();
    let s = satterthwaite_pvalue(1.0, &fit, &k0, &k12).unwrap();
    let chol = fit.v0.clone().cholesky().unwrap();
    let mut r = rng(99);
    let draws = 20000;
    let mut sum = 0.0;
    let mut sum2 = 0.0;
    for _ in 0..draws {
        let ys = &x * &fit.beta + chol.l() * normal_vector(&mut r, 30);
        let t = score_statistic(&ys, &x, &fit, &k12).unwrap();
        sum += t;
        sum2 += t * t;
    }
    let mean = sum / draws as f64;
    let se = ((sum2 / draws as f64 - mean * mean) / draws as f64).sqrt();
    assert!((mean - s.mean).abs() < 4.0 * se, "{mean} vs {} (se {se})", s.mean);
}

#[test]
fn loo_matches_refit_loop() {
    let mut r = rng(21);
    let n = 10;
    let z = normal_matrix(&mut r, n, 2);
    let k = kernel_matrix(&KernelSpec::matern(MaternNu::ThreeHalves, 1.3).unwrap(), &z).unwrap();
    let y = normal_vector(&mut r, n);
    let fit = fit_krr(&k, &y, 0.3).unwrap();
    let mut sq = 0.0;
    for i in 0..n {
        let keep: Vec<usize> = (0..n).filter(|&j| j != i).collect();
        let kk = k.values().select_rows(&keep).select_columns(&keep);
        let yk = DVector::from_iterator(n - 1, keep.iter().map(|&j| y[j]));
        let alpha = (kk + DMatrix::identity(n - 1, n - 1) * 0.3).lu().solve(&yk).unwrap();
        let pred: f64 = keep.iter().zip(alpha.iter()).map(|(&j, a)| k.values()[(i, j)] * a).sum();
        sq += (y[i] - pred).powi(2);
    }
    let oracle = (sq / n as f64).sqrt();
    assert!((loo_error(&fit, &y).unwrap() - oracle).abs() < 1e-10 * oracle);
    // n folds is leave-one-out
    assert!((kfold_error(&k, &y, 0.3, n, 4).unwrap() - oracle).abs() < 1e-10 * oracle);
}

#[test]
fn ensemble_kernel_reproduces_hat() {
    let mut r = rng(8);
    let k = random_psd(&mut r, 15, 6);
    let fit = fit_krr(&k, &normal_vector(&mut r, 15), 0.7).unwrap();
    let ek = stage3_ensemble_kernel(&fit.hat, &[0.7]).unwrap();
    let kh = ek.k_ens.values();
    let back = kh * (kh + DMatrix::identity(15, 15) * ek.lambda_k).try_inverse().unwrap();
    assert!(max_abs(&(back - &fit.hat)) < 1e-8);
}

#[test]
fn kernel_closed_forms() {
    let x = [0.3, -1.2];
    let y = [1.1, 0.4];
    let r: f64 = ((0.8f64).powi(2) + (1.6f64).powi(2)).sqrt();
    let s = 0.9;
    let rbf = eval_kernel(&KernelSpec::rbf(s).unwrap(), &x, &y).unwrap();
    assert!((rbf - (-r * r / (s * s)).exp()).abs() < 1e-14);
    let m12 = eval_kernel(&KernelSpec::matern(MaternNu::Half, s).unwrap(), &x, &y).unwrap();
    let a = s * r;
    assert!((m12 - (-a).exp()).abs() < 1e-14);
    let m52 = eval_kernel(&KernelSpec::matern(MaternNu::FiveHalves, s).unwrap(), &x, &y).unwrap();
    let a = 5f64.sqrt() * s * r;
    assert!((m52 - (1.0 + a + a * a / 3.0) * (-a).exp()).abs() < 1e-14);
}

#[test]
fn strong_interaction_is_detected() {
    let mut r = rng(12);
    let n = 100;
    let design = two_group_design(&mut r, n, 2);
    let z1 = &design.groups()[0].values;
    let z2 = &design.groups()[1].values;
    let y = DVector::from_fn(n, |i, _| {
        z1[(i, 0)] + z2[(i, 1)] + 2.0 * z1[(i, 0)] * z2[(i, 0)]
    }) + normal_vector(&mut r, n) * 0.3;
    let test = TestSpec::for_design(&design, "z1", "z2", NuisancePolicy::TwoGroup).unwrap();
    let config = TestConfig {
        ensemble: EnsembleConfig::default(),
        bridge: InteractionBridge::default(),
    };
    let res = test_interaction(&design, &y, &test, &ModelKernel::Fixed(KernelSpec::polynomial(2).unwrap()), &config)
        .unwrap();
    assert!(res.p_value < 1e-3, "p = {}", res.p_value);
    let additive = DVector::from_fn(n, |i, _| z1[(i, 0)] + z2[(i, 1)]) + normal_vector(&mut r, n) * 0.3;
    let res = test_interaction(&design, &additive, &test, &ModelKernel::Fixed(KernelSpec::Linear), &config).unwrap();
    assert!(res.p_value > 0.01, "p = {}", res.p_value);
}

#[test]
fn residual_identity_holds() {
    let (x, y, k0, _) = setup(11, 40);
    let fit = reml_fit(&k0, &x, &y).unwrap();
    let r = &y - &x * &fit.beta;
    let vinv_r = fit.v0.clone().cholesky().unwrap().solve(&r);
    let h = k0.values() * &vinv_r * fit.tau;
    let via_h = (&r - h) / fit.sigma2;
    let scale = vinv_r.amax();
    assert!((vinv_r - via_h).amax() < 1e-8 * scale);
}

#[test]
fn efficient_statistic_is_plain_at_an_interior_optimum() {
    for seed in 0..4 {
        let (x, _, k0, k12) = setup(seed, 50);
        let mut r = rng(300 + seed);
        let h = k0.values() * normal_vector(&mut r, 50);
        let y = &h / (h.norm() / 50f64.sqrt()) + normal_vector(&mut r, 50) * 0.5;
        let fit = reml_fit(&k0, &x, &y).unwrap();
        assert!(fit.tau > 0.0 && fit.sigma2 > 0.0);
        let t0 = score_statistic(&y, &x, &fit, &k12).unwrap();
        let te = efficient_statistic(t0, &y, &fit, &k0, &k12).unwrap();
        assert!((te - t0).abs() < 1e-4 * t0.max(1.0), "{te} vs {t0}");
    }
}

#[test]
fn efficient_statistic_matches_dense_scores_on_the_boundary() {
    // Pure noise with a smooth kernel usually puts τ̂ on the boundary.
    let mut found = false;
    for seed in 0..20 {
        let mut r = rng(500 + seed);
        let n = 40;
        let design = two_group_design(&mut r, n, 1);
        let test = TestSpec::for_design(&design, "z1", "z2", NuisancePolicy::TwoGroup).unwrap();
        let groups: Vec<_> = design
            .groups()
            .iter()
            .map(|g| trace_standardize(&kernel_matrix(&KernelSpec::rbf(2.0).unwrap(), &g.values).unwrap()).unwrap())
            .collect();
        let pair = build_null_and_interaction_kernels(&groups, &test).unwrap();
        let x = design.fixed_effects().clone();
        let y = normal_vector(&mut r, n);
        let fit = reml_fit(&pair.null, &x, &y).unwrap();
        if fit.tau > 0.0 {
            continue;
        }
        found = true;
        let p0 = &fit.p0;
        let (k0, k12) = (pair.null.values(), pair.interaction.values());
        let g = fit.sigma2;
        let d = [k12 * g, k0.clone(), DMatrix::identity(n, n)];
        let info = |a: &DMatrix<f64>, b: &DMatrix<f64>| 0.5 * (p0 * a * p0 * b).trace();
        let score = |a: &DMatrix<f64>| 0.5 * ((y.transpose() * p0 * a * p0 * &y)[(0, 0)] - (p0 * a).trace());
        let i_theta = DMatrix::from_fn(2, 2, |i, j| info(&d[i + 1], &d[j + 1]));
        let i_dt = DMatrix::from_fn(1, 2, |_, j| info(&d[0], &d[j + 1]));
        let u = DVector::from_fn(2, |i, _| score(&d[i + 1]));
        let u_eff = score(&d[0]) - (i_dt * i_theta.try_inverse().unwrap() * u)[(0, 0)];
        let m = g * (p0 * k12).trace();
        let dense = (2.0 * u_eff + m).max(0.0);
        let t0 = score_statistic(&y, &x, &fit, &pair.interaction).unwrap();
        let te = efficient_statistic(t0, &y, &fit, &pair.null, &pair.interaction).unwrap();
        assert!((te - dense).abs() < 1e-8 * dense.max(1.0), "{te} vs {dense}");
    }
    assert!(found, "no boundary fit among the seeds");
}
