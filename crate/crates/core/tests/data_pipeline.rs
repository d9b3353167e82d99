mod common;

use common::*;
use cvek::ensemble::{rbf_library, EnsembleConfig};
use cvek::io::{columns_to_csv, load_dataset, DataConfig, GroupConfig};
use cvek::pca::pca;
use cvek::surface::{surface_grid, SurfaceModel};
use cvek::{GroupedDesign, ModelKernel, NuisancePolicy, TestSpec};
use nalgebra::{DMatrix, DVector};

fn groups() -> Vec<GroupConfig> {
    vec![
        GroupConfig {
            name: "a".into(),
            columns: vec!["a1".into(), "a2".into()],
        },
        GroupConfig {
            name: "b".into(),
            columns: vec!["b1".into(), "b2".into()],
        },
    ]
}

#[test]
fn csv_round_trip_preserves_values() {
    let mut r = rng(4);
    let cols: Vec<Vec<f64>> = (0..5)
        .map(|_| normal_vector(&mut r, 30).iter().map(|v| v * 1e3 / 7.0).collect())
        .collect();
    let named = ["y", "a1", "a2", "b1", "b2"];
    let table: Vec<(&str, &[f64])> = named.iter().zip(&cols).map(|(n, c)| (*n, c.as_slice())).collect();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("d.csv");
    std::fs::write(&path, columns_to_csv(&table).unwrap()).unwrap();
    let data = DataConfig {
        path: None,
        outcome: "y".into(),
        fixed_effects: vec![],
        intercept: true,
    };
    let loaded = load_dataset(&path, &data, &groups()).unwrap();
    assert_eq!(loaded.y.as_slice(), cols[0].as_slice());
    let g = &loaded.design.groups()[1];
    let raw = g.to_raw(&g.values);
    for i in 0..30 {
        for j in 0..2 {
            let want = cols[3 + j][i];
            assert!((raw[(i, j)] - want).abs() <= 1e-12 * want.abs().max(1.0));
        }
    }
}

#[test]
fn uncorrelated_columns_share_variance_equally() {
    let mut r = rng(2);
    let p = pca(&normal_matrix(&mut r, 5000, 3)).unwrap();
    assert_eq!(p.components(), 3);
    for f in &p.variance_explained {
        assert!((f - 1.0 / 3.0).abs() < 0.1, "{f}");
    }
    assert!((p.variance_explained.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    assert!(p.variance_explained.windows(2).all(|w| w[0] >= w[1]));
}

/// Two groups whose first PC tracks a latent factor.
fn latent_design(seed: u64, n: usize) -> (GroupedDesign, DVector<f64>, DVector<f64>) {
    let mut r = rng(seed);
    let u1 = normal_vector(&mut r, n);
    let u2 = normal_vector(&mut r, n);
    let noise = normal_matrix(&mut r, n, 4) * 0.3;
    let za = DMatrix::from_fn(n, 2, |i, j| u1[i] + noise[(i, j)]);
    let zb = DMatrix::from_fn(n, 2, |i, j| u2[i] + noise[(i, 2 + j)]);
    let design = GroupedDesign::with_intercept(vec![("a".into(), za), ("b".into(), zb)]).unwrap();
    (design, u1, u2)
}

#[test]
fn zero_interaction_weight_gives_an_additive_surface() {
    let (design, u1, u2) = latent_design(6, 120);
    let mut r = rng(60);
    let y = DVector::from_fn(120, |i, _| u1[i].sin() + 0.5 * u2[i] * u2[i]) + normal_vector(&mut r, 120) * 0.2;
    let test = TestSpec::for_design(&design, "a", "b", NuisancePolicy::TwoGroup).unwrap();
    let model = ModelKernel::Ensemble(rbf_library());
    let specs = model.resolve(&design, &test, &y).unwrap();
    let fit = SurfaceModel::fit(&design, &y, &test, &specs, &EnsembleConfig::default(), 0.0).unwrap();
    let grid = surface_grid(&fit, "a", 0, "b", 0, 12).unwrap();
    let v = &grid.values;
    for i in 0..12 {
        for j in 1..12 {
            let diff = v[i][j] - v[i][0];
            assert!((diff - (v[0][j] - v[0][0])).abs() < 1e-6);
        }
    }
    let corners = surface_grid(&fit, "a", 0, "b", 0, 2).unwrap();
    assert_eq!(corners.values.len(), 2);
    assert_eq!(corners.values[0].len(), 2);
}

#[test]
fn bilinear_truth_gives_positive_mixed_differences() {
    let (design, u1, u2) = latent_design(8, 200);
    let mut r = rng(80);
    let y = DVector::from_fn(200, |i, _| u1[i] * u2[i]) + normal_vector(&mut r, 200) * 0.3;
    let test = TestSpec::for_design(&design, "a", "b", NuisancePolicy::TwoGroup).unwrap();
    let model = ModelKernel::Ensemble(rbf_library());
    let specs = model.resolve(&design, &test, &y).unwrap();
    let fit = SurfaceModel::fit(&design, &y, &test, &specs, &EnsembleConfig::default(), 1.0).unwrap();
    let g = surface_grid(&fit, "a", 0, "b", 0, 10).unwrap();
    let v = &g.values;
    let mut positive = 0;
    let mut total = 0;
    for i in 0..9 {
        for j in 0..9 {
            let mixed = v[i + 1][j + 1] - v[i + 1][j] - v[i][j + 1] + v[i][j];
            total += 1;
            if mixed > 0.0 {
                positive += 1;
            }
        }
    }
    assert!(positive as f64 >= 0.9 * total as f64, "{positive}/{total}");
}
