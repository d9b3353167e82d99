#![allow(dead_code)]

use cvek::kernel::{KernelMatrix, KernelSource};
use cvek::GroupedDesign;
use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn normal_matrix(rng: &mut ChaCha8Rng, r: usize, c: usize) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| StandardNormal.sample(rng))
}

pub fn normal_vector(rng: &mut ChaCha8Rng, n: usize) -> DVector<f64> {
    DVector::from_fn(n, |_, _| StandardNormal.sample(rng))
}

/// Random PSD matrix `G Gᵀ` of rank `min(n, rank)`.
pub fn random_psd(rng: &mut ChaCha8Rng, n: usize, rank: usize) -> KernelMatrix {
    let g = normal_matrix(rng, n, rank);
    KernelMatrix::from_matrix(&g * g.transpose(), KernelSource::Composition("random".into())).unwrap()
}

pub fn km(m: DMatrix<f64>) -> KernelMatrix {
    KernelMatrix::from_matrix(m, KernelSource::Composition("test".into())).unwrap()
}

/// Two groups of `p` standard normal columns with intercept-only fixed effects.
pub fn two_group_design(rng: &mut ChaCha8Rng, n: usize, p: usize) -> GroupedDesign {
    GroupedDesign::with_intercept(vec![
        ("z1".into(), normal_matrix(rng, n, p)),
        ("z2".into(), normal_matrix(rng, n, p)),
    ])
    .unwrap()
}

pub fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0f64, |a, v| a.max(v.abs()))
}
