//! Cross-validated ensemble of kernels.
//!
//! 1. Each base kernel's null matrix is trace-standardized and its ridge
//!    penalty tuned by cross-validation.
//! 2. Simplex weights minimize the cross-validation error of the weighted
//!    predictor.
//! 3. The ensemble hat matrix `Â = Σ u_d A_d` is inverted spectrally into an
//!    ensemble kernel `K̂` with `K̂(K̂ + λ_K I)⁻¹ = Â`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::design::GroupedDesign;
use crate::error::{Error, Result};
use crate::interaction::{self, TestSpec};
use crate::kernel::{trace_standardize, KernelMatrix, KernelSource, KernelSpec};
use crate::krr::{CvScheme, SpectralKrr};
use crate::linalg::{self, SymEigen};

/// Eigenvalues of `Â` are clamped to at most this before inversion.
pub const HAT_EIGEN_CLAMP: f64 = 1.0 - 1e-10;
const WEIGHT_TOLERANCE: f64 = 1e-10;
const MAX_WEIGHT_ITERATIONS: usize = 200_000;

/// What Stage 2 treats as the per-kernel cross-validation error.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ErrorMode {
    /// Per-observation held-out residual vectors (stacking objective).
    #[default]
    Residuals,
    /// One RMS error per kernel.
    Scalar,
}

/// Constraint set for the Stage 2 weights.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SimplexKind {
    /// `u ≥ 0, Σu = 1`
    #[default]
    Convex,
    /// `u ≥ 0, ‖u‖₂ = 1`
    UnitSphere,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnsembleConfig {
    pub lambda_grid: Vec<f64>,
    pub cv: CvScheme,
    pub error_mode: ErrorMode,
    pub simplex: SimplexKind,
}

impl Default for EnsembleConfig {
    fn default() -> Self {
        Self {
            lambda_grid: default_lambda_grid(),
            cv: CvScheme::Loo,
            error_mode: ErrorMode::Residuals,
            simplex: SimplexKind::Convex,
        }
    }
}

/// 30 points log-spaced over `[1e-5, 1e2]`.
pub fn default_lambda_grid() -> Vec<f64> {
    linalg::log_grid(1e-5, 1e2, 30)
}

/// Tuned single-kernel fit from Stage 1.
#[derive(Debug, Clone)]
pub struct Candidate {
    pub lambda: f64,
    pub cv_error: f64,
    pub residuals: DVector<f64>,
    pub hat: DMatrix<f64>,
    pub alpha: DVector<f64>,
}

fn fit_candidate(kernel: &KernelMatrix, y: &DVector<f64>, config: &EnsembleConfig) -> Result<Candidate> {
    let k = trace_standardize(kernel)?;
    let krr = SpectralKrr::new(&k, y)?;
    let tuned = krr.tune(&config.lambda_grid, config.cv)?;
    Ok(Candidate {
        lambda: tuned.lambda,
        cv_error: tuned.cv_error,
        residuals: tuned.residuals,
        hat: krr.hat(tuned.lambda),
        alpha: krr.alpha(tuned.lambda),
    })
}

/// Stage 1 on precomputed null kernel matrices.
pub fn stage1_from_kernels(kernels: &[KernelMatrix], y: &DVector<f64>, config: &EnsembleConfig) -> Result<Vec<Candidate>> {
    if kernels.is_empty() {
        return Err(Error::InvalidParameter("kernel library is empty".into()));
    }
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        kernels.par_iter().map(|k| fit_candidate(k, y, config)).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        kernels.iter().map(|k| fit_candidate(k, y, config)).collect()
    }
}

/// Stage 1: one tuned fit per library kernel on the null kernel structure.
pub fn stage1_candidates(
    library: &[KernelSpec],
    design: &GroupedDesign,
    test: &TestSpec,
    y: &DVector<f64>,
    config: &EnsembleConfig,
) -> Result<Vec<Candidate>> {
    if library.is_empty() {
        return Err(Error::InvalidParameter("kernel library is empty".into()));
    }
    let kernels = library
        .iter()
        .map(|spec| {
            let specs = vec![*spec; design.groups().len()];
            interaction::build_from_specs(design, test, &specs).map(|p| p.null)
        })
        .collect::<Result<Vec<_>>>()?;
    stage1_from_kernels(&kernels, y, config)
}

/// Stage 2 with scalar errors on the convex simplex: all weight on the
/// smallest error, split equally among exact ties.
pub fn stage2_weights(cv_errors: &[f64]) -> Result<Vec<f64>> {
    check_scalar_errors(cv_errors)?;
    let min = cv_errors.iter().copied().fold(f64::INFINITY, f64::min);
    let ties = cv_errors.iter().filter(|&&e| e == min).count() as f64;
    Ok(cv_errors
        .iter()
        .map(|&e| if e == min { 1.0 / ties } else { 0.0 })
        .collect())
}

fn check_scalar_errors(cv_errors: &[f64]) -> Result<()> {
    if cv_errors.is_empty() {
        return Err(Error::InvalidParameter("no cross-validation errors".into()));
    }
    if let Some(e) = cv_errors.iter().find(|e| !(**e >= 0.0)) {
        return Err(Error::InvalidParameter(format!(
            "cross-validation errors must be nonnegative (got {e})"
        )));
    }
    Ok(())
}

/// Euclidean projection onto `{u ≥ 0, Σu = 1}`.
pub fn project_onto_simplex(v: &[f64]) -> Vec<f64> {
    let mut sorted = v.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut cumulative = 0.0;
    let mut theta = 0.0;
    for (i, &s) in sorted.iter().enumerate() {
        cumulative += s;
        let t = (cumulative - 1.0) / (i + 1) as f64;
        if s - t > 0.0 {
            theta = t;
        }
    }
    v.iter().map(|&x| (x - theta).max(0.0)).collect()
}

fn project_onto_sphere(v: &[f64]) -> Vec<f64> {
    let mut u: Vec<f64> = v.iter().map(|x| x.max(0.0)).collect();
    let norm = u.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        u.iter_mut().for_each(|x| *x /= norm);
    } else {
        let j = v
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .map(|(j, _)| j)
            .unwrap_or(0);
        u = vec![0.0; v.len()];
        u[j] = 1.0;
    }
    u
}

/// Gram matrix `EᵀE` of the error vectors.
fn gram(residuals: &[DVector<f64>]) -> Result<DMatrix<f64>> {
    let n = residuals
        .first()
        .ok_or_else(|| Error::InvalidParameter("no cross-validation residuals".into()))?
        .len();
    if residuals.iter().any(|r| r.len() != n) {
        return Err(Error::DimensionMismatch("residual vectors differ in length".into()));
    }
    let d = residuals.len();
    Ok(DMatrix::from_fn(d, d, |i, j| residuals[i].dot(&residuals[j])))
}

/// Minimizes `uᵀGu` over the constraint set by accelerated projected gradient,
/// starting from equal weights.
fn projected_gradient(g: &DMatrix<f64>, project: impl Fn(&[f64]) -> Vec<f64>) -> Vec<f64> {
    let d = g.nrows();
    let start = project(&vec![1.0 / d as f64; d]);
    let lipschitz = 2.0 * SymEigen::new(g).max_value();
    if !(lipschitz > 0.0) {
        return start;
    }
    let step = 1.0 / lipschitz;
    let objective = |u: &[f64]| {
        let v = DVector::from_column_slice(u);
        v.dot(&(g * &v))
    };
    let mut u = start.clone();
    let mut momentum = start;
    let mut t = 1.0f64;
    let mut f_prev = objective(&u);
    for _ in 0..MAX_WEIGHT_ITERATIONS {
        let m = DVector::from_column_slice(&momentum);
        let grad = g * &m * 2.0;
        let trial: Vec<f64> = (0..d).map(|i| momentum[i] - step * grad[i]).collect();
        let next = project(&trial);
        let f_next = objective(&next);
        let change = next
            .iter()
            .zip(&u)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        if f_next > f_prev {
            // restart the momentum when the objective goes up
            t = 1.0;
            momentum = u.clone();
            continue;
        }
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        momentum = (0..d)
            .map(|i| next[i] + (t - 1.0) / t_next * (next[i] - u[i]))
            .collect();
        t = t_next;
        u = next;
        f_prev = f_next;
        if change < WEIGHT_TOLERANCE {
            break;
        }
    }
    u
}

/// Stage 2 with error vectors: simplex-constrained least squares
/// `min ‖Σ u_d ε_d‖²`.
pub fn stage2_weights_residuals(residuals: &[DVector<f64>]) -> Result<Vec<f64>> {
    let g = gram(residuals)?;
    if residuals.len() == 1 {
        return Ok(vec![1.0]);
    }
    Ok(projected_gradient(&g, project_onto_simplex))
}

/// Stage 2 dispatch on error mode and constraint set.
pub fn stage2(candidates: &[Candidate], config: &EnsembleConfig) -> Result<Vec<f64>> {
    let errors: Vec<f64> = candidates.iter().map(|c| c.cv_error).collect();
    match (config.error_mode, config.simplex) {
        (ErrorMode::Scalar, SimplexKind::Convex) => stage2_weights(&errors),
        (ErrorMode::Residuals, SimplexKind::Convex) => {
            let r: Vec<DVector<f64>> = candidates.iter().map(|c| c.residuals.clone()).collect();
            stage2_weights_residuals(&r)
        }
        (ErrorMode::Scalar, SimplexKind::UnitSphere) => {
            check_scalar_errors(&errors)?;
            let j = errors
                .iter()
                .enumerate()
                .min_by(|a, b| a.1.total_cmp(b.1))
                .map(|(j, _)| j)
                .unwrap_or(0);
            let mut u = vec![0.0; errors.len()];
            u[j] = 1.0;
            Ok(u)
        }
        (ErrorMode::Residuals, SimplexKind::UnitSphere) => {
            let r: Vec<DVector<f64>> = candidates.iter().map(|c| c.residuals.clone()).collect();
            let g = gram(&r)?;
            Ok(projected_gradient(&g, project_onto_sphere))
        }
    }
}

/// Ensemble kernel recovered from an ensemble hat matrix.
#[derive(Debug, Clone)]
pub struct EnsembleKernel {
    pub k_ens: KernelMatrix,
    pub lambda_k: f64,
    /// Eigendecomposition of `K̂` (shares eigenvectors with `Â`).
    pub eigen: SymEigen,
}

/// Stage 3: `K̂ = λ_K U diag(δ/(1 − δ)) Uᵀ` with
/// `λ_K = min(1, (Σ δ/(1 − δ))⁻¹, min_d λ̂_d)`.
pub fn stage3_ensemble_kernel(hat_ens: &DMatrix<f64>, lambdas: &[f64]) -> Result<EnsembleKernel> {
    if !hat_ens.is_square() {
        return Err(Error::DimensionMismatch("ensemble hat matrix is not square".into()));
    }
    linalg::check_finite("ensemble hat matrix", hat_ens.as_slice())?;
    let asym = (hat_ens - hat_ens.transpose()).abs().max();
    if asym > 1e-10 {
        return Err(Error::Numerical(format!(
            "ensemble hat matrix is not symmetric (max asymmetry {asym:e})"
        )));
    }
    let eig = SymEigen::new(hat_ens);
    if eig.max_value() > 1.0 + 1e-8 {
        return Err(Error::Numerical(format!(
            "ensemble hat matrix has eigenvalue {} >= 1",
            eig.max_value()
        )));
    }
    if eig.min_value() < -1e-8 {
        return Err(Error::Numerical(format!(
            "ensemble hat matrix has negative eigenvalue {}",
            eig.min_value()
        )));
    }
    let ratios: Vec<f64> = eig
        .values
        .iter()
        .map(|&d| {
            let d = d.clamp(0.0, HAT_EIGEN_CLAMP);
            d / (1.0 - d)
        })
        .collect();
    let total: f64 = ratios.iter().sum();
    let min_lambda = lambdas.iter().copied().fold(f64::INFINITY, f64::min);
    let lambda_k = 1.0f64.min(1.0 / total).min(min_lambda);
    let values: Vec<f64> = ratios.iter().map(|r| lambda_k * r).collect();
    let k = linalg::spectral_product(&eig.vectors, &values);
    let eigen = SymEigen {
        values: DVector::from_vec(values),
        vectors: eig.vectors,
    };
    Ok(EnsembleKernel {
        k_ens: KernelMatrix::from_parts(k, KernelSource::Composition("ensemble".into()), false),
        lambda_k,
        eigen,
    })
}

/// Full ensemble fit.
#[derive(Debug, Clone)]
pub struct EnsembleFit {
    /// Display label of each base kernel.
    pub library: Vec<String>,
    pub lambdas: Vec<f64>,
    pub cv_errors: Vec<f64>,
    pub weights: Vec<f64>,
    /// `Â = Σ u_d A_d`
    pub hat: DMatrix<f64>,
    pub k_ens: KernelMatrix,
    pub lambda_k: f64,
    pub eigen: SymEigen,
    /// Dual coefficients of each base fit (on its trace-standardized kernel).
    pub alphas: Vec<DVector<f64>>,
}

impl EnsembleFit {
    /// `Σ u_d ε̂_d` under the scalar reading.
    pub fn ensemble_cv_error(&self) -> f64 {
        self.weights.iter().zip(&self.cv_errors).map(|(u, e)| u * e).sum()
    }
}

/// Runs all three stages on precomputed null kernel matrices.
pub fn cvek_from_kernels(
    labels: Vec<String>,
    kernels: &[KernelMatrix],
    y: &DVector<f64>,
    config: &EnsembleConfig,
) -> Result<EnsembleFit> {
    if labels.len() != kernels.len() {
        return Err(Error::DimensionMismatch("one label per kernel expected".into()));
    }
    let candidates = stage1_from_kernels(kernels, y, config)?;
    let weights = stage2(&candidates, config)?;
    let n = y.len();
    let mut hat = DMatrix::zeros(n, n);
    for (c, &u) in candidates.iter().zip(&weights) {
        if u != 0.0 {
            hat += &c.hat * u;
        }
    }
    linalg::symmetrize(&mut hat);
    let lambdas: Vec<f64> = candidates.iter().map(|c| c.lambda).collect();
    let ek = stage3_ensemble_kernel(&hat, &lambdas)?;
    Ok(EnsembleFit {
        library: labels,
        cv_errors: candidates.iter().map(|c| c.cv_error).collect(),
        lambdas,
        weights,
        hat,
        k_ens: ek.k_ens,
        lambda_k: ek.lambda_k,
        eigen: ek.eigen,
        alphas: candidates.into_iter().map(|c| c.alpha).collect(),
    })
}

/// Ensemble fit of a kernel library on the null structure of `test`.
pub fn cvek(
    library: &[KernelSpec],
    design: &GroupedDesign,
    test: &TestSpec,
    y: &DVector<f64>,
    config: &EnsembleConfig,
) -> Result<EnsembleFit> {
    if library.is_empty() {
        return Err(Error::InvalidParameter("kernel library is empty".into()));
    }
    let kernels = library
        .iter()
        .map(|spec| {
            let specs = vec![*spec; design.groups().len()];
            interaction::build_from_specs(design, test, &specs).map(|p| p.null)
        })
        .collect::<Result<Vec<_>>>()?;
    let labels = library.iter().map(|s| s.label()).collect();
    cvek_from_kernels(labels, &kernels, y, config)
}

/// The RBF library with `log σ ∈ {−2, −1, 0, 1, 2}`.
pub fn rbf_library() -> Vec<KernelSpec> {
    (-2..=2)
        .map(|e| KernelSpec::Rbf {
            sigma: (e as f64).exp(),
        })
        .collect()
}

/// The neural-network library with `σ ∈ {0.1, 1, 10, 50}`.
pub fn nn_library() -> Vec<KernelSpec> {
    [0.1, 1.0, 10.0, 50.0]
        .into_iter()
        .map(|sigma| KernelSpec::NeuralNetwork { sigma })
        .collect()
}
