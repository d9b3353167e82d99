//! Kernel ridge regression: fits, hat matrices and cross-validation.
//!
//! All fits for one kernel share a single symmetric eigendecomposition
//! `K = U diag(v) Uᵀ`, so the hat matrix at any `λ` is
//! `U diag(v / (v + λ)) Uᵀ` and a whole λ grid costs `O(n²)` per point.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::KernelMatrix;
use crate::linalg::{self, SymEigen, PSD_TOLERANCE};

/// Diagonal hat entries at or above this make leave-one-out undefined.
const LOO_HAT_LIMIT: f64 = 1.0 - 1e-10;

/// Cross-validation flavour used to tune `λ`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum CvScheme {
    /// Closed-form leave-one-out.
    #[default]
    Loo,
    /// Seeded k-fold.
    Kfold {
        k: usize,
        #[serde(default)]
        seed: u64,
    },
}

#[derive(Debug, Clone)]
pub struct KrrFit {
    /// Dual coefficients `(K + λI)⁻¹ y`.
    pub alpha: DVector<f64>,
    /// `K (K + λI)⁻¹`
    pub hat: DMatrix<f64>,
    pub fitted: DVector<f64>,
    pub lambda: f64,
    /// Leave-one-out RMS error, `+∞` when undefined.
    pub cv_error: f64,
}

/// A kernel matrix prepared for repeated ridge fits.
#[derive(Debug, Clone)]
pub struct SpectralKrr {
    kernel: DMatrix<f64>,
    eigen: SymEigen,
    u_squared: DMatrix<f64>,
    y: DVector<f64>,
    uty: DVector<f64>,
}

impl SpectralKrr {
    pub fn new(k: &KernelMatrix, y: &DVector<f64>) -> Result<Self> {
        if k.n() != y.len() {
            return Err(Error::DimensionMismatch(format!(
                "kernel is {}x{} but y has {} entries",
                k.n(),
                k.n(),
                y.len()
            )));
        }
        linalg::check_finite("outcome", y.as_slice())?;
        let mut eigen = SymEigen::new(k.values());
        let max = eigen.max_value().max(0.0);
        if eigen.min_value() < -PSD_TOLERANCE * max.max(f64::MIN_POSITIVE) {
            return Err(Error::Numerical(format!(
                "kernel matrix is not positive semi-definite (min eigenvalue {:e}, max {:e})",
                eigen.min_value(),
                max
            )));
        }
        eigen.values.iter_mut().for_each(|v| *v = v.max(0.0));
        let u_squared = eigen.vectors.map(|u| u * u);
        let uty = eigen.rotate(y);
        Ok(Self {
            kernel: k.values().clone(),
            eigen,
            u_squared,
            y: y.clone(),
            uty,
        })
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn eigen(&self) -> &SymEigen {
        &self.eigen
    }

    fn shrinkage(&self, lambda: f64) -> Vec<f64> {
        self.eigen.values.iter().map(|&v| v / (v + lambda)).collect()
    }

    pub fn fitted(&self, lambda: f64) -> DVector<f64> {
        let s = self.shrinkage(lambda);
        let coef = DVector::from_iterator(self.n(), self.uty.iter().zip(&s).map(|(a, b)| a * b));
        &self.eigen.vectors * coef
    }

    pub fn alpha(&self, lambda: f64) -> DVector<f64> {
        let coef = DVector::from_iterator(
            self.n(),
            self.uty
                .iter()
                .zip(self.eigen.values.iter())
                .map(|(a, v)| a / (v + lambda)),
        );
        &self.eigen.vectors * coef
    }

    pub fn hat_diagonal(&self, lambda: f64) -> DVector<f64> {
        let s = DVector::from_vec(self.shrinkage(lambda));
        &self.u_squared * s
    }

    pub fn hat(&self, lambda: f64) -> DMatrix<f64> {
        linalg::spectral_product(&self.eigen.vectors, &self.shrinkage(lambda))
    }

    pub fn fit(&self, lambda: f64) -> Result<KrrFit> {
        check_lambda(lambda)?;
        let fitted = self.fitted(lambda);
        let cv_error = loo_from_parts(&self.y, &fitted, &self.hat_diagonal(lambda))
            .map(|r| linalg::rms(&r))
            .unwrap_or(f64::INFINITY);
        Ok(KrrFit {
            alpha: self.alpha(lambda),
            hat: self.hat(lambda),
            fitted,
            lambda,
            cv_error,
        })
    }

    /// Leave-one-out residuals `(y_i − ĥ_i) / (1 − A_ii)`.
    pub fn loo_residuals(&self, lambda: f64) -> Result<DVector<f64>> {
        check_lambda(lambda)?;
        loo_from_parts(&self.y, &self.fitted(lambda), &self.hat_diagonal(lambda))
    }

    /// Held-out residuals under the given scheme.
    pub fn cv_residuals(&self, lambda: f64, cv: CvScheme) -> Result<DVector<f64>> {
        match cv {
            CvScheme::Loo => self.loo_residuals(lambda),
            CvScheme::Kfold { k, seed } => kfold_residuals_dense(&self.kernel, &self.y, lambda, k, seed),
        }
    }

    /// Picks the grid `λ` with the smallest CV error, ties to the larger `λ`.
    pub fn tune(&self, grid: &[f64], cv: CvScheme) -> Result<TunedLambda> {
        if grid.is_empty() {
            return Err(Error::InvalidParameter("lambda grid is empty".into()));
        }
        let mut best: Option<TunedLambda> = None;
        for &lambda in grid {
            check_lambda(lambda)?;
            let residuals = match self.cv_residuals(lambda, cv) {
                Ok(r) => r,
                // interpolating fits have no leave-one-out error
                Err(Error::Numerical(_)) => continue,
                Err(e) => return Err(e),
            };
            let err = linalg::rms(&residuals);
            let better = match &best {
                None => true,
                Some(b) => err < b.cv_error || (err == b.cv_error && lambda > b.lambda),
            };
            if better {
                best = Some(TunedLambda {
                    lambda,
                    cv_error: err,
                    residuals,
                });
            }
        }
        best.ok_or_else(|| Error::Numerical("no grid lambda gave a finite CV error".into()))
    }
}

/// Outcome of a λ search.
#[derive(Debug, Clone)]
pub struct TunedLambda {
    pub lambda: f64,
    pub cv_error: f64,
    /// Per-observation held-out residuals at the chosen `λ`.
    pub residuals: DVector<f64>,
}

fn check_lambda(lambda: f64) -> Result<()> {
    if lambda.is_finite() && lambda > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!(
            "lambda must be positive and finite (got {lambda})"
        )))
    }
}

fn loo_from_parts(y: &DVector<f64>, fitted: &DVector<f64>, diag: &DVector<f64>) -> Result<DVector<f64>> {
    let mut out = DVector::zeros(y.len());
    for i in 0..y.len() {
        if diag[i] >= LOO_HAT_LIMIT {
            return Err(Error::Numerical(format!(
                "hat diagonal A[{i},{i}] = {} is too close to 1; leave-one-out is undefined",
                diag[i]
            )));
        }
        out[i] = (y[i] - fitted[i]) / (1.0 - diag[i]);
    }
    Ok(out)
}

/// Ridge fit `α = (K + λI)⁻¹ y`, `A = K(K + λI)⁻¹`.
pub fn fit_krr(k: &KernelMatrix, y: &DVector<f64>, lambda: f64) -> Result<KrrFit> {
    check_lambda(lambda)?;
    SpectralKrr::new(k, y)?.fit(lambda)
}

/// Root-mean leave-one-out residual of a linear smoother.
pub fn loo_error(fit: &KrrFit, y: &DVector<f64>) -> Result<f64> {
    if fit.hat.nrows() != y.len() || fit.fitted.len() != y.len() {
        return Err(Error::DimensionMismatch("fit and outcome lengths differ".into()));
    }
    let diag = fit.hat.diagonal();
    loo_from_parts(y, &fit.fitted, &diag).map(|r| linalg::rms(&r))
}

/// Held-out residuals of seeded k-fold cross-validation.
pub fn kfold_residuals(k: &KernelMatrix, y: &DVector<f64>, lambda: f64, folds: usize, seed: u64) -> Result<DVector<f64>> {
    check_lambda(lambda)?;
    if k.n() != y.len() {
        return Err(Error::DimensionMismatch("kernel and outcome lengths differ".into()));
    }
    kfold_residuals_dense(k.values(), y, lambda, folds, seed)
}

/// RMS k-fold cross-validation error.
pub fn kfold_error(k: &KernelMatrix, y: &DVector<f64>, lambda: f64, folds: usize, seed: u64) -> Result<f64> {
    kfold_residuals(k, y, lambda, folds, seed).map(|r| linalg::rms(&r))
}

/// Fold label of each observation: seeded shuffle, then round-robin.
pub fn fold_assignment(n: usize, folds: usize, seed: u64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);
    let mut label = vec![0; n];
    for (pos, &i) in order.iter().enumerate() {
        label[i] = pos % folds;
    }
    label
}

fn kfold_residuals_dense(k: &DMatrix<f64>, y: &DVector<f64>, lambda: f64, folds: usize, seed: u64) -> Result<DVector<f64>> {
    let n = y.len();
    if folds < 2 || folds > n {
        return Err(Error::InvalidParameter(format!(
            "k-fold needs 2 <= k <= n (got k = {folds}, n = {n})"
        )));
    }
    let label = fold_assignment(n, folds, seed);
    let mut residuals = DVector::zeros(n);
    for fold in 0..folds {
        let test: Vec<usize> = (0..n).filter(|&i| label[i] == fold).collect();
        let train: Vec<usize> = (0..n).filter(|&i| label[i] != fold).collect();
        let mut k_train = k.select_rows(&train).select_columns(&train);
        for i in 0..train.len() {
            k_train[(i, i)] += lambda;
        }
        let y_train = DVector::from_iterator(train.len(), train.iter().map(|&i| y[i]));
        let chol = k_train.cholesky().ok_or_else(|| {
            Error::Numerical("K + λI is not positive definite; kernel matrix is not PSD".into())
        })?;
        let alpha = chol.solve(&y_train);
        let k_cross = k.select_rows(&test).select_columns(&train);
        let pred = k_cross * alpha;
        for (t, &i) in test.iter().enumerate() {
            residuals[i] = y[i] - pred[t];
        }
    }
    Ok(residuals)
}

/// Tuned `λ` and its CV error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LambdaChoice {
    pub lambda: f64,
    pub cv_error: f64,
}

/// Grid search for `λ`; ties go to the larger `λ`.
pub fn tune_lambda(k: &KernelMatrix, y: &DVector<f64>, grid: &[f64], cv: CvScheme) -> Result<LambdaChoice> {
    if grid.is_empty() {
        return Err(Error::InvalidParameter("lambda grid is empty".into()));
    }
    let t = SpectralKrr::new(k, y)?.tune(grid, cv)?;
    Ok(LambdaChoice {
        lambda: t.lambda,
        cv_error: t.cv_error,
    })
}
