//! Small dense linear-algebra helpers shared by the fitting modules.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

/// Relative tolerance used for positive semi-definiteness checks.
pub const PSD_TOLERANCE: f64 = 1e-8;

/// Eigendecomposition `M = U diag(values) Uᵀ` of a symmetric matrix.
#[derive(Debug, Clone)]
pub struct SymEigen {
    pub values: DVector<f64>,
    pub vectors: DMatrix<f64>,
}

impl SymEigen {
    pub fn new(m: &DMatrix<f64>) -> Self {
        let eig = SymmetricEigen::new(m.clone());
        Self {
            values: eig.eigenvalues,
            vectors: eig.eigenvectors,
        }
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn max_value(&self) -> f64 {
        self.values.max()
    }

    pub fn min_value(&self) -> f64 {
        self.values.min()
    }

    /// `U diag(f(values)) Uᵀ`.
    pub fn reconstruct_with(&self, f: impl Fn(f64) -> f64) -> DMatrix<f64> {
        let d: Vec<f64> = self.values.iter().map(|&v| f(v)).collect();
        spectral_product(&self.vectors, &d)
    }

    /// `Uᵀ v`
    pub fn rotate(&self, v: &DVector<f64>) -> DVector<f64> {
        self.vectors.tr_mul(v)
    }
}

/// `U diag(d) Uᵀ`, exactly symmetric.
pub fn spectral_product(u: &DMatrix<f64>, d: &[f64]) -> DMatrix<f64> {
    let mut scaled = u.clone();
    for (j, mut col) in scaled.column_iter_mut().enumerate() {
        col *= d[j];
    }
    let mut out = &scaled * u.transpose();
    symmetrize(&mut out);
    out
}

/// Replace `M` by `(M + Mᵀ)/2`; afterwards `M_ij == M_ji` bit-for-bit.
pub fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for j in 0..n {
        for i in (j + 1)..n {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

/// `tr(A B)` without forming the product.
pub fn trace_of_product(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    debug_assert_eq!(a.ncols(), b.nrows());
    debug_assert_eq!(a.nrows(), b.ncols());
    let mut acc = 0.0;
    for i in 0..a.nrows() {
        for k in 0..a.ncols() {
            acc += a[(i, k)] * b[(k, i)];
        }
    }
    acc
}

/// Ratio `λ_min / λ_max` of a symmetric matrix (0 for the zero matrix).
pub fn min_eigen_ratio(m: &DMatrix<f64>) -> f64 {
    let eig = SymEigen::new(m);
    let max = eig.max_value();
    let min = eig.min_value();
    if max <= 0.0 {
        if min == 0.0 && max == 0.0 {
            0.0
        } else {
            min / max.abs().max(f64::MIN_POSITIVE)
        }
    } else {
        min / max
    }
}

/// True when every eigenvalue is at least `-tol · λ_max`.
pub fn is_psd(m: &DMatrix<f64>, tol: f64) -> bool {
    let eig = SymEigen::new(m);
    let max = eig.max_value().max(0.0);
    eig.min_value() >= -tol * max
}

pub fn check_finite(name: &str, values: &[f64]) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(name.to_string()))
    }
}

/// Least-squares residual `y - X (XᵀX)⁻¹ Xᵀ y`.
///
/// Fails when `X` is numerically rank deficient.
pub fn ols_residual(x: &DMatrix<f64>, y: &DVector<f64>) -> Result<DVector<f64>> {
    if x.nrows() != y.len() {
        return Err(Error::DimensionMismatch(format!(
            "X has {} rows but y has {} entries",
            x.nrows(),
            y.len()
        )));
    }
    if x.ncols() == 0 {
        return Ok(y.clone());
    }
    let beta = ols_coefficients(x, y)?;
    Ok(y - x * beta)
}

pub fn ols_coefficients(x: &DMatrix<f64>, y: &DVector<f64>) -> Result<DVector<f64>> {
    check_full_rank(x)?;
    let qr = x.clone().qr();
    let qty = qr.q().tr_mul(y);
    let r = qr.r();
    r.solve_upper_triangular(&qty)
        .ok_or_else(|| Error::Degenerate("fixed-effect matrix is rank deficient".into()))
}

/// Checks full column rank via the R factor of a QR decomposition.
pub fn check_full_rank(x: &DMatrix<f64>) -> Result<()> {
    let p = x.ncols();
    if p == 0 {
        return Ok(());
    }
    if x.nrows() <= p {
        return Err(Error::Degenerate(format!(
            "need more observations ({}) than fixed effects ({})",
            x.nrows(),
            p
        )));
    }
    let r = x.clone().qr().r();
    let scale = (0..p).map(|i| r[(i, i)].abs()).fold(0.0, f64::max);
    if scale == 0.0 || (0..p).any(|i| r[(i, i)].abs() <= 1e-10 * scale) {
        return Err(Error::Degenerate(
            "fixed-effect matrix is rank deficient".into(),
        ));
    }
    Ok(())
}

pub fn rms(v: &DVector<f64>) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    (v.norm_squared() / v.len() as f64).sqrt()
}

/// `n` points log-spaced over `[lo, hi]`, both ends included.
pub fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..n)
        .map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp())
        .collect()
}
