//! REML fit of the null linear mixed model
//! `y = Xβ + h + ε`, `h ~ N(0, τK₀)`, `ε ~ N(0, σ²I)`.
//!
//! The variance components are parameterized as total scale `φ = τ + σ²` and
//! ratio `ρ = τ/φ ∈ [0, 1]`. For fixed `ρ` the scale profiles out in closed
//! form; `ρ` is found by a coarse scan followed by golden-section refinement.
//! Everything is evaluated in the eigenbasis of `K₀`, so each likelihood
//! evaluation costs `O(n p²)`.

use nalgebra::{DMatrix, DVector};

use crate::design::GroupedDesign;
use crate::error::{Error, Result};
use crate::interaction::{self, TestSpec};
use crate::kernel::{KernelMatrix, KernelSpec};
use crate::linalg::{self, SymEigen, PSD_TOLERANCE};

const RATIO_TOLERANCE: f64 = 1e-8;
const SCAN_POINTS: usize = 51;

/// REML estimates under the null model.
#[derive(Debug, Clone)]
pub struct NullModelFit {
    pub beta: DVector<f64>,
    pub tau: f64,
    pub sigma2: f64,
    /// `σ̂² I + τ̂ K₀`
    pub v0: DMatrix<f64>,
    /// `V₀⁻¹ − V₀⁻¹X(XᵀV₀⁻¹X)⁻¹XᵀV₀⁻¹`
    pub p0: DMatrix<f64>,
    /// Restricted log-likelihood at the optimum.
    pub log_likelihood: f64,
}

struct Rotated {
    values: Vec<f64>,
    xt: DMatrix<f64>,
    yt: DVector<f64>,
    n: usize,
    p: usize,
}

struct WeightedParts {
    log_det_w: f64,
    log_det_c: f64,
    ypy: f64,
    yy: f64,
    c: DMatrix<f64>,
    beta: DVector<f64>,
}

impl Rotated {
    fn new(eigen: &SymEigen, x: &DMatrix<f64>, y: &DVector<f64>) -> Result<Self> {
        let n = y.len();
        if eigen.dim() != n || x.nrows() != n {
            return Err(Error::DimensionMismatch(format!(
                "kernel is {}x{}, X has {} rows, y has {} entries",
                eigen.dim(),
                eigen.dim(),
                x.nrows(),
                n
            )));
        }
        linalg::check_finite("outcome", y.as_slice())?;
        linalg::check_finite("fixed effects", x.as_slice())?;
        linalg::check_full_rank(x)?;
        let max = eigen.max_value().max(0.0);
        if eigen.min_value() < -PSD_TOLERANCE * max.max(f64::MIN_POSITIVE) {
            return Err(Error::Numerical(format!(
                "null kernel is not positive semi-definite (min eigenvalue {:e})",
                eigen.min_value()
            )));
        }
        Ok(Self {
            values: eigen.values.iter().map(|v| v.max(0.0)).collect(),
            xt: eigen.vectors.tr_mul(x),
            yt: eigen.rotate(y),
            n,
            p: x.ncols(),
        })
    }

    /// Quantities for `V = U diag(w) Uᵀ`; `None` if `V` is singular.
    fn parts(&self, w: &[f64]) -> Option<WeightedParts> {
        if w.iter().any(|&v| !(v > 0.0)) {
            return None;
        }
        let p = self.p;
        let mut c = DMatrix::zeros(p, p);
        let mut b = DVector::zeros(p);
        let mut yy = 0.0;
        let mut log_det_w = 0.0;
        for k in 0..self.n {
            let inv = 1.0 / w[k];
            log_det_w += w[k].ln();
            yy += self.yt[k] * self.yt[k] * inv;
            for a in 0..p {
                let xa = self.xt[(k, a)] * inv;
                b[a] += xa * self.yt[k];
                for bb in 0..=a {
                    c[(a, bb)] += xa * self.xt[(k, bb)];
                }
            }
        }
        for a in 0..p {
            for bb in 0..a {
                c[(bb, a)] = c[(a, bb)];
            }
        }
        let (log_det_c, beta, ypy) = if p == 0 {
            (0.0, DVector::zeros(0), yy)
        } else {
            let chol = c.clone().cholesky()?;
            let log_det_c = 2.0 * chol.l().diagonal().iter().map(|d: &f64| d.ln()).sum::<f64>();
            let beta = chol.solve(&b);
            (log_det_c, beta.clone(), yy - b.dot(&beta))
        };
        Some(WeightedParts {
            log_det_w,
            log_det_c,
            ypy,
            yy,
            c,
            beta,
        })
    }

    fn weights(&self, tau: f64, sigma2: f64) -> Vec<f64> {
        self.values.iter().map(|&l| sigma2 + tau * l).collect()
    }

    fn log_likelihood(&self, tau: f64, sigma2: f64) -> f64 {
        match self.parts(&self.weights(tau, sigma2)) {
            Some(q) => {
                -0.5 * ((self.n - self.p) as f64 * (2.0 * std::f64::consts::PI).ln()
                    + q.log_det_w
                    + q.log_det_c
                    + q.ypy)
            }
            None => f64::NEG_INFINITY,
        }
    }

    /// Profiled likelihood in `ρ` and the matching `φ̂`.
    fn profile(&self, rho: f64) -> (f64, f64) {
        let w = self.weights(rho, 1.0 - rho);
        match self.parts(&w) {
            // y inside the span of X up to rounding counts as degenerate
            Some(q) if q.ypy > 1e-12 * q.yy => {
                let dof = (self.n - self.p) as f64;
                let phi = q.ypy / dof;
                let ll = -0.5
                    * (dof * ((2.0 * std::f64::consts::PI * phi).ln() + 1.0) + q.log_det_w + q.log_det_c);
                if ll.is_nan() {
                    (f64::NEG_INFINITY, phi)
                } else {
                    (ll, phi)
                }
            }
            _ => (f64::NEG_INFINITY, f64::NAN),
        }
    }
}

fn golden_section(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64, tol: f64) -> f64 {
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = hi - g * (hi - lo);
    let mut d = lo + g * (hi - lo);
    let mut fc = f(c);
    let mut fd = f(d);
    while hi - lo > tol {
        if fc >= fd {
            hi = d;
            d = c;
            fd = fc;
            c = hi - g * (hi - lo);
            fc = f(c);
        } else {
            lo = c;
            c = d;
            fc = fd;
            d = lo + g * (hi - lo);
            fd = f(d);
        }
    }
    0.5 * (lo + hi)
}

/// REML fit with `K₀` given as a matrix.
pub fn reml_fit(k0: &KernelMatrix, x: &DMatrix<f64>, y: &DVector<f64>) -> Result<NullModelFit> {
    reml_fit_spectral(&SymEigen::new(k0.values()), x, y)
}

/// REML fit reusing an eigendecomposition of `K₀`.
pub fn reml_fit_spectral(eigen: &SymEigen, x: &DMatrix<f64>, y: &DVector<f64>) -> Result<NullModelFit> {
    let prob = Rotated::new(eigen, x, y)?;
    if prob.n <= prob.p {
        return Err(Error::Degenerate("REML needs n > p".into()));
    }
    let zero_kernel = prob.values.iter().all(|&v| v == 0.0);

    let (rho, phi) = if zero_kernel {
        (0.0, prob.profile(0.0).1)
    } else {
        let scan: Vec<(f64, f64, f64)> = (0..SCAN_POINTS)
            .map(|i| {
                let rho = i as f64 / (SCAN_POINTS - 1) as f64;
                let (ll, phi) = prob.profile(rho);
                (rho, ll, phi)
            })
            .collect();
        let mut best = 0;
        for i in 1..scan.len() {
            if scan[i].1 > scan[best].1 {
                best = i;
            }
        }
        if !scan[best].1.is_finite() {
            // ρ = 0 always gives a nonsingular V, so this means y ∈ span(X)
            return Err(Error::Degenerate(
                "outcome has no variation beyond the fixed effects".into(),
            ));
        }
        let lo = scan[best.saturating_sub(1)].0;
        let hi = scan[(best + 1).min(scan.len() - 1)].0;
        let refined = golden_section(|r| prob.profile(r).0, lo, hi, RATIO_TOLERANCE);
        let (ll_refined, phi_refined) = prob.profile(refined);
        if ll_refined > scan[best].1 {
            (refined, phi_refined)
        } else {
            (scan[best].0, scan[best].2)
        }
    };
    if !(phi > 0.0) || !phi.is_finite() {
        return Err(Error::Degenerate(
            "outcome has no variation beyond the fixed effects".into(),
        ));
    }

    let tau = rho * phi;
    let sigma2 = (1.0 - rho) * phi;
    let w = prob.weights(tau, sigma2);
    let parts = prob
        .parts(&w)
        .ok_or_else(|| Error::Numerical("null covariance is singular at the REML optimum".into()))?;
    let log_likelihood = prob.log_likelihood(tau, sigma2);

    let u = &eigen.vectors;
    let v0 = linalg::spectral_product(u, &w);
    // P̃ = D − (D X̃) C⁻¹ (D X̃)ᵀ in the eigenbasis, D = diag(1/w).
    let d: Vec<f64> = w.iter().map(|v| 1.0 / v).collect();
    let mut p_rot = DMatrix::from_diagonal(&DVector::from_column_slice(&d));
    if prob.p > 0 {
        let mut dx = prob.xt.clone();
        for (k, mut row) in dx.row_iter_mut().enumerate() {
            row *= d[k];
        }
        let c_inv = parts
            .c
            .clone()
            .cholesky()
            .ok_or_else(|| Error::Numerical("XᵀV⁻¹X is singular".into()))?
            .inverse();
        p_rot -= &dx * c_inv * dx.transpose();
    }
    let mut p0 = u * p_rot * u.transpose();
    linalg::symmetrize(&mut p0);

    Ok(NullModelFit {
        beta: parts.beta,
        tau,
        sigma2,
        v0,
        p0,
        log_likelihood,
    })
}

/// Restricted log-likelihood at arbitrary `(τ, σ²)`; `-∞` where `V` is singular.
pub fn restricted_log_likelihood(
    k0: &KernelMatrix,
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    tau: f64,
    sigma2: f64,
) -> Result<f64> {
    let prob = Rotated::new(&SymEigen::new(k0.values()), x, y)?;
    Ok(prob.log_likelihood(tau, sigma2))
}

/// RBF bandwidth maximizing the restricted likelihood of the null model.
///
/// Ties go to the larger bandwidth. Returns the chosen kernel and its
/// maximized log-likelihood.
pub fn reml_tune_rbf(
    design: &GroupedDesign,
    test: &TestSpec,
    y: &DVector<f64>,
    sigma_grid: &[f64],
) -> Result<(KernelSpec, f64)> {
    if sigma_grid.is_empty() {
        return Err(Error::InvalidParameter("RBF bandwidth grid is empty".into()));
    }
    let mut best: Option<(KernelSpec, f64)> = None;
    for &sigma in sigma_grid {
        let spec = KernelSpec::rbf(sigma)?;
        let specs = vec![spec; design.groups().len()];
        let pair = interaction::build_from_specs(design, test, &specs)?;
        let fit = reml_fit(&pair.null, design.fixed_effects(), y)?;
        let better = match &best {
            None => true,
            Some((KernelSpec::Rbf { sigma: s }, ll)) => {
                fit.log_likelihood > *ll || (fit.log_likelihood == *ll && sigma > *s)
            }
            Some(_) => unreachable!(),
        };
        if better {
            best = Some((spec, fit.log_likelihood));
        }
    }
    Ok(best.expect("grid is nonempty"))
}
