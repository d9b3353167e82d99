//! Kernel functions, kernel matrices and their compositions.
//!
//! Every family is a pure function of its hyperparameters. Kernel matrices are
//! computed on the upper triangle and mirrored, so they are exactly symmetric.
//!
//! Conventions:
//! - `Linear` is the plain inner product `xᵀx'`; it is *not* the degree-one
//!   polynomial, which carries a `+1` offset.
//! - Matérn kernels use `σ` as an inverse length scale, `a = √(2ν)·σ·‖x − x'‖`,
//!   and only the closed forms for `ν ∈ {1/2, 3/2, 5/2}` are available.
//! - The neural-network (arc-sine) kernel augments its inputs as `x̃ = (1, x)`.

use std::fmt;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;

/// Matérn smoothness.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MaternNu {
    Half,
    ThreeHalves,
    FiveHalves,
}

impl MaternNu {
    pub fn value(self) -> f64 {
        match self {
            MaternNu::Half => 0.5,
            MaternNu::ThreeHalves => 1.5,
            MaternNu::FiveHalves => 2.5,
        }
    }

    pub fn from_value(nu: f64) -> Result<Self> {
        if nu == 0.5 {
            Ok(MaternNu::Half)
        } else if nu == 1.5 {
            Ok(MaternNu::ThreeHalves)
        } else if nu == 2.5 {
            Ok(MaternNu::FiveHalves)
        } else {
            Err(Error::InvalidParameter(format!(
                "matern nu must be one of 0.5, 1.5, 2.5 (got {nu})"
            )))
        }
    }
}

/// A kernel family together with its hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "KernelSpecRecord", into = "KernelSpecRecord")]
pub enum KernelSpec {
    Linear,
    Polynomial { degree: u32 },
    Rbf { sigma: f64 },
    Matern { nu: MaternNu, sigma: f64 },
    NeuralNetwork { sigma: f64 },
}

impl KernelSpec {
    pub fn polynomial(degree: u32) -> Result<Self> {
        let spec = KernelSpec::Polynomial { degree };
        spec.validate()?;
        Ok(spec)
    }

    pub fn rbf(sigma: f64) -> Result<Self> {
        let spec = KernelSpec::Rbf { sigma };
        spec.validate()?;
        Ok(spec)
    }

    pub fn matern(nu: MaternNu, sigma: f64) -> Result<Self> {
        let spec = KernelSpec::Matern { nu, sigma };
        spec.validate()?;
        Ok(spec)
    }

    pub fn neural_network(sigma: f64) -> Result<Self> {
        let spec = KernelSpec::NeuralNetwork { sigma };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |s: f64| {
            if s.is_finite() && s > 0.0 {
                Ok(())
            } else {
                Err(Error::InvalidParameter(format!(
                    "kernel sigma must be positive and finite (got {s})"
                )))
            }
        };
        match *self {
            KernelSpec::Linear => Ok(()),
            KernelSpec::Polynomial { degree } => {
                if degree >= 1 {
                    Ok(())
                } else {
                    Err(Error::InvalidParameter(
                        "polynomial degree must be at least 1".into(),
                    ))
                }
            }
            KernelSpec::Rbf { sigma }
            | KernelSpec::Matern { sigma, .. }
            | KernelSpec::NeuralNetwork { sigma } => positive(sigma),
        }
    }

    /// Kernel value without input validation.
    pub(crate) fn eval_unchecked(&self, x: &[f64], xp: &[f64]) -> f64 {
        match *self {
            KernelSpec::Linear => dot(x, xp),
            KernelSpec::Polynomial { degree } => (1.0 + dot(x, xp)).powi(degree as i32),
            KernelSpec::Rbf { sigma } => (-squared_distance(x, xp) / (sigma * sigma)).exp(),
            KernelSpec::Matern { nu, sigma } => {
                let r = squared_distance(x, xp).sqrt();
                let a = (2.0 * nu.value()).sqrt() * sigma * r;
                match nu {
                    MaternNu::Half => (-a).exp(),
                    MaternNu::ThreeHalves => (1.0 + a) * (-a).exp(),
                    MaternNu::FiveHalves => (1.0 + a + a * a / 3.0) * (-a).exp(),
                }
            }
            KernelSpec::NeuralNetwork { sigma } => {
                // x̃ = (1, x), so x̃ᵀx̃' = 1 + xᵀx'.
                let cross = 1.0 + dot(x, xp);
                let self_x = 1.0 + dot(x, x);
                let self_xp = 1.0 + dot(xp, xp);
                let denom = ((1.0 + 2.0 * sigma * self_x) * (1.0 + 2.0 * sigma * self_xp)).sqrt();
                let arg = (2.0 * sigma * cross / denom).clamp(-1.0, 1.0);
                std::f64::consts::FRAC_2_PI * arg.asin()
            }
        }
    }

    /// Short model-style label, e.g. `rbf(1)` or `matern3/2(0.5)`.
    pub fn label(&self) -> String {
        self.to_string()
    }
}

impl fmt::Display for KernelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            KernelSpec::Linear => write!(f, "linear"),
            KernelSpec::Polynomial { degree } => write!(f, "polynomial({degree})"),
            KernelSpec::Rbf { sigma } => write!(f, "rbf({sigma})"),
            KernelSpec::Matern { nu, sigma } => {
                let nu = match nu {
                    MaternNu::Half => "1/2",
                    MaternNu::ThreeHalves => "3/2",
                    MaternNu::FiveHalves => "5/2",
                };
                write!(f, "matern{nu}({sigma})")
            }
            KernelSpec::NeuralNetwork { sigma } => write!(f, "nn({sigma})"),
        }
    }
}

/// Flat config representation: `{family, degree?, sigma?, nu?}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelSpecRecord {
    pub family: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub degree: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nu: Option<f64>,
}

impl TryFrom<KernelSpecRecord> for KernelSpec {
    type Error = Error;

    fn try_from(r: KernelSpecRecord) -> Result<Self> {
        let sigma = |r: &KernelSpecRecord| {
            r.sigma.ok_or_else(|| {
                Error::Config(format!("kernel family '{}' requires key 'sigma'", r.family))
            })
        };
        let spec = match r.family.as_str() {
            "linear" => KernelSpec::Linear,
            "polynomial" => KernelSpec::Polynomial {
                degree: r.degree.ok_or_else(|| {
                    Error::Config("kernel family 'polynomial' requires key 'degree'".into())
                })?,
            },
            "rbf" => KernelSpec::Rbf { sigma: sigma(&r)? },
            "matern" => KernelSpec::Matern {
                nu: MaternNu::from_value(r.nu.ok_or_else(|| {
                    Error::Config("kernel family 'matern' requires key 'nu'".into())
                })?)?,
                sigma: sigma(&r)?,
            },
            "nn" => KernelSpec::NeuralNetwork { sigma: sigma(&r)? },
            other => {
                return Err(Error::Config(format!(
                    "unknown kernel family '{other}' (expected linear, polynomial, rbf, matern or nn)"
                )))
            }
        };
        spec.validate()?;
        Ok(spec)
    }
}

impl From<KernelSpec> for KernelSpecRecord {
    fn from(spec: KernelSpec) -> Self {
        let mut r = KernelSpecRecord {
            family: String::new(),
            degree: None,
            sigma: None,
            nu: None,
        };
        match spec {
            KernelSpec::Linear => r.family = "linear".into(),
            KernelSpec::Polynomial { degree } => {
                r.family = "polynomial".into();
                r.degree = Some(degree);
            }
            KernelSpec::Rbf { sigma } => {
                r.family = "rbf".into();
                r.sigma = Some(sigma);
            }
            KernelSpec::Matern { nu, sigma } => {
                r.family = "matern".into();
                r.nu = Some(nu.value());
                r.sigma = Some(sigma);
            }
            KernelSpec::NeuralNetwork { sigma } => {
                r.family = "nn".into();
                r.sigma = Some(sigma);
            }
        }
        r
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Evaluates `k(x, x')`.
pub fn eval_kernel(spec: &KernelSpec, x: &[f64], xp: &[f64]) -> Result<f64> {
    spec.validate()?;
    if x.len() != xp.len() {
        return Err(Error::DimensionMismatch(format!(
            "kernel inputs have dimensions {} and {}",
            x.len(),
            xp.len()
        )));
    }
    linalg::check_finite("kernel input", x)?;
    linalg::check_finite("kernel input", xp)?;
    Ok(spec.eval_unchecked(x, xp))
}

/// Where a kernel matrix came from.
#[derive(Debug, Clone, PartialEq)]
pub enum KernelSource {
    Spec(KernelSpec),
    Composition(String),
}

impl fmt::Display for KernelSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            KernelSource::Spec(s) => write!(f, "{s}"),
            KernelSource::Composition(c) => write!(f, "{c}"),
        }
    }
}

/// Symmetric n×n kernel matrix.
#[derive(Debug, Clone)]
pub struct KernelMatrix {
    values: DMatrix<f64>,
    source: KernelSource,
    standardized: bool,
}

impl KernelMatrix {
    /// Wraps a square matrix, mirroring the upper triangle into the lower one.
    pub fn from_matrix(mut values: DMatrix<f64>, source: KernelSource) -> Result<Self> {
        if !values.is_square() {
            return Err(Error::DimensionMismatch(format!(
                "kernel matrix must be square (got {}x{})",
                values.nrows(),
                values.ncols()
            )));
        }
        linalg::check_finite("kernel matrix", values.as_slice())?;
        let n = values.nrows();
        for j in 0..n {
            for i in (j + 1)..n {
                values[(i, j)] = values[(j, i)];
            }
        }
        Ok(Self {
            values,
            source,
            standardized: false,
        })
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn into_values(self) -> DMatrix<f64> {
        self.values
    }

    pub fn source(&self) -> &KernelSource {
        &self.source
    }

    pub fn is_standardized(&self) -> bool {
        self.standardized
    }

    pub fn n(&self) -> usize {
        self.values.nrows()
    }

    pub fn trace(&self) -> f64 {
        self.values.trace()
    }

    /// `c · K` for `c > 0`.
    pub fn scaled(&self, c: f64) -> KernelMatrix {
        KernelMatrix {
            values: &self.values * c,
            source: self.source.clone(),
            standardized: false,
        }
    }

    /// Entrywise sum of kernel matrices.
    pub fn sum(parts: &[&KernelMatrix]) -> Result<KernelMatrix> {
        let first = parts
            .first()
            .ok_or_else(|| Error::InvalidParameter("empty kernel sum".into()))?;
        let mut values = first.values.clone();
        for p in &parts[1..] {
            check_same_shape(first, p)?;
            values += &p.values;
        }
        let label = parts
            .iter()
            .map(|p| p.source.to_string())
            .collect::<Vec<_>>()
            .join(" + ");
        Ok(KernelMatrix {
            values,
            source: KernelSource::Composition(label),
            standardized: false,
        })
    }

    /// Smallest eigenvalue divided by the largest.
    pub fn min_eigen_ratio(&self) -> f64 {
        linalg::min_eigen_ratio(&self.values)
    }

    pub fn is_psd(&self) -> bool {
        linalg::is_psd(&self.values, linalg::PSD_TOLERANCE)
    }

    pub(crate) fn from_parts(values: DMatrix<f64>, source: KernelSource, standardized: bool) -> Self {
        Self {
            values,
            source,
            standardized,
        }
    }
}

fn check_same_shape(a: &KernelMatrix, b: &KernelMatrix) -> Result<()> {
    if a.values.shape() != b.values.shape() {
        return Err(Error::DimensionMismatch(format!(
            "kernel matrices have shapes {:?} and {:?}",
            a.values.shape(),
            b.values.shape()
        )));
    }
    Ok(())
}

/// Builds `K_ij = k(z_i, z_j)` from the rows of `z`.
pub fn kernel_matrix(spec: &KernelSpec, z: &DMatrix<f64>) -> Result<KernelMatrix> {
    spec.validate()?;
    let n = z.nrows();
    if n < 2 {
        return Err(Error::InvalidParameter(format!(
            "kernel matrix needs at least 2 observations (got {n})"
        )));
    }
    linalg::check_finite("design matrix", z.as_slice())?;
    let rows = row_vectors(z);
    let mut values = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let v = spec.eval_unchecked(&rows[i], &rows[j]);
            values[(i, j)] = v;
            values[(j, i)] = v;
        }
    }
    Ok(KernelMatrix {
        values,
        source: KernelSource::Spec(*spec),
        standardized: false,
    })
}

/// Rectangular cross-kernel `C_ij = k(a_i, b_j)`.
pub fn cross_kernel_matrix(spec: &KernelSpec, a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    spec.validate()?;
    if a.ncols() != b.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "cross kernel inputs have {} and {} columns",
            a.ncols(),
            b.ncols()
        )));
    }
    linalg::check_finite("kernel input", a.as_slice())?;
    linalg::check_finite("kernel input", b.as_slice())?;
    let ra = row_vectors(a);
    let rb = row_vectors(b);
    Ok(DMatrix::from_fn(a.nrows(), b.nrows(), |i, j| {
        spec.eval_unchecked(&ra[i], &rb[j])
    }))
}

fn row_vectors(z: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..z.nrows())
        .map(|i| z.row(i).iter().copied().collect())
        .collect()
}

/// `K / tr(K)`. Idempotent on already standardized matrices.
pub fn trace_standardize(k: &KernelMatrix) -> Result<KernelMatrix> {
    if k.standardized {
        return Ok(k.clone());
    }
    let tr = k.trace();
    if !(tr > 0.0) {
        return Err(Error::Degenerate(format!(
            "kernel matrix ({}) has non-positive trace {tr}",
            k.source
        )));
    }
    Ok(KernelMatrix {
        values: &k.values / tr,
        source: k.source.clone(),
        standardized: true,
    })
}

/// Entrywise (Schur) product.
pub fn hadamard(a: &KernelMatrix, b: &KernelMatrix) -> Result<KernelMatrix> {
    check_same_shape(a, b)?;
    Ok(KernelMatrix {
        values: a.values.component_mul(&b.values),
        source: KernelSource::Composition(format!("({}) * ({})", a.source, b.source)),
        standardized: false,
    })
}

/// Median of the pairwise Euclidean distances between rows of `z`.
pub fn median_bandwidth(z: &DMatrix<f64>) -> Result<f64> {
    let n = z.nrows();
    if n < 2 {
        return Err(Error::InvalidParameter(format!(
            "median bandwidth needs at least 2 points (got {n})"
        )));
    }
    linalg::check_finite("design matrix", z.as_slice())?;
    let rows = row_vectors(z);
    let mut d = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in (i + 1)..n {
            d.push(squared_distance(&rows[i], &rows[j]).sqrt());
        }
    }
    d.sort_by(|a, b| a.total_cmp(b));
    let m = d.len();
    let median = if m % 2 == 1 {
        d[m / 2]
    } else {
        0.5 * (d[m / 2 - 1] + d[m / 2])
    };
    if median > 0.0 {
        Ok(median)
    } else {
        Err(Error::Degenerate(
            "median pairwise distance is zero; bandwidth undefined".into(),
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn id2() -> DMatrix<f64> {
        DMatrix::identity(2, 2)
    }

    #[test]
    fn matern_is_one_at_zero_distance() {
        for nu in [MaternNu::Half, MaternNu::ThreeHalves, MaternNu::FiveHalves] {
            let k = KernelSpec::matern(nu, 1.0).unwrap();
            assert_eq!(eval_kernel(&k, &[0.3, -1.0], &[0.3, -1.0]).unwrap(), 1.0);
        }
    }

    #[test]
    fn linear_is_dot_product() {
        assert_eq!(eval_kernel(&KernelSpec::Linear, &[1.0, 2.0], &[3.0, 4.0]).unwrap(), 11.0);
    }

    #[test]
    fn rbf_unit_distance() {
        let k = KernelSpec::rbf(1.0).unwrap();
        let oracle = (-1.0f64).exp();
        let v = eval_kernel(&k, &[0.0], &[1.0]).unwrap();
        assert!((v - oracle).abs() < 1e-15);
        assert!((v - 0.367879).abs() < 1e-6);
    }

    #[test]
    fn polynomial_has_offset() {
        let k = KernelSpec::polynomial(2).unwrap();
        assert_eq!(eval_kernel(&k, &[1.0], &[2.0]).unwrap(), 9.0);
    }

    #[test]
    fn matern_closed_forms() {
        // r = 1, sigma = 1
        let a32 = 3f64.sqrt();
        let a52 = 5f64.sqrt();
        let cases = [
            (MaternNu::Half, (-1f64).exp()),
            (MaternNu::ThreeHalves, (1.0 + a32) * (-a32).exp()),
            (MaternNu::FiveHalves, (1.0 + a52 + a52 * a52 / 3.0) * (-a52).exp()),
        ];
        for (nu, want) in cases {
            let k = KernelSpec::matern(nu, 1.0).unwrap();
            assert!((eval_kernel(&k, &[0.0], &[1.0]).unwrap() - want).abs() < 1e-15);
        }
    }

    #[test]
    fn nn_kernel_at_origin() {
        // x = x' = 0: x̃ᵀx̃' = 1, so k = (2/π) asin(2σ / (1 + 2σ)).
        let s = 0.5;
        let k = KernelSpec::neural_network(s).unwrap();
        let want = std::f64::consts::FRAC_2_PI * (2.0 * s / (1.0 + 2.0 * s)).asin();
        assert!((eval_kernel(&k, &[0.0], &[0.0]).unwrap() - want).abs() < 1e-15);
    }

    #[test]
    fn eval_errors() {
        assert!(matches!(
            eval_kernel(&KernelSpec::Linear, &[1.0], &[1.0, 2.0]),
            Err(Error::DimensionMismatch(_))
        ));
        assert!(matches!(
            eval_kernel(&KernelSpec::Linear, &[f64::NAN], &[1.0]),
            Err(Error::NonFinite(_))
        ));
        assert!(KernelSpec::rbf(0.0).is_err());
        assert!(KernelSpec::polynomial(0).is_err());
    }

    #[test]
    fn linear_on_identity_rows() {
        let k = kernel_matrix(&KernelSpec::Linear, &id2()).unwrap();
        assert_eq!(k.values(), &DMatrix::<f64>::identity(2, 2));
    }

    #[test]
    fn kernel_matrix_rejects_small_n() {
        let z = DMatrix::from_row_slice(1, 1, &[1.0]);
        assert!(kernel_matrix(&KernelSpec::Linear, &z).is_err());
    }

    #[test]
    fn trace_standardize_examples() {
        let k = KernelMatrix::from_matrix(DMatrix::identity(3, 3) * 2.0, KernelSource::Composition("2I".into())).unwrap();
        let s = trace_standardize(&k).unwrap();
        assert!((s.values() - DMatrix::identity(3, 3) / 3.0).abs().max() < 1e-15);
        let again = trace_standardize(&s).unwrap();
        assert_eq!(again.values(), s.values());
        let zero = KernelMatrix::from_matrix(DMatrix::zeros(3, 3), KernelSource::Composition("0".into())).unwrap();
        assert!(matches!(trace_standardize(&zero), Err(Error::Degenerate(_))));
    }

    #[test]
    fn hadamard_identities() {
        let a = KernelMatrix::from_matrix(
            DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]),
            KernelSource::Composition("a".into()),
        )
        .unwrap();
        let ones = KernelMatrix::from_matrix(DMatrix::from_element(2, 2, 1.0), KernelSource::Composition("1".into())).unwrap();
        assert_eq!(hadamard(&a, &ones).unwrap().values(), a.values());
        let i = KernelMatrix::from_matrix(DMatrix::identity(2, 2), KernelSource::Composition("I".into())).unwrap();
        assert_eq!(hadamard(&i, &i).unwrap().values(), i.values());
        let i3 = KernelMatrix::from_matrix(DMatrix::identity(3, 3), KernelSource::Composition("I".into())).unwrap();
        assert!(hadamard(&i, &i3).is_err());
    }

    #[test]
    fn median_bandwidth_examples() {
        let z = DMatrix::from_column_slice(2, 1, &[0.0, 1.0]);
        assert_eq!(median_bandwidth(&z).unwrap(), 1.0);
        let z = DMatrix::from_column_slice(3, 1, &[0.0, 1.0, 3.0]);
        assert_eq!(median_bandwidth(&z).unwrap(), 2.0);
        let z = DMatrix::from_column_slice(3, 1, &[2.0, 2.0, 2.0]);
        assert!(matches!(median_bandwidth(&z), Err(Error::Degenerate(_))));
    }

    #[test]
    fn spec_record_roundtrip() {
        let specs = [
            KernelSpec::Linear,
            KernelSpec::Polynomial { degree: 2 },
            KernelSpec::Rbf { sigma: 0.5 },
            KernelSpec::Matern { nu: MaternNu::FiveHalves, sigma: 1.5 },
            KernelSpec::NeuralNetwork { sigma: 10.0 },
        ];
        for s in specs {
            let json = serde_json::to_string(&s).unwrap();
            let back: KernelSpec = serde_json::from_str(&json).unwrap();
            assert_eq!(back, s);
        }
        let json = r#"{"family":"matern","nu":1.5,"sigma":1.0}"#;
        let s: KernelSpec = serde_json::from_str(json).unwrap();
        assert_eq!(s, KernelSpec::Matern { nu: MaternNu::ThreeHalves, sigma: 1.0 });
        assert!(serde_json::from_str::<KernelSpec>(r#"{"family":"rbf"}"#).is_err());
        assert!(serde_json::from_str::<KernelSpec>(r#"{"family":"matern","nu":0.7,"sigma":1}"#).is_err());
        assert!(serde_json::from_str::<KernelSpec>(r#"{"family":"spline"}"#).is_err());
    }
}
