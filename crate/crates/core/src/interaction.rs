//! Garrote-kernel interaction test.
//!
//! The null kernel `K₀` holds the main effects (and any nuisance
//! interactions), `K₁₂` the tested interaction. The score statistic for the
//! garrote parameter `δ = 0` is referred to a scaled chi-square `κχ²_ν`
//! matched on the mean and efficient variance.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma_ur;

use crate::design::GroupedDesign;
use crate::ensemble::{self, EnsembleConfig, EnsembleFit};
use crate::error::{Error, Result};
use crate::kernel::{kernel_matrix, median_bandwidth, trace_standardize, KernelMatrix, KernelSource, KernelSpec, MaternNu};
use crate::linalg::{self, log_grid};
use crate::reml::{self, NullModelFit};

/// How untested groups enter the kernels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum NuisancePolicy {
    /// `K₀ = Σ_m K_m`, `K₁₂ = K_a ∘ K_b`.
    #[default]
    TwoGroup,
    /// With `K₃` the sum of the untested groups:
    /// `K₀ = K_a + K_b + K₃ + K_a∘K₃ + K_b∘K₃`, `K₁₂ = K_a∘K_b + K_a∘K_b∘K₃`.
    MultiGroupWithNuisance,
}

/// Grouping structure and the tested pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestSpec {
    pub groups: Vec<String>,
    pub test_pair: (usize, usize),
    pub nuisance_policy: NuisancePolicy,
}

impl TestSpec {
    pub fn new(groups: Vec<String>, test_pair: (usize, usize), nuisance_policy: NuisancePolicy) -> Result<Self> {
        let spec = Self {
            groups,
            test_pair,
            nuisance_policy,
        };
        spec.check()?;
        Ok(spec)
    }

    /// Tests groups `a` and `b` of `design` by name.
    pub fn for_design(design: &GroupedDesign, a: &str, b: &str, policy: NuisancePolicy) -> Result<Self> {
        let find = |name: &str| {
            design
                .group_index(name)
                .ok_or_else(|| Error::Config(format!("unknown group '{name}'")))
        };
        Self::new(design.group_names(), (find(a)?, find(b)?), policy)
    }

    fn check(&self) -> Result<()> {
        let (a, b) = self.test_pair;
        let m = self.groups.len();
        if a >= m || b >= m {
            return Err(Error::Config(format!(
                "tested pair ({a}, {b}) is out of range for {m} groups"
            )));
        }
        if a == b {
            return Err(Error::Config("tested groups must be distinct".into()));
        }
        Ok(())
    }

    /// Checks that `design` has exactly these groups, in order.
    pub fn validate(&self, design: &GroupedDesign) -> Result<()> {
        self.check()?;
        let names = design.group_names();
        if names != self.groups {
            return Err(Error::Config(format!(
                "test groups {:?} do not match design groups {:?}",
                self.groups, names
            )));
        }
        Ok(())
    }

    pub fn pair_names(&self) -> (String, String) {
        (
            self.groups[self.test_pair.0].clone(),
            self.groups[self.test_pair.1].clone(),
        )
    }
}

/// Composes per-group matrices into `(K₀, K₁₂)`. The inputs may be
/// rectangular (cross-kernels between new and observed points).
pub fn compose(groups: &[&DMatrix<f64>], pair: (usize, usize), policy: NuisancePolicy) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let (a, b) = pair;
    if a >= groups.len() || b >= groups.len() || a == b {
        return Err(Error::Config(format!(
            "invalid tested pair ({a}, {b}) for {} groups",
            groups.len()
        )));
    }
    let shape = groups[0].shape();
    if groups.iter().any(|g| g.shape() != shape) {
        return Err(Error::DimensionMismatch("group kernels differ in shape".into()));
    }
    let ka = groups[a];
    let kb = groups[b];
    let kab = ka.component_mul(kb);
    match policy {
        NuisancePolicy::TwoGroup => {
            let mut k0 = DMatrix::zeros(shape.0, shape.1);
            for g in groups {
                k0 += *g;
            }
            Ok((k0, kab))
        }
        NuisancePolicy::MultiGroupWithNuisance => {
            let mut k3 = DMatrix::zeros(shape.0, shape.1);
            for (m, g) in groups.iter().enumerate() {
                if m != a && m != b {
                    k3 += *g;
                }
            }
            let k0 = ka + kb + &k3 + ka.component_mul(&k3) + kb.component_mul(&k3);
            let k12 = &kab + kab.component_mul(&k3);
            Ok((k0, k12))
        }
    }
}

/// Null and interaction kernel matrices.
#[derive(Debug, Clone)]
pub struct KernelPair {
    pub null: KernelMatrix,
    pub interaction: KernelMatrix,
}

/// Trace-standardizes a group kernel; an all-zero matrix is passed through.
fn standardize_group(k: &KernelMatrix) -> Result<KernelMatrix> {
    if k.values().iter().all(|&v| v == 0.0) {
        return Ok(k.clone());
    }
    trace_standardize(k)
}

/// Builds `(K₀, K₁₂)` from per-group kernel matrices, each of which is
/// trace-standardized first.
pub fn build_null_and_interaction_kernels(group_kernels: &[KernelMatrix], test: &TestSpec) -> Result<KernelPair> {
    test.check()?;
    if group_kernels.len() != test.groups.len() {
        return Err(Error::Config(format!(
            "{} group kernels for {} groups",
            group_kernels.len(),
            test.groups.len()
        )));
    }
    let standardized = group_kernels
        .iter()
        .map(standardize_group)
        .collect::<Result<Vec<_>>>()?;
    pair_from_standardized(&standardized, test)
}

fn pair_from_standardized(standardized: &[KernelMatrix], test: &TestSpec) -> Result<KernelPair> {
    let refs: Vec<&DMatrix<f64>> = standardized.iter().map(|k| k.values()).collect();
    let (k0, k12) = compose(&refs, test.test_pair, test.nuisance_policy)?;
    let (a, b) = test.pair_names();
    Ok(KernelPair {
        null: KernelMatrix::from_parts(k0, KernelSource::Composition("null".into()), false),
        interaction: KernelMatrix::from_parts(
            k12,
            KernelSource::Composition(format!("{a} x {b}")),
            false,
        ),
    })
}

/// Builds `(K₀, K₁₂)` with one kernel spec per group of `design`.
pub fn build_from_specs(design: &GroupedDesign, test: &TestSpec, specs: &[KernelSpec]) -> Result<KernelPair> {
    test.validate(design)?;
    if specs.len() != design.groups().len() {
        return Err(Error::Config(format!(
            "{} kernel specs for {} groups",
            specs.len(),
            design.groups().len()
        )));
    }
    let kernels = design
        .groups()
        .iter()
        .zip(specs)
        .map(|(g, s)| kernel_matrix(s, &g.values))
        .collect::<Result<Vec<_>>>()?;
    build_null_and_interaction_kernels(&kernels, test)
}

/// How `K₁₂` is formed from an ensemble.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum InteractionBridge {
    /// `K₁₂ = Σ_d u_d K₁₂,d`
    #[default]
    WeightedInteractions,
    /// Compose the weighted per-group sums `Σ_d u_d K_m,d`.
    WeightedGroups,
}

/// The kernel of a model: a fixed spec, a data-driven RBF bandwidth, or an
/// ensemble library.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKernel {
    Fixed(KernelSpec),
    /// RBF with per-group bandwidth set to the median pairwise distance.
    RbfMedian,
    /// RBF with the bandwidth maximizing the restricted likelihood.
    RbfMle { sigma_grid: Vec<f64> },
    Ensemble(Vec<KernelSpec>),
}

/// Default bandwidth grid for [`ModelKernel::RbfMle`]: 21 points
/// log-spaced over `[e⁻², e²]`.
pub fn default_mle_grid() -> Vec<f64> {
    log_grid((-2.0f64).exp(), 2.0f64.exp(), 21)
}

/// A model kernel with its display name.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedModel {
    pub name: String,
    pub kernel: ModelKernel,
}

impl NamedModel {
    pub fn new(name: &str, kernel: ModelKernel) -> Self {
        Self {
            name: name.into(),
            kernel,
        }
    }
}

/// The twelve comparison models of the simulation study, in table order.
pub fn comparison_models() -> Vec<NamedModel> {
    let matern = |nu| ModelKernel::Fixed(KernelSpec::Matern { nu, sigma: 1.0 });
    let nn = |sigma| ModelKernel::Fixed(KernelSpec::NeuralNetwork { sigma });
    vec![
        NamedModel::new("Linear", ModelKernel::Fixed(KernelSpec::Linear)),
        NamedModel::new("Quadratic", ModelKernel::Fixed(KernelSpec::Polynomial { degree: 2 })),
        NamedModel::new(
            "RBF_MLE",
            ModelKernel::RbfMle {
                sigma_grid: default_mle_grid(),
            },
        ),
        NamedModel::new("RBF_Median", ModelKernel::RbfMedian),
        NamedModel::new("Matern 1/2", matern(MaternNu::Half)),
        NamedModel::new("Matern 3/2", matern(MaternNu::ThreeHalves)),
        NamedModel::new("Matern 5/2", matern(MaternNu::FiveHalves)),
        NamedModel::new("NN 0.1", nn(0.1)),
        NamedModel::new("NN 1", nn(1.0)),
        NamedModel::new("NN 10", nn(10.0)),
        NamedModel::new("CVEK_RBF", ModelKernel::Ensemble(ensemble::rbf_library())),
        NamedModel::new("CVEK_NN", ModelKernel::Ensemble(ensemble::nn_library())),
    ]
}

/// Looks up one of [`comparison_models`] by name (case-insensitive).
pub fn comparison_model(name: &str) -> Option<NamedModel> {
    comparison_models()
        .into_iter()
        .find(|m| m.name.eq_ignore_ascii_case(name))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct TestConfig {
    pub ensemble: EnsembleConfig,
    pub bridge: InteractionBridge,
}

/// Per-group kernel matrices of one base kernel.
#[derive(Debug, Clone)]
pub struct BaseKernel {
    pub label: String,
    pub groups: Vec<KernelMatrix>,
}

impl ModelKernel {
    /// Per-group kernel specs of each base kernel.
    pub fn resolve(&self, design: &GroupedDesign, test: &TestSpec, y: &DVector<f64>) -> Result<Vec<Vec<KernelSpec>>> {
        let m = design.groups().len();
        match self {
            ModelKernel::Fixed(spec) => {
                spec.validate()?;
                Ok(vec![vec![*spec; m]])
            }
            ModelKernel::RbfMedian => {
                let specs = design
                    .groups()
                    .iter()
                    .map(|g| KernelSpec::rbf(median_bandwidth(&g.values)?))
                    .collect::<Result<Vec<_>>>()?;
                Ok(vec![specs])
            }
            ModelKernel::RbfMle { sigma_grid } => {
                let (spec, _) = reml::reml_tune_rbf(design, test, y, sigma_grid)?;
                Ok(vec![vec![spec; m]])
            }
            ModelKernel::Ensemble(library) => {
                if library.is_empty() {
                    return Err(Error::Config("kernel library is empty".into()));
                }
                library
                    .iter()
                    .map(|s| s.validate().map(|_| vec![*s; m]))
                    .collect()
            }
        }
    }
}

/// Evaluates per-group kernel matrices for each resolved base kernel.
pub fn base_kernels(design: &GroupedDesign, specs: &[Vec<KernelSpec>]) -> Result<Vec<BaseKernel>> {
    specs
        .iter()
        .map(|group_specs| {
            let groups = design
                .groups()
                .iter()
                .zip(group_specs)
                .map(|(g, s)| kernel_matrix(s, &g.values))
                .collect::<Result<Vec<_>>>()?;
            Ok(BaseKernel {
                label: base_label(group_specs),
                groups,
            })
        })
        .collect()
}

fn base_label(specs: &[KernelSpec]) -> String {
    if specs.windows(2).all(|w| w[0] == w[1]) {
        specs.first().map(|s| s.label()).unwrap_or_default()
    } else {
        specs.iter().map(|s| s.label()).collect::<Vec<_>>().join("|")
    }
}

/// Scale attached to the garrote direction: `τ̂` when positive, otherwise
/// `σ̂²`. The p-value does not depend on it.
pub fn garrote_scale(null_fit: &NullModelFit) -> f64 {
    if null_fit.tau > 0.0 {
        null_fit.tau
    } else {
        null_fit.sigma2
    }
}

/// `T̂₀ = τ̂ (y − Xβ̂)ᵀ V₀⁻¹ K₁₂ V₀⁻¹ (y − Xβ̂)`, with `σ̂²` in place of `τ̂`
/// on the boundary `τ̂ = 0`.
pub fn score_statistic(y: &DVector<f64>, x: &DMatrix<f64>, null_fit: &NullModelFit, k12: &KernelMatrix) -> Result<f64> {
    let n = y.len();
    if x.nrows() != n || k12.n() != n || null_fit.p0.nrows() != n || null_fit.beta.len() != x.ncols() {
        return Err(Error::DimensionMismatch(
            "y, X, null fit and interaction kernel disagree in size".into(),
        ));
    }
    if null_fit.tau < 0.0 {
        return Err(Error::InvalidParameter(format!(
            "negative variance component {}",
            null_fit.tau
        )));
    }
    // P₀y = V₀⁻¹(y − Xβ̂)
    let v = &null_fit.p0 * y;
    let q = v.dot(&(k12.values() * &v));
    Ok((garrote_scale(null_fit) * q).max(0.0))
}

/// Scaled chi-square reference distribution for `T̂₀`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Satterthwaite {
    pub kappa: f64,
    pub nu: f64,
    pub p_value: f64,
    /// Null mean of the statistic.
    pub mean: f64,
    /// Efficient information for the garrote parameter.
    pub efficient_information: f64,
    /// Set when the interaction kernel carries no information (`p = 1`).
    pub degenerate: bool,
}

/// Moment match `κχ²_ν` with mean `m = τ̂ tr(P₀K₁₂)` and variance `4Ĩ`,
/// where `Ĩ` is the efficient information for `δ` after projecting out
/// `(τ, σ²)`.
pub fn satterthwaite_pvalue(t0: f64, null_fit: &NullModelFit, k0: &KernelMatrix, k12: &KernelMatrix) -> Result<Satterthwaite> {
    if !(t0 >= 0.0) {
        return Err(Error::InvalidParameter(format!("statistic must be nonnegative (got {t0})")));
    }
    let p0 = &null_fit.p0;
    let n = p0.nrows();
    if k0.n() != n || k12.n() != n {
        return Err(Error::DimensionMismatch("kernels do not match the null fit".into()));
    }
    let g = garrote_scale(null_fit);
    let m12 = p0 * k12.values();
    let m0 = p0 * k0.values();
    let tr = linalg::trace_of_product;
    let mean = g * m12.trace();
    let i_dd = 0.5 * g * g * tr(&m12, &m12);
    let i_dt = 0.5 * g * tr(&m12, &m0);
    let i_ds = 0.5 * g * tr(&m12, p0);
    let i_tt = 0.5 * tr(&m0, &m0);
    let i_ts = 0.5 * tr(&m0, p0);
    let i_ss = 0.5 * tr(p0, p0);
    let det = i_tt * i_ss - i_ts * i_ts;
    let projected = if det > 1e-12 * i_tt * i_ss {
        (i_dt * i_dt * i_ss - 2.0 * i_dt * i_ds * i_ts + i_ds * i_ds * i_tt) / det
    } else if i_ss > 0.0 {
        i_ds * i_ds / i_ss
    } else {
        0.0
    };
    let info = i_dd - projected;
    if !mean.is_finite() || !info.is_finite() {
        return Err(Error::Numerical("non-finite Satterthwaite moments".into()));
    }
    if !(mean > 0.0) || !(info > 1e-12 * i_dd.max(f64::MIN_POSITIVE)) {
        return Ok(Satterthwaite {
            kappa: f64::NAN,
            nu: f64::NAN,
            p_value: 1.0,
            mean,
            efficient_information: info,
            degenerate: true,
        });
    }
    let kappa = 2.0 * info / mean;
    let nu = mean * mean / (2.0 * info);
    let p_value = if t0 == 0.0 {
        1.0
    } else {
        gamma_ur(nu / 2.0, t0 / (2.0 * kappa)).clamp(0.0, 1.0)
    };
    Ok(Satterthwaite {
        kappa,
        nu,
        p_value,
        mean,
        efficient_information: info,
        degenerate: false,
    })
}

/// `T̂₀` with the REML scores of `(τ, σ²)` projected out,
/// `T̂₀ − 2 I_δθ I_θθ⁻¹ U_θ`, floored at zero.
///
/// At an interior REML optimum `U_θ = 0` and this equals `T̂₀`. On the
/// boundary `τ̂ = 0` the score for `τ` is negative, and `T̂₀` alone is
/// biased toward zero whenever `K₁₂` overlaps `K₀`.
pub fn efficient_statistic(t0: f64, y: &DVector<f64>, null_fit: &NullModelFit, k0: &KernelMatrix, k12: &KernelMatrix) -> Result<f64> {
    let p0 = &null_fit.p0;
    let n = p0.nrows();
    if y.len() != n || k0.n() != n || k12.n() != n {
        return Err(Error::DimensionMismatch("y and kernels do not match the null fit".into()));
    }
    let g = garrote_scale(null_fit);
    let m12 = p0 * k12.values();
    let m0 = p0 * k0.values();
    let tr = linalg::trace_of_product;
    let i_dt = 0.5 * g * tr(&m12, &m0);
    let i_ds = 0.5 * g * tr(&m12, p0);
    let i_tt = 0.5 * tr(&m0, &m0);
    let i_ts = 0.5 * tr(&m0, p0);
    let i_ss = 0.5 * tr(p0, p0);
    let v = p0 * y;
    let u_tau = 0.5 * (v.dot(&(k0.values() * &v)) - m0.trace());
    let u_sigma = 0.5 * (v.norm_squared() - p0.trace());
    let det = i_tt * i_ss - i_ts * i_ts;
    let (b_tau, b_sigma) = if det > 1e-12 * i_tt * i_ss {
        ((i_dt * i_ss - i_ds * i_ts) / det, (i_ds * i_tt - i_dt * i_ts) / det)
    } else if i_ss > 0.0 {
        (0.0, i_ds / i_ss)
    } else {
        (0.0, 0.0)
    };
    let t = t0 - 2.0 * (b_tau * u_tau + b_sigma * u_sigma);
    if !t.is_finite() {
        return Err(Error::Numerical("non-finite efficient statistic".into()));
    }
    Ok(t.max(0.0))
}

/// Full output of [`test_interaction`].
#[derive(Debug, Clone)]
pub struct InteractionTestResult {
    pub statistic: f64,
    /// [`efficient_statistic`] of `statistic`, the value referred to `κχ²_ν`.
    pub adjusted_statistic: f64,
    pub kappa: f64,
    pub nu: f64,
    pub p_value: f64,
    pub degenerate: bool,
    pub null_fit: NullModelFit,
    pub ensemble: EnsembleFit,
    pub null_kernel: KernelMatrix,
    pub interaction_kernel: KernelMatrix,
    pub group_names: Vec<String>,
    pub tested_pair: (String, String),
    /// Resolved per-group specs of each base kernel, when built from specs.
    pub base_specs: Vec<Vec<KernelSpec>>,
}

/// Serializable summary of a test.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestRecord {
    pub statistic: f64,
    pub adjusted_statistic: f64,
    pub kappa: Option<f64>,
    pub nu: Option<f64>,
    pub p_value: f64,
    pub degenerate: bool,
    pub weights: Vec<f64>,
    pub lambdas: Vec<f64>,
    pub cv_errors: Vec<f64>,
    pub library: Vec<String>,
    pub group_names: Vec<String>,
    pub tested_pair: (String, String),
    pub tau: f64,
    pub sigma2: f64,
    pub beta: Vec<f64>,
}

impl InteractionTestResult {
    pub fn record(&self) -> TestRecord {
        let finite = |v: f64| v.is_finite().then_some(v);
        TestRecord {
            statistic: self.statistic,
            adjusted_statistic: self.adjusted_statistic,
            kappa: finite(self.kappa),
            nu: finite(self.nu),
            p_value: self.p_value,
            degenerate: self.degenerate,
            weights: self.ensemble.weights.clone(),
            lambdas: self.ensemble.lambdas.clone(),
            cv_errors: self.ensemble.cv_errors.clone(),
            library: self.ensemble.library.clone(),
            group_names: self.group_names.clone(),
            tested_pair: self.tested_pair.clone(),
            tau: self.null_fit.tau,
            sigma2: self.null_fit.sigma2,
            beta: self.null_fit.beta.iter().copied().collect(),
        }
    }
}

/// Runs the test on precomputed per-group kernel matrices of each base kernel.
pub fn test_with_kernels(
    bases: &[BaseKernel],
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    test: &TestSpec,
    config: &TestConfig,
) -> Result<InteractionTestResult> {
    test.check()?;
    if bases.is_empty() {
        return Err(Error::Config("no base kernels".into()));
    }
    let n = y.len();
    if x.nrows() != n {
        return Err(Error::DimensionMismatch(format!(
            "X has {} rows, y has {n} entries",
            x.nrows()
        )));
    }
    linalg::check_finite("outcome", y.as_slice())?;
    linalg::check_full_rank(x)?;

    let standardized: Vec<Vec<KernelMatrix>> = bases
        .iter()
        .map(|b| {
            if b.groups.len() != test.groups.len() {
                return Err(Error::Config(format!(
                    "base kernel {} has {} groups, expected {}",
                    b.label,
                    b.groups.len(),
                    test.groups.len()
                )));
            }
            if b.groups.iter().any(|k| k.n() != n) {
                return Err(Error::DimensionMismatch(format!(
                    "base kernel {} does not match the sample size {n}",
                    b.label
                )));
            }
            b.groups.iter().map(standardize_group).collect()
        })
        .collect::<Result<_>>()?;
    let pairs = standardized
        .iter()
        .map(|groups| pair_from_standardized(groups, test))
        .collect::<Result<Vec<_>>>()?;

    let y_res = linalg::ols_residual(x, y)?;
    let nulls: Vec<KernelMatrix> = pairs.iter().map(|p| p.null.clone()).collect();
    let labels = bases.iter().map(|b| b.label.clone()).collect();
    let fit = ensemble::cvek_from_kernels(labels, &nulls, &y_res, &config.ensemble)?;
    let null_fit = reml::reml_fit_spectral(&fit.eigen, x, y)?;

    let k12 = match config.bridge {
        InteractionBridge::WeightedInteractions => {
            let mut k = DMatrix::zeros(n, n);
            for (p, &u) in pairs.iter().zip(&fit.weights) {
                if u != 0.0 {
                    k += p.interaction.values() * u;
                }
            }
            k
        }
        InteractionBridge::WeightedGroups => {
            let m = test.groups.len();
            let weighted: Vec<DMatrix<f64>> = (0..m)
                .map(|g| {
                    let mut k = DMatrix::zeros(n, n);
                    for (groups, &u) in standardized.iter().zip(&fit.weights) {
                        if u != 0.0 {
                            k += groups[g].values() * u;
                        }
                    }
                    k
                })
                .collect();
            let refs: Vec<&DMatrix<f64>> = weighted.iter().collect();
            compose(&refs, test.test_pair, test.nuisance_policy)?.1
        }
    };
    let k12 = KernelMatrix::from_parts(
        k12,
        pairs[0].interaction.source().clone(),
        false,
    );

    let statistic = score_statistic(y, x, &null_fit, &k12)?;
    let adjusted_statistic = efficient_statistic(statistic, y, &null_fit, &fit.k_ens, &k12)?;
    let sw = satterthwaite_pvalue(adjusted_statistic, &null_fit, &fit.k_ens, &k12)?;
    Ok(InteractionTestResult {
        statistic,
        adjusted_statistic,
        kappa: sw.kappa,
        nu: sw.nu,
        p_value: sw.p_value,
        degenerate: sw.degenerate,
        null_kernel: fit.k_ens.clone(),
        ensemble: fit,
        null_fit,
        interaction_kernel: k12,
        group_names: test.groups.clone(),
        tested_pair: test.pair_names(),
        base_specs: Vec::new(),
    })
}

/// Full pipeline: ensemble fit of the null kernel structure, REML on the
/// ensemble kernel, score statistic and p-value.
pub fn test_interaction(
    design: &GroupedDesign,
    y: &DVector<f64>,
    test: &TestSpec,
    model: &ModelKernel,
    config: &TestConfig,
) -> Result<InteractionTestResult> {
    test.validate(design)?;
    if y.len() != design.n() {
        return Err(Error::DimensionMismatch(format!(
            "y has {} entries, design has {} rows",
            y.len(),
            design.n()
        )));
    }
    let specs = model.resolve(design, test, y)?;
    let bases = base_kernels(design, &specs)?;
    let mut result = test_with_kernels(&bases, design.fixed_effects(), y, test, config)?;
    result.base_specs = specs;
    Ok(result)
}
