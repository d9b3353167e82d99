//! Monte Carlo size and power study.
//!
//! Outcomes follow `y = h₁(z₁) + h₂(z₂) + δ·h₁₂(z₁, z₂) + ε` with each `h`
//! sampled from the span of a ground-truth kernel at the design points.

use std::fmt;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::design::GroupedDesign;
use crate::error::{Error, Result};
use crate::interaction::{self, comparison_model, NamedModel, TestConfig, TestSpec};
use crate::kernel::{hadamard, kernel_matrix, KernelMatrix, KernelSpec, MaternNu};
use crate::linalg;

/// Noise standard deviation calibrated against reference CVEK rejection rates.
pub const CALIBRATED_NOISE_SD: f64 = 0.25;

/// Rejection level of the study.
pub const LEVEL: f64 = 0.05;

/// Interaction strengths of the standard grid.
pub const STANDARD_DELTAS: [f64; 9] = [0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.8, 1.0];

/// Data-generating kernel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum TruthKernel {
    Matern { nu: f64, sigma: f64 },
    /// The `ν → ∞` limit of the Matérn family at the same complexity `σ`.
    Gaussian { sigma: f64 },
}

impl TruthKernel {
    pub fn spec(&self) -> Result<KernelSpec> {
        match *self {
            TruthKernel::Matern { nu, sigma } => KernelSpec::matern(MaternNu::from_value(nu)?, sigma),
            // exp(-σ²r²/2) = exp(-r²/s²) with s = √2/σ
            TruthKernel::Gaussian { sigma } => {
                if !(sigma > 0.0) {
                    return Err(Error::InvalidParameter(format!(
                        "complexity must be positive (got {sigma})"
                    )));
                }
                KernelSpec::rbf(std::f64::consts::SQRT_2 / sigma)
            }
        }
    }

    pub fn sigma(&self) -> f64 {
        match *self {
            TruthKernel::Matern { sigma, .. } | TruthKernel::Gaussian { sigma } => sigma,
        }
    }

    /// File-name friendly label, e.g. `matern3-2_sigma1`.
    pub fn slug(&self) -> String {
        match *self {
            TruthKernel::Matern { nu, sigma } => {
                format!("matern{}-2_sigma{}", (2.0 * nu).round() as i64, sigma)
            }
            TruthKernel::Gaussian { sigma } => format!("gaussian_sigma{sigma}"),
        }
    }
}

impl fmt::Display for TruthKernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            TruthKernel::Matern { nu, sigma } => {
                write!(f, "Matern {}/2, sigma = {sigma}", (2.0 * nu).round() as i64)
            }
            TruthKernel::Gaussian { sigma } => write!(f, "Gaussian RBF, sigma = {sigma}"),
        }
    }
}

/// The nine truth cells: Matérn 3/2, Matérn 5/2 and Gaussian at
/// `σ ∈ {0.5, 1, 1.5}`.
pub fn standard_truths() -> Vec<TruthKernel> {
    let sigmas = [0.5, 1.0, 1.5];
    let mut out = Vec::with_capacity(9);
    for nu in [1.5, 2.5] {
        out.extend(sigmas.iter().map(|&sigma| TruthKernel::Matern { nu, sigma }));
    }
    out.extend(sigmas.iter().map(|&sigma| TruthKernel::Gaussian { sigma }));
    out
}

/// Norm used to put sampled functions on a common scale.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum FunctionNorm {
    /// `sqrt(mean(h²)) = 1` over the design points.
    #[default]
    Empirical,
    /// `αᵀKα = 1`.
    Rkhs,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationScenario {
    pub n: usize,
    pub p1: usize,
    pub p2: usize,
    pub truth: TruthKernel,
    pub delta: f64,
    pub noise_sd: f64,
    pub reps: usize,
    pub seed: u64,
    #[serde(default)]
    pub norm: FunctionNorm,
}

impl SimulationScenario {
    /// `n = 200`, `p₁ = p₂ = 3`, calibrated noise, 500 replicates.
    pub fn standard(truth: TruthKernel, delta: f64, seed: u64) -> Self {
        Self {
            n: 200,
            p1: 3,
            p2: 3,
            truth,
            delta,
            noise_sd: CALIBRATED_NOISE_SD,
            reps: 500,
            seed,
            norm: FunctionNorm::Empirical,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 10 {
            return Err(Error::InvalidParameter(format!("n must be at least 10 (got {})", self.n)));
        }
        if self.p1 == 0 || self.p2 == 0 {
            return Err(Error::InvalidParameter("group dimensions must be positive".into()));
        }
        if self.reps == 0 {
            return Err(Error::InvalidParameter("reps must be at least 1".into()));
        }
        if !(self.delta >= 0.0) || !self.delta.is_finite() {
            return Err(Error::InvalidParameter(format!("delta must be >= 0 (got {})", self.delta)));
        }
        if !(self.noise_sd > 0.0) || !self.noise_sd.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "noise_sd must be positive (got {})",
                self.noise_sd
            )));
        }
        self.truth.spec().map(|_| ())
    }
}

/// Seeded generator for replicate `rep` of a scenario.
pub fn replicate_rng(seed: u64, rep: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(rep);
    rng
}

fn standard_normal_vector(rng: &mut impl Rng, n: usize) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.sample(StandardNormal))
}

fn sample_function(k: &KernelMatrix, rng: &mut impl Rng, norm: FunctionNorm) -> Result<DVector<f64>> {
    let alpha = standard_normal_vector(rng, k.n());
    let h = k.values() * &alpha;
    let scale = match norm {
        FunctionNorm::Empirical => linalg::rms(&h),
        FunctionNorm::Rkhs => alpha.dot(&h).max(0.0).sqrt(),
    };
    if !(scale > 0.0) {
        return Err(Error::Degenerate(
            "sampled function is identically zero".into(),
        ));
    }
    Ok(h / scale)
}

/// `h = Kα` with `α ~ N(0, I)`, scaled to unit empirical RMS norm.
pub fn sample_rkhs_function(k: &KernelMatrix, seed: u64) -> Result<DVector<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    sample_function(k, &mut rng, FunctionNorm::Empirical)
}

/// One simulated dataset with its generating components.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub z1: DMatrix<f64>,
    pub z2: DMatrix<f64>,
    pub y: DVector<f64>,
    pub h1: DVector<f64>,
    pub h2: DVector<f64>,
    pub h12: DVector<f64>,
    pub noise: DVector<f64>,
}

impl Dataset {
    /// Intercept-only design with groups `z1` and `z2`.
    pub fn design(&self) -> Result<GroupedDesign> {
        GroupedDesign::with_intercept(vec![
            ("z1".into(), self.z1.clone()),
            ("z2".into(), self.z2.clone()),
        ])
    }
}

/// Draws `Z₁, Z₂, α₁, α₂, α₁₂, ε` in that order from the replicate substream.
pub fn generate_dataset(scenario: &SimulationScenario, rep_index: u64) -> Result<Dataset> {
    scenario.validate()?;
    let n = scenario.n;
    let mut rng = replicate_rng(scenario.seed, rep_index);
    let z1 = DMatrix::from_fn(n, scenario.p1, |_, _| rng.sample(StandardNormal));
    let z2 = DMatrix::from_fn(n, scenario.p2, |_, _| rng.sample(StandardNormal));
    let spec = scenario.truth.spec()?;
    let k1 = kernel_matrix(&spec, &z1)?;
    let k2 = kernel_matrix(&spec, &z2)?;
    let k12 = hadamard(&k1, &k2)?;
    let h1 = sample_function(&k1, &mut rng, scenario.norm)?;
    let h2 = sample_function(&k2, &mut rng, scenario.norm)?;
    let h12 = sample_function(&k12, &mut rng, scenario.norm)?;
    let noise = standard_normal_vector(&mut rng, n) * scenario.noise_sd;
    let y = &h1 + &h2 + &h12 * scenario.delta + &noise;
    Ok(Dataset {
        z1,
        z2,
        y,
        h1,
        h2,
        h12,
        noise,
    })
}

/// Execution options for Monte Carlo runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunOptions {
    /// Worker threads; 1 runs sequentially.
    pub threads: usize,
    /// Record simplex and PSD checks for every fit.
    pub audit: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            threads: 1,
            audit: false,
        }
    }
}

/// Invariant checks over a set of fits.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Audit {
    pub fits: usize,
    /// Largest `|Σu − 1|`.
    pub max_weight_sum_error: f64,
    pub min_weight: f64,
    /// Smallest `λ_min/λ_max` of any null kernel.
    pub min_null_ratio: f64,
    /// Smallest `λ_min/λ_max` of any interaction kernel.
    pub min_interaction_ratio: f64,
}

impl Default for Audit {
    fn default() -> Self {
        Self {
            fits: 0,
            max_weight_sum_error: 0.0,
            min_weight: f64::INFINITY,
            min_null_ratio: f64::INFINITY,
            min_interaction_ratio: f64::INFINITY,
        }
    }
}

impl Audit {
    fn of(result: &interaction::InteractionTestResult) -> Self {
        let w = &result.ensemble.weights;
        let eig = &result.ensemble.eigen;
        let null_ratio = if eig.max_value() > 0.0 {
            eig.min_value() / eig.max_value()
        } else {
            0.0
        };
        Self {
            fits: 1,
            max_weight_sum_error: (w.iter().sum::<f64>() - 1.0).abs(),
            min_weight: w.iter().copied().fold(f64::INFINITY, f64::min),
            min_null_ratio: null_ratio,
            min_interaction_ratio: result.interaction_kernel.min_eigen_ratio(),
        }
    }

    pub fn merge(&mut self, other: &Audit) {
        self.fits += other.fits;
        self.max_weight_sum_error = self.max_weight_sum_error.max(other.max_weight_sum_error);
        self.min_weight = self.min_weight.min(other.min_weight);
        self.min_null_ratio = self.min_null_ratio.min(other.min_null_ratio);
        self.min_interaction_ratio = self.min_interaction_ratio.min(other.min_interaction_ratio);
    }

    /// Weights on the simplex within `1e-10` and kernels PSD within tolerance.
    pub fn passes(&self) -> bool {
        self.max_weight_sum_error <= 1e-10
            && self.min_weight >= 0.0
            && self.min_null_ratio >= -linalg::PSD_TOLERANCE
            && self.min_interaction_ratio >= -linalg::PSD_TOLERANCE
    }
}

/// Outcome of one replicate under one model.
#[derive(Debug, Clone, PartialEq)]
pub enum ReplicateOutcome {
    Tested { p_value: f64, degenerate: bool },
    /// The pipeline reported a degenerate input.
    Degenerate(String),
    Failed(String),
}

/// Rejection rate of one model in one scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioRate {
    pub model: String,
    pub rate: f64,
    pub rejections: usize,
    /// Replicates in the denominator.
    pub counted: usize,
    /// Degenerate replicates, excluded from the rate.
    pub excluded: usize,
    /// Failed replicates, counted as non-rejections.
    pub failures: usize,
    pub audit: Option<Audit>,
}

impl ScenarioRate {
    fn from_outcomes(model: &str, outcomes: &[ReplicateOutcome], audit: Option<Audit>) -> Self {
        let mut rejections = 0;
        let mut excluded = 0;
        let mut failures = 0;
        for o in outcomes {
            match o {
                ReplicateOutcome::Tested { degenerate: true, .. } | ReplicateOutcome::Degenerate(_) => excluded += 1,
                ReplicateOutcome::Tested { p_value, .. } => {
                    if *p_value <= LEVEL {
                        rejections += 1;
                    }
                }
                ReplicateOutcome::Failed(msg) => {
                    log::warn!("{model}: replicate failed: {msg}");
                    failures += 1;
                }
            }
        }
        let counted = outcomes.len() - excluded;
        let rate = if counted > 0 {
            rejections as f64 / counted as f64
        } else {
            f64::NAN
        };
        Self {
            model: model.into(),
            rate,
            rejections,
            counted,
            excluded,
            failures,
            audit,
        }
    }
}

fn test_dataset(data: &Dataset, model: &NamedModel, config: &TestConfig, audit: bool) -> (ReplicateOutcome, Option<Audit>) {
    let run = || -> Result<interaction::InteractionTestResult> {
        let design = data.design()?;
        let test = TestSpec::for_design(&design, "z1", "z2", interaction::NuisancePolicy::TwoGroup)?;
        interaction::test_interaction(&design, &data.y, &test, &model.kernel, config)
    };
    match run() {
        Ok(r) => {
            let a = audit.then(|| Audit::of(&r));
            (
                ReplicateOutcome::Tested {
                    p_value: r.p_value,
                    degenerate: r.degenerate,
                },
                a,
            )
        }
        Err(Error::Degenerate(msg)) => (ReplicateOutcome::Degenerate(msg), None),
        Err(e) => (ReplicateOutcome::Failed(e.to_string()), None),
    }
}

/// Runs `f` over `0..count` on `threads` workers, returning results in index order.
fn map_indexed<T: Send>(count: usize, threads: usize, f: impl Fn(usize) -> T + Sync + Send) -> Result<Vec<T>> {
    #[cfg(feature = "parallel")]
    {
        if threads > 1 {
            use rayon::prelude::*;
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .map_err(|e| Error::Config(format!("cannot start thread pool: {e}")))?;
            return Ok(pool.install(|| (0..count).into_par_iter().map(&f).collect()));
        }
    }
    let _ = threads;
    Ok((0..count).map(f).collect())
}

/// Rejection rates of several models on common replicate datasets.
pub fn run_scenario_models(
    scenario: &SimulationScenario,
    models: &[NamedModel],
    config: &TestConfig,
    options: RunOptions,
) -> Result<Vec<ScenarioRate>> {
    scenario.validate()?;
    if models.is_empty() {
        return Err(Error::Config("no models to evaluate".into()));
    }
    let per_rep = map_indexed(scenario.reps, options.threads, |rep| {
        match generate_dataset(scenario, rep as u64) {
            Ok(data) => models
                .iter()
                .map(|m| test_dataset(&data, m, config, options.audit))
                .collect::<Vec<_>>(),
            Err(e) => {
                let outcome = match e {
                    Error::Degenerate(msg) => ReplicateOutcome::Degenerate(msg),
                    e => ReplicateOutcome::Failed(e.to_string()),
                };
                vec![(outcome, None); models.len()]
            }
        }
    })?;
    Ok(models
        .iter()
        .enumerate()
        .map(|(j, m)| {
            let outcomes: Vec<ReplicateOutcome> = per_rep.iter().map(|r| r[j].0.clone()).collect();
            let audit = options.audit.then(|| {
                let mut a = Audit::default();
                for r in &per_rep {
                    if let Some(x) = &r[j].1 {
                        a.merge(x);
                    }
                }
                a
            });
            ScenarioRate::from_outcomes(&m.name, &outcomes, audit)
        })
        .collect())
}

/// Rejection rate of one model.
pub fn run_scenario(scenario: &SimulationScenario, model: &NamedModel, config: &TestConfig, options: RunOptions) -> Result<ScenarioRate> {
    Ok(run_scenario_models(scenario, std::slice::from_ref(model), config, options)?.remove(0))
}

/// Per-replicate p-values of one model, in replicate order.
pub fn replicate_pvalues(
    scenario: &SimulationScenario,
    model: &NamedModel,
    config: &TestConfig,
    threads: usize,
) -> Result<Vec<ReplicateOutcome>> {
    scenario.validate()?;
    map_indexed(scenario.reps, threads, |rep| match generate_dataset(scenario, rep as u64) {
        Ok(data) => test_dataset(&data, model, config, false).0,
        Err(e) => ReplicateOutcome::Failed(e.to_string()),
    })
}

/// Grid of truths, interaction strengths and models.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulationGrid {
    pub n: usize,
    pub p1: usize,
    pub p2: usize,
    pub truths: Vec<TruthKernel>,
    pub deltas: Vec<f64>,
    /// Names from the comparison model list.
    pub models: Vec<String>,
    pub noise_sd: f64,
    pub reps: usize,
    pub seed: u64,
    pub norm: FunctionNorm,
}

impl Default for SimulationGrid {
    fn default() -> Self {
        Self {
            n: 200,
            p1: 3,
            p2: 3,
            truths: standard_truths(),
            deltas: STANDARD_DELTAS.to_vec(),
            models: interaction::comparison_models().into_iter().map(|m| m.name).collect(),
            noise_sd: CALIBRATED_NOISE_SD,
            reps: 500,
            seed: 1,
            norm: FunctionNorm::Empirical,
        }
    }
}

impl SimulationGrid {
    pub fn resolve_models(&self) -> Result<Vec<NamedModel>> {
        if self.models.is_empty() {
            return Err(Error::Config("simulate.models is empty".into()));
        }
        self.models
            .iter()
            .map(|name| comparison_model(name).ok_or_else(|| Error::Config(format!("unknown model '{name}'"))))
            .collect()
    }

    /// Scenario for truth cell `cell`. Every δ of a cell shares the same
    /// replicate substreams, so columns use common random numbers.
    pub fn scenario(&self, cell: usize, delta: f64) -> SimulationScenario {
        SimulationScenario {
            n: self.n,
            p1: self.p1,
            p2: self.p2,
            truth: self.truths[cell],
            delta,
            noise_sd: self.noise_sd,
            reps: self.reps,
            seed: cell_seed(self.seed, cell as u64),
            norm: self.norm,
        }
    }
}

/// Seed of truth cell `cell`, derived from the run seed.
pub fn cell_seed(seed: u64, cell: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(u64::MAX - cell);
    rng.next_u64()
}

/// Rejection rates for one truth cell: one row per model, one column per δ.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateTable {
    pub truth: TruthKernel,
    pub deltas: Vec<f64>,
    pub rows: Vec<RateRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateRow {
    pub model: String,
    pub rates: Vec<ScenarioRate>,
}

impl RateTable {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("model");
        for d in &self.deltas {
            out.push_str(&format!(",delta_{d}"));
        }
        out.push('\n');
        for row in &self.rows {
            out.push_str(&csv_field(&row.model));
            for r in &row.rates {
                out.push_str(&format!(",{}", r.rate));
            }
            out.push('\n');
        }
        out
    }

    pub fn file_name(&self) -> String {
        format!("rates_{}.csv", self.truth.slug())
    }

    pub fn rate(&self, model: &str, delta: f64) -> Option<f64> {
        let j = self.deltas.iter().position(|&d| d == delta)?;
        self.rows.iter().find(|r| r.model == model).map(|r| r.rates[j].rate)
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Run metadata written next to the tables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetadata {
    pub seed: u64,
    pub reps: usize,
    pub threads: usize,
    pub wall_time_secs: f64,
    pub grid: SimulationGrid,
    pub failures: usize,
    pub excluded: usize,
}

/// Every (truth, δ, model) rate of the grid, one table per truth cell.
pub fn reproduce_tables(grid: &SimulationGrid, config: &TestConfig, options: RunOptions) -> Result<(Vec<RateTable>, RunMetadata)> {
    let models = grid.resolve_models()?;
    if grid.truths.is_empty() || grid.deltas.is_empty() {
        return Err(Error::Config("simulation grid needs truths and deltas".into()));
    }
    let start = Instant::now();
    let mut tables = Vec::with_capacity(grid.truths.len());
    let (mut failures, mut excluded) = (0, 0);
    for (cell, truth) in grid.truths.iter().enumerate() {
        let mut columns = Vec::with_capacity(grid.deltas.len());
        for &delta in &grid.deltas {
            log::info!("{truth}, delta = {delta}: {} replicates", grid.reps);
            let rates = run_scenario_models(&grid.scenario(cell, delta), &models, config, options)?;
            for r in &rates {
                failures += r.failures;
                excluded += r.excluded;
            }
            columns.push(rates);
        }
        let rows = models
            .iter()
            .enumerate()
            .map(|(j, m)| RateRow {
                model: m.name.clone(),
                rates: columns.iter().map(|c| c[j].clone()).collect(),
            })
            .collect();
        tables.push(RateTable {
            truth: *truth,
            deltas: grid.deltas.clone(),
            rows,
        });
    }
    let meta = RunMetadata {
        seed: grid.seed,
        reps: grid.reps,
        threads: options.threads,
        wall_time_secs: start.elapsed().as_secs_f64(),
        grid: grid.clone(),
        failures,
        excluded,
    };
    Ok((tables, meta))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::KernelSource;

    fn small(delta: f64) -> SimulationScenario {
        SimulationScenario {
            n: 30,
            reps: 2,
            ..SimulationScenario::standard(TruthKernel::Matern { nu: 1.5, sigma: 1.0 }, delta, 7)
        }
    }

    #[test]
    fn identity_kernel_gives_unit_rms() {
        let k = KernelMatrix::from_matrix(DMatrix::identity(50, 50), KernelSource::Composition("I".into())).unwrap();
        let h = sample_rkhs_function(&k, 3).unwrap();
        assert!((linalg::rms(&h) - 1.0).abs() < 1e-12);
        assert_eq!(h, sample_rkhs_function(&k, 3).unwrap());
    }

    #[test]
    fn zero_kernel_cannot_be_normalized() {
        let k = KernelMatrix::from_matrix(DMatrix::zeros(5, 5), KernelSource::Composition("0".into())).unwrap();
        assert!(sample_rkhs_function(&k, 1).is_err());
    }

    #[test]
    fn delta_enters_linearly() {
        let a = generate_dataset(&small(0.0), 1).unwrap();
        let b = generate_dataset(&small(1.0), 1).unwrap();
        assert_eq!(a.z1, b.z1);
        assert!((&b.y - &a.y - &a.h12).abs().max() < 1e-12);
        let again = generate_dataset(&small(0.0), 1).unwrap();
        assert_eq!(a.y, again.y);
        let other = generate_dataset(&small(0.0), 2).unwrap();
        assert_ne!(a.y, other.y);
    }

    #[test]
    fn gaussian_truth_is_matern_limit() {
        let spec = TruthKernel::Gaussian { sigma: 1.5 }.spec().unwrap();
        let x = [0.3, -0.2];
        let xp = [1.0, 0.4];
        let r2: f64 = x.iter().zip(&xp).map(|(a, b)| (a - b) * (a - b)).sum();
        let k = crate::kernel::eval_kernel(&spec, &x, &xp).unwrap();
        assert!((k - (-1.5f64 * 1.5 * r2 / 2.0).exp()).abs() < 1e-14);
    }

    #[test]
    fn scenario_validation() {
        let mut s = small(0.0);
        s.n = 5;
        assert!(s.validate().is_err());
        let mut s = small(0.0);
        s.delta = -0.1;
        assert!(s.validate().is_err());
    }

    #[test]
    fn csv_header_layout() {
        let table = RateTable {
            truth: TruthKernel::Gaussian { sigma: 1.0 },
            deltas: vec![0.0, 0.1, 1.0],
            rows: vec![],
        };
        assert_eq!(table.to_csv(), "model,delta_0,delta_0.1,delta_1\n");
        assert_eq!(table.file_name(), "rates_gaussian_sigma1.csv");
    }

    #[test]
    fn nine_truth_cells() {
        let t = standard_truths();
        assert_eq!(t.len(), 9);
        assert_eq!(t[0].slug(), "matern3-2_sigma0.5");
    }
}
