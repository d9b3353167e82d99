//! Fitted exposure-response surfaces over pairs of principal components.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::design::GroupedDesign;
use crate::ensemble::{self, EnsembleConfig};
use crate::error::{Error, Result};
use crate::interaction::{compose, TestSpec};
use crate::kernel::{cross_kernel_matrix, kernel_matrix, KernelMatrix, KernelSource, KernelSpec};
use crate::linalg;
use crate::pca::{pca, Pca};

struct SurfaceBase {
    specs: Vec<KernelSpec>,
    group_traces: Vec<f64>,
    full_trace: f64,
    alpha: DVector<f64>,
    weight: f64,
}

/// Ensemble fit of `K₀ + w·K₁₂` used to predict `ĥ` at new points.
pub struct SurfaceModel {
    design: GroupedDesign,
    test: TestSpec,
    bases: Vec<SurfaceBase>,
    interaction_weight: f64,
}

impl SurfaceModel {
    /// Fits the joint main-effect and interaction model. `specs` holds the
    /// per-group kernel specs of each base kernel.
    pub fn fit(
        design: &GroupedDesign,
        y: &DVector<f64>,
        test: &TestSpec,
        specs: &[Vec<KernelSpec>],
        config: &EnsembleConfig,
        interaction_weight: f64,
    ) -> Result<Self> {
        test.validate(design)?;
        if !(interaction_weight >= 0.0) || !interaction_weight.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "interaction weight must be >= 0 (got {interaction_weight})"
            )));
        }
        if specs.is_empty() {
            return Err(Error::Config("no base kernels".into()));
        }
        let mut fulls = Vec::with_capacity(specs.len());
        let mut partial = Vec::with_capacity(specs.len());
        for group_specs in specs {
            if group_specs.len() != design.groups().len() {
                return Err(Error::Config("one kernel spec per group expected".into()));
            }
            let mut traces = Vec::with_capacity(group_specs.len());
            let mut mats = Vec::with_capacity(group_specs.len());
            for (g, s) in design.groups().iter().zip(group_specs) {
                let k = kernel_matrix(s, &g.values)?;
                let t = k.trace();
                if !(t > 0.0) {
                    return Err(Error::Degenerate(format!("kernel {s} has zero trace")));
                }
                traces.push(t);
                mats.push(k.into_values() / t);
            }
            let refs: Vec<&DMatrix<f64>> = mats.iter().collect();
            let (k0, k12) = compose(&refs, test.test_pair, test.nuisance_policy)?;
            let full = k0 + k12 * interaction_weight;
            let full_trace = full.trace();
            fulls.push(KernelMatrix::from_parts(
                full,
                KernelSource::Composition("surface".into()),
                false,
            ));
            partial.push((group_specs.clone(), traces, full_trace));
        }
        let y_res = linalg::ols_residual(design.fixed_effects(), y)?;
        let labels = specs.iter().map(|s| s[0].label()).collect();
        let fit = ensemble::cvek_from_kernels(labels, &fulls, &y_res, config)?;
        let bases = partial
            .into_iter()
            .zip(fit.alphas)
            .zip(&fit.weights)
            .map(|(((specs, group_traces, full_trace), alpha), &weight)| SurfaceBase {
                specs,
                group_traces,
                full_trace,
                alpha,
                weight,
            })
            .collect();
        Ok(Self {
            design: design.clone(),
            test: test.clone(),
            bases,
            interaction_weight,
        })
    }

    pub fn design(&self) -> &GroupedDesign {
        &self.design
    }

    /// `ĥ` at new points given per group on the standardized scale
    /// (rows are points).
    pub fn predict(&self, points: &[DMatrix<f64>]) -> Result<Vec<f64>> {
        let groups = self.design.groups();
        if points.len() != groups.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} point blocks for {} groups",
                points.len(),
                groups.len()
            )));
        }
        let m = points[0].nrows();
        if points.iter().any(|p| p.nrows() != m) {
            return Err(Error::DimensionMismatch("point blocks differ in row count".into()));
        }
        let mut h = DVector::zeros(m);
        for base in self.bases.iter().filter(|b| b.weight != 0.0) {
            let cross = groups
                .iter()
                .zip(points)
                .zip(&base.specs)
                .zip(&base.group_traces)
                .map(|(((g, p), s), t)| cross_kernel_matrix(s, p, &g.values).map(|c| c / *t))
                .collect::<Result<Vec<_>>>()?;
            let refs: Vec<&DMatrix<f64>> = cross.iter().collect();
            let (c0, c12) = compose(&refs, self.test.test_pair, self.test.nuisance_policy)?;
            let c = (c0 + c12 * self.interaction_weight) / base.full_trace;
            h += c * &base.alpha * base.weight;
        }
        Ok(h.iter().copied().collect())
    }
}

/// Predicted surface over a grid of two PC scores.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurfaceGrid {
    pub group_a: String,
    pub pc_a: usize,
    pub group_b: String,
    pub pc_b: usize,
    pub axis_a: Vec<f64>,
    pub axis_b: Vec<f64>,
    /// `values[i][j] = ĥ(axis_a[i], axis_b[j])`
    pub values: Vec<Vec<f64>>,
    /// Median PC scores of every group, used for the components held fixed.
    pub held_fixed: Vec<(String, Vec<f64>)>,
    pub variance_explained_a: Vec<f64>,
    pub variance_explained_b: Vec<f64>,
}

impl SurfaceGrid {
    /// Long format with columns `pc_a, pc_b, h_hat`.
    pub fn to_csv(&self) -> Result<String> {
        let mut a = Vec::new();
        let mut b = Vec::new();
        let mut h = Vec::new();
        for (i, &sa) in self.axis_a.iter().enumerate() {
            for (j, &sb) in self.axis_b.iter().enumerate() {
                a.push(sa);
                b.push(sb);
                h.push(self.values[i][j]);
            }
        }
        crate::io::columns_to_csv(&[("pc_a", &a), ("pc_b", &b), ("h_hat", &h)])
    }
}

/// Linear-interpolation quantile of unsorted data.
pub fn quantile(data: &[f64], p: f64) -> f64 {
    let mut v = data.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let pos = p.clamp(0.0, 1.0) * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    v[lo] + (pos - lo as f64) * (v[hi] - v[lo])
}

fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
        .collect()
}

/// Predicts `ĥ` over PC `pc_a` of `group_a` and PC `pc_b` of `group_b`
/// (zero-based), each spanning its 5th to 95th percentile, with every other
/// component at its median.
pub fn surface_grid(
    model: &SurfaceModel,
    group_a: &str,
    pc_a: usize,
    group_b: &str,
    pc_b: usize,
    grid_size: usize,
) -> Result<SurfaceGrid> {
    if grid_size < 2 {
        return Err(Error::InvalidParameter(format!(
            "grid size must be at least 2 (got {grid_size})"
        )));
    }
    let design = model.design();
    let find = |name: &str| {
        design
            .group_index(name)
            .ok_or_else(|| Error::Config(format!("unknown group '{name}'")))
    };
    let (ga, gb) = (find(group_a)?, find(group_b)?);
    let pcas: Vec<Pca> = design
        .groups()
        .iter()
        .map(|g| pca(&g.values))
        .collect::<Result<_>>()?;
    for (g, pc) in [(ga, pc_a), (gb, pc_b)] {
        if pc >= pcas[g].components() {
            return Err(Error::InvalidParameter(format!(
                "group '{}' has {} components, PC index {} is out of range",
                design.groups()[g].name,
                pcas[g].components(),
                pc + 1
            )));
        }
    }
    if ga == gb && pc_a == pc_b {
        return Err(Error::InvalidParameter("the two axes must differ".into()));
    }
    let medians: Vec<Vec<f64>> = pcas
        .iter()
        .map(|p| {
            (0..p.components())
                .map(|k| quantile(p.scores.column(k).as_slice(), 0.5))
                .collect()
        })
        .collect();
    let axis = |g: usize, pc: usize| {
        let s = pcas[g].scores.column(pc);
        linspace(quantile(s.as_slice(), 0.05), quantile(s.as_slice(), 0.95), grid_size)
    };
    let axis_a = axis(ga, pc_a);
    let axis_b = axis(gb, pc_b);

    let count = grid_size * grid_size;
    let mut blocks: Vec<DMatrix<f64>> = design
        .groups()
        .iter()
        .map(|g| DMatrix::zeros(count, g.values.ncols()))
        .collect();
    for i in 0..grid_size {
        for j in 0..grid_size {
            let row = i * grid_size + j;
            for (g, block) in blocks.iter_mut().enumerate() {
                let mut s = medians[g].clone();
                if g == ga {
                    s[pc_a] = axis_a[i];
                }
                if g == gb {
                    s[pc_b] = axis_b[j];
                }
                let z = pcas[g].to_input(&s)?;
                for (c, v) in z.into_iter().enumerate() {
                    block[(row, c)] = v;
                }
            }
        }
    }
    let h = model.predict(&blocks)?;
    let values = (0..grid_size)
        .map(|i| h[i * grid_size..(i + 1) * grid_size].to_vec())
        .collect();
    Ok(SurfaceGrid {
        group_a: group_a.into(),
        pc_a,
        group_b: group_b.into(),
        pc_b,
        axis_a,
        axis_b,
        values,
        held_fixed: design.group_names().into_iter().zip(medians).collect(),
        variance_explained_a: pcas[ga].variance_explained.clone(),
        variance_explained_b: pcas[gb].variance_explained.clone(),
    })
}
