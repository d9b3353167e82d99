//! Browser bindings for a small interactive tour of the toolkit.
//!
//! Every export takes and returns JSON strings so the page needs no
//! generated TypeScript types. The `*_json` functions hold the logic and are
//! tested natively.

use cvek::interaction::{comparison_model, comparison_models, TestConfig};
use cvek::kernel::{eval_kernel, kernel_matrix};
use cvek::sim::{generate_dataset, sample_rkhs_function, SimulationScenario, TruthKernel};
use cvek::surface::{surface_grid, SurfaceModel};
use cvek::{KernelSpec, NuisancePolicy, TestSpec};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use wasm_bindgen::prelude::*;

fn to_json<T: Serialize>(v: &T) -> Result<String, String> {
    serde_json::to_string(v).map_err(|e| e.to_string())
}

fn parse<'a, T: Deserialize<'a>>(text: &'a str) -> Result<T, String> {
    serde_json::from_str(text).map_err(|e| format!("bad request: {e}"))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ProfileRequest {
    kernels: Vec<KernelSpec>,
    #[serde(default = "default_max_r")]
    max_r: f64,
    #[serde(default = "default_points")]
    points: usize,
    /// Seed of the one-dimensional sample path drawn from each kernel.
    #[serde(default)]
    seed: u64,
}

fn default_max_r() -> f64 {
    3.0
}

fn default_points() -> usize {
    121
}

#[derive(Serialize)]
struct Profile {
    label: String,
    /// `k(0, r)` over `r`.
    values: Vec<f64>,
    /// A function `h = Kα` on the grid `x = r − max_r / 2`.
    sample: Vec<f64>,
}

#[derive(Serialize)]
struct ProfileResponse {
    r: Vec<f64>,
    profiles: Vec<Profile>,
}

/// Kernel value against distance, and one sampled function, per kernel.
pub fn kernel_profiles_json(request: &str) -> Result<String, String> {
    let req: ProfileRequest = parse(request)?;
    if !(2..=2000).contains(&req.points) || !(req.max_r > 0.0 && req.max_r.is_finite()) {
        return Err("need 2..=2000 points and a positive max_r".into());
    }
    let r: Vec<f64> = (0..req.points)
        .map(|i| req.max_r * i as f64 / (req.points - 1) as f64)
        .collect();
    let x = DMatrix::from_iterator(req.points, 1, r.iter().map(|v| v - req.max_r / 2.0));
    let mut profiles = Vec::new();
    for spec in &req.kernels {
        let values = r
            .iter()
            .map(|&d| eval_kernel(spec, &[0.0], &[d]))
            .collect::<cvek::Result<Vec<_>>>()
            .map_err(|e| e.to_string())?;
        let k = kernel_matrix(spec, &x).map_err(|e| e.to_string())?;
        let sample = sample_rkhs_function(&k, req.seed).map_err(|e| e.to_string())?;
        profiles.push(Profile {
            label: spec.label(),
            values,
            sample: sample.iter().copied().collect(),
        });
    }
    to_json(&ProfileResponse { r, profiles })
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioRequest {
    truth: TruthKernel,
    delta: f64,
    #[serde(default = "default_n")]
    n: usize,
    #[serde(default = "default_noise")]
    noise_sd: f64,
    #[serde(default)]
    seed: u64,
    #[serde(default = "default_model")]
    model: String,
}

fn default_n() -> usize {
    200
}

fn default_noise() -> f64 {
    cvek::sim::CALIBRATED_NOISE_SD
}

fn default_model() -> String {
    "CVEK_RBF".into()
}

impl ScenarioRequest {
    fn scenario(&self) -> Result<SimulationScenario, String> {
        if !(20..=400).contains(&self.n) {
            return Err("n must be between 20 and 400 in the browser".into());
        }
        let mut s = SimulationScenario::standard(self.truth, self.delta, self.seed);
        s.n = self.n;
        s.noise_sd = self.noise_sd;
        s.reps = 1;
        s.validate().map_err(|e| e.to_string())?;
        Ok(s)
    }
}

/// Names of the comparison models.
pub fn model_names_json() -> String {
    let names: Vec<String> = comparison_models().into_iter().map(|m| m.name).collect();
    serde_json::to_string(&names).expect("strings serialize")
}

/// Simulates one dataset and tests the interaction between its two groups.
pub fn simulate_and_test_json(request: &str) -> Result<String, String> {
    let req: ScenarioRequest = parse(request)?;
    let scenario = req.scenario()?;
    let model = comparison_model(&req.model).ok_or_else(|| format!("unknown model '{}'", req.model))?;
    let data = generate_dataset(&scenario, 0).map_err(|e| e.to_string())?;
    let design = data.design().map_err(|e| e.to_string())?;
    let test = TestSpec::for_design(&design, "z1", "z2", NuisancePolicy::TwoGroup).map_err(|e| e.to_string())?;
    let result = cvek::test_interaction(&design, &data.y, &test, &model.kernel, &TestConfig::default())
        .map_err(|e| e.to_string())?;
    to_json(&result.record())
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SurfaceRequest {
    #[serde(flatten)]
    scenario: ScenarioRequest,
    #[serde(default = "default_grid")]
    grid_size: usize,
}

fn default_grid() -> usize {
    25
}

/// Simulates one dataset and returns the fitted surface over the first PC of each group.
pub fn surface_json(request: &str) -> Result<String, String> {
    let req: SurfaceRequest = parse(request)?;
    if !(2..=60).contains(&req.grid_size) {
        return Err("grid size must be between 2 and 60".into());
    }
    let scenario = req.scenario.scenario()?;
    let model = comparison_model(&req.scenario.model).ok_or_else(|| format!("unknown model '{}'", req.scenario.model))?;
    let data = generate_dataset(&scenario, 0).map_err(|e| e.to_string())?;
    let design = data.design().map_err(|e| e.to_string())?;
    let test = TestSpec::for_design(&design, "z1", "z2", NuisancePolicy::TwoGroup).map_err(|e| e.to_string())?;
    let specs = model.kernel.resolve(&design, &test, &data.y).map_err(|e| e.to_string())?;
    let fit = SurfaceModel::fit(&design, &data.y, &test, &specs, &TestConfig::default().ensemble, 1.0)
        .map_err(|e| e.to_string())?;
    let grid = surface_grid(&fit, "z1", 0, "z2", 0, req.grid_size).map_err(|e| e.to_string())?;
    to_json(&grid)
}

#[wasm_bindgen]
pub fn kernel_profiles(request: &str) -> Result<String, JsError> {
    kernel_profiles_json(request).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn model_names() -> String {
    model_names_json()
}

#[wasm_bindgen]
pub fn simulate_and_test(request: &str) -> Result<String, JsError> {
    simulate_and_test_json(request).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn surface(request: &str) -> Result<String, JsError> {
    surface_json(request).map_err(|e| JsError::new(&e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::Value;

    #[test]
    fn profiles_start_at_one_and_decay() {
        let out = kernel_profiles_json(
            r#"{"kernels": [{"family": "rbf", "sigma": 1.0}, {"family": "matern", "nu": 0.5, "sigma": 2.0}], "points": 11}"#,
        )
        .unwrap();
        let v: Value = serde_json::from_str(&out).unwrap();
        assert_eq!(v["r"].as_array().unwrap().len(), 11);
        for p in v["profiles"].as_array().unwrap() {
            let vals: Vec<f64> = p["values"].as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).collect();
            assert!((vals[0] - 1.0).abs() < 1e-12);
            assert!(vals.windows(2).all(|w| w[1] <= w[0]));
            assert_eq!(p["sample"].as_array().unwrap().len(), 11);
        }
    }

    #[test]
    fn bad_requests_are_reported() {
        assert!(kernel_profiles_json(r#"{"kernels": [{"family": "rbf"}]}"#).is_err());
        assert!(kernel_profiles_json(r#"{"kernels": [], "points": 1}"#).is_err());
        let req = r#"{"truth": {"family": "matern", "nu": 1.5, "sigma": 1.0}, "delta": 0.0, "model": "nope"}"#;
        assert!(simulate_and_test_json(req).unwrap_err().contains("nope"));
    }

    #[test]
    fn strong_interaction_is_detected() {
        let req = r#"{"truth": {"family": "matern", "nu": 1.5, "sigma": 1.0}, "delta": 1.0, "seed": 3}"#;
        let v: Value = serde_json::from_str(&simulate_and_test_json(req).unwrap()).unwrap();
        assert!(v["p_value"].as_f64().unwrap() < 0.05, "{v}");
        let names: Vec<String> = serde_json::from_str(&model_names_json()).unwrap();
        assert_eq!(names.len(), 12);
    }

    #[test]
    fn surface_has_requested_shape() {
        let req = r#"{"truth": {"family": "gaussian", "sigma": 1.0}, "delta": 0.5, "n": 60, "grid_size": 7, "model": "RBF_Median"}"#;
        let v: Value = serde_json::from_str(&surface_json(req).unwrap()).unwrap();
        let rows = v["values"].as_array().unwrap();
        assert_eq!(rows.len(), 7);
        assert!(rows.iter().all(|r| r.as_array().unwrap().len() == 7));
    }
}
