//! TOML run configuration.
//!
//! ```toml
//! [data]
//! path = "data.csv"
//! outcome = "y"
//! fixed_effects = ["age"]
//!
//! [[groups]]
//! name = "metals"
//! columns = ["as", "mn", "pb"]
//!
//! [[groups]]
//! name = "diet"
//! columns = ["protein", "fat"]
//!
//! [test]
//! pair = ["metals", "diet"]
//! model = "CVEK_RBF"
//!
//! [grids]
//! lambda = { min = 1e-5, max = 1e2, points = 30 }
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::design::GroupedDesign;
use crate::ensemble::{ErrorMode, SimplexKind};
use crate::error::{Error, Result};
use crate::interaction::{comparison_model, InteractionBridge, ModelKernel, NuisancePolicy, TestConfig, TestSpec};
use crate::io::{DataConfig, GroupConfig};
use crate::kernel::KernelSpec;
use crate::krr::CvScheme;
use crate::linalg::log_grid;
use crate::sim::SimulationGrid;

/// A grid given as explicit values or as a log-spaced range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Grid {
    Values(Vec<f64>),
    Range { min: f64, max: f64, points: usize },
}

impl Grid {
    pub fn values(&self, key: &str) -> Result<Vec<f64>> {
        let v = match self {
            Grid::Values(v) => v.clone(),
            Grid::Range { min, max, points } => {
                if !(*min > 0.0 && max >= min && *points >= 1) {
                    return Err(Error::Config(format!(
                        "grids.{key}: need 0 < min <= max and points >= 1"
                    )));
                }
                log_grid(*min, *max, *points)
            }
        };
        if v.is_empty() || v.iter().any(|x| !(*x > 0.0) || !x.is_finite()) {
            return Err(Error::Config(format!("grids.{key}: values must be positive")));
        }
        Ok(v)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct GridsSection {
    pub lambda: Option<Grid>,
    pub rbf_mle_sigma: Option<Grid>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TestSection {
    /// Tested groups; defaults to the first two.
    pub pair: Option<(String, String)>,
    pub nuisance_policy: NuisancePolicy,
    /// A comparison model name, or `"library"` for the `[[library]]` ensemble.
    pub model: Option<String>,
    pub bridge: InteractionBridge,
    pub error_mode: ErrorMode,
    pub simplex: SimplexKind,
    pub cv: CvScheme,
    /// Weight of the interaction kernel in surface fits.
    pub interaction_weight: f64,
}

impl Default for TestSection {
    fn default() -> Self {
        Self {
            pair: None,
            nuisance_policy: NuisancePolicy::TwoGroup,
            model: None,
            bridge: InteractionBridge::WeightedInteractions,
            error_mode: ErrorMode::Residuals,
            simplex: SimplexKind::Convex,
            cv: CvScheme::Loo,
            interaction_weight: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub data: Option<DataConfig>,
    #[serde(default)]
    pub groups: Vec<GroupConfig>,
    #[serde(default)]
    pub test: TestSection,
    #[serde(default)]
    pub library: Vec<KernelSpec>,
    #[serde(default)]
    pub grids: GridsSection,
    pub simulate: Option<SimulationGrid>,
    /// Directory of the config file; relative paths resolve against it.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl Config {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string().trim_end().to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg = Self::parse(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            e => e,
        })?;
        cfg.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(cfg)
    }

    /// Data file: `override_path` if given, else `data.path` relative to the config.
    pub fn data_path(&self, override_path: Option<&Path>) -> Result<PathBuf> {
        if let Some(p) = override_path {
            return Ok(p.to_path_buf());
        }
        let rel = self
            .data
            .as_ref()
            .and_then(|d| d.path.as_ref())
            .ok_or_else(|| Error::Config("no data file: set data.path or pass --data".into()))?;
        Ok(self.base_dir.join(rel))
    }

    pub fn data_section(&self) -> Result<&DataConfig> {
        self.data
            .as_ref()
            .ok_or_else(|| Error::Config("missing [data] section".into()))
    }

    /// Ensemble and bridge settings; `seed` drives k-fold assignment.
    pub fn test_config(&self, seed: Option<u64>) -> Result<TestConfig> {
        let mut cfg = TestConfig::default();
        if let Some(g) = &self.grids.lambda {
            cfg.ensemble.lambda_grid = g.values("lambda")?;
        }
        cfg.ensemble.error_mode = self.test.error_mode;
        cfg.ensemble.simplex = self.test.simplex;
        cfg.ensemble.cv = match (self.test.cv, seed) {
            (CvScheme::Kfold { k, .. }, Some(seed)) => CvScheme::Kfold { k, seed },
            (cv, _) => cv,
        };
        if let CvScheme::Kfold { k, .. } = cfg.ensemble.cv {
            if k < 2 {
                return Err(Error::Config("test.cv.k must be at least 2".into()));
            }
        }
        cfg.bridge = self.test.bridge;
        Ok(cfg)
    }

    pub fn model(&self) -> Result<ModelKernel> {
        let mle_grid = |k: ModelKernel| -> Result<ModelKernel> {
            match (k, &self.grids.rbf_mle_sigma) {
                (ModelKernel::RbfMle { .. }, Some(g)) => Ok(ModelKernel::RbfMle {
                    sigma_grid: g.values("rbf_mle_sigma")?,
                }),
                (k, _) => Ok(k),
            }
        };
        match self.test.model.as_deref() {
            Some("library") | None if !self.library.is_empty() => Ok(ModelKernel::Ensemble(self.library.clone())),
            Some("library") => Err(Error::Config("test.model = \"library\" but [[library]] is empty".into())),
            None => Err(Error::Config("no model: set test.model or add [[library]] kernels".into())),
            Some(name) => {
                let m = comparison_model(name).ok_or_else(|| {
                    Error::Config(format!("test.model: unknown model '{name}'"))
                })?;
                mle_grid(m.kernel)
            }
        }
    }

    pub fn test_spec(&self, design: &GroupedDesign) -> Result<TestSpec> {
        let names = design.group_names();
        let (a, b) = match &self.test.pair {
            Some(p) => p.clone(),
            None if names.len() >= 2 => (names[0].clone(), names[1].clone()),
            None => return Err(Error::Config("need at least two groups to test".into())),
        };
        TestSpec::for_design(design, &a, &b, self.test.nuisance_policy)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn full_config_parses() {
        let cfg = Config::parse(
            r#"
            [data]
            path = "d.csv"
            outcome = "y"

            [[groups]]
            name = "a"
            columns = ["z1"]

            [[groups]]
            name = "b"
            columns = ["z2"]

            [test]
            pair = ["a", "b"]
            cv = { kind = "kfold", k = 5, seed = 3 }

            [[library]]
            family = "rbf"
            sigma = 1.0

            [[library]]
            family = "matern"
            nu = 1.5
            sigma = 2.0

            [grids]
            lambda = { min = 1e-4, max = 10.0, points = 5 }
            rbf_mle_sigma = [0.5, 1.0]

            [simulate]
            reps = 3
            models = ["CVEK_RBF"]
            truths = [{ family = "matern", nu = 1.5, sigma = 1.0 }]
            "#,
        )
        .unwrap();
        assert_eq!(cfg.library.len(), 2);
        assert_eq!(cfg.test_config(None).unwrap().ensemble.lambda_grid.len(), 5);
        assert_eq!(
            cfg.test_config(Some(9)).unwrap().ensemble.cv,
            CvScheme::Kfold { k: 5, seed: 9 }
        );
        assert!(matches!(cfg.model().unwrap(), ModelKernel::Ensemble(_)));
        assert_eq!(cfg.simulate.unwrap().reps, 3);
    }

    #[test]
    fn unknown_key_is_named() {
        let err = Config::parse("[test]\nmodle = \"Linear\"\n").unwrap_err();
        assert!(err.to_string().contains("modle"), "{err}");
        let err = Config::parse("[[library]]\nfamily = \"rbf\"\n").unwrap_err();
        assert!(err.to_string().contains("sigma"), "{err}");
    }

    #[test]
    fn model_selection() {
        let cfg = Config::parse("[test]\nmodel = \"RBF_MLE\"\n[grids]\nrbf_mle_sigma = [2.0]\n").unwrap();
        assert_eq!(cfg.model().unwrap(), ModelKernel::RbfMle { sigma_grid: vec![2.0] });
        assert!(Config::parse("[test]\nmodel = \"nope\"\n").unwrap().model().is_err());
        assert!(Config::default().model().is_err());
    }
}
