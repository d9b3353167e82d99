//! Cross-validated kernel ensembles and a garrote-kernel score test for
//! interactions between groups of covariates.

#[cfg(feature = "cli")]
pub mod cli;
pub mod config;
pub mod design;
pub mod ensemble;
pub mod error;
pub mod interaction;
pub mod io;
pub mod kernel;
pub mod krr;
pub mod linalg;
pub mod pca;
pub mod reml;
pub mod sim;
pub mod surface;

pub use design::{CovariateGroup, GroupedDesign};
pub use ensemble::{cvek, EnsembleConfig, EnsembleFit};
pub use error::{Error, Result};
pub use interaction::{
    test_interaction, InteractionTestResult, ModelKernel, NamedModel, NuisancePolicy, TestConfig, TestSpec,
};
pub use kernel::{KernelMatrix, KernelSpec, MaternNu};
