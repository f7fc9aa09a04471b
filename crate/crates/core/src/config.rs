//! Structured experiment configuration, read from TOML.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::approx::ApproxParams;
use crate::cbc::CbcMode;
use crate::error::{Error, Result};
use crate::kernels::{EvalMode, KernelSpec};
use crate::lattice::is_prime;
use crate::perm::PermStructure;
use crate::weights::SpectralWeight;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Cbc,
    Shift,
    Error,
    Approx,
    Convergence,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TaskParams {
    /// lattice sizes, all prime
    pub n: Vec<u64>,
    /// requested sizes of assembled approximation rules
    #[serde(rename = "N")]
    pub big_n: Vec<u64>,
    pub mode: CbcMode,
    pub tau: f64,
    pub delta: f64,
    pub seed: u64,
    /// shift trials; zero skips the shift search
    pub trials: usize,
    pub search_budget: usize,
    /// certificate tolerance relative to the initial error `beta0^d`
    pub tol: f64,
    /// truncation of spectral dual sums
    pub half_width: u64,
    /// dimensions for the `E^2 n` versus `d` experiment
    pub dims: Vec<usize>,
}

impl Default for TaskParams {
    fn default() -> Self {
        TaskParams {
            n: Vec::new(),
            big_n: Vec::new(),
            mode: CbcMode::Minimize,
            tau: 2.0,
            delta: 0.5,
            seed: 0,
            trials: 0,
            search_budget: 16,
            tol: 1e-6,
            half_width: 12,
            dims: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputPaths {
    pub rule: Option<PathBuf>,
    pub json: Option<PathBuf>,
    pub csv: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub space: SpectralWeight,
    pub structure: PermStructure,
    #[serde(default)]
    pub eval: Option<EvalMode>,
    #[serde(default)]
    pub task: Option<Task>,
    #[serde(default)]
    pub params: TaskParams,
    #[serde(default)]
    pub output: OutputPaths,
}

impl ExperimentConfig {
    pub fn new(space: SpectralWeight, structure: PermStructure) -> Self {
        ExperimentConfig {
            space,
            structure,
            eval: None,
            task: None,
            params: TaskParams::default(),
            output: OutputPaths::default(),
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(&bad) = self.params.n.iter().find(|&&n| !is_prime(n)) {
            return Err(Error::NotPrime(bad));
        }
        if self.params.big_n.contains(&0) {
            return Err(Error::InvalidParameter("N must be positive".into()));
        }
        if let CbcMode::BetterThanAverage { lambda } = self.params.mode {
            if !(lambda >= 1.0 && lambda < 2.0 * self.space.alpha()) {
                return Err(Error::InvalidParameter(format!(
                    "lambda = {lambda} must lie in [1, 2 alpha)"
                )));
            }
        }
        let p = &self.params;
        let uses_tau = self.task == Some(Task::Approx) || !p.big_n.is_empty();
        if uses_tau && !(p.tau > 1.0 && p.tau < 2.0 * self.space.alpha()) {
            return Err(Error::InvalidParameter(format!("tau = {} must lie in (1, 2 alpha)", p.tau)));
        }
        if !(p.delta > 0.0) {
            return Err(Error::InvalidParameter(format!("delta = {} must be positive", p.delta)));
        }
        if !(p.tol >= 0.0) {
            return Err(Error::InvalidParameter(format!("tol = {} must be non-negative", p.tol)));
        }
        if p.search_budget == 0 {
            return Err(Error::InvalidParameter("search_budget must be positive".into()));
        }
        if p.dims.contains(&0) {
            return Err(Error::InvalidParameter("dimensions must be positive".into()));
        }
        self.kernel_spec()?;
        Ok(())
    }

    pub fn kernel_spec(&self) -> Result<KernelSpec> {
        match self.eval {
            Some(mode) => KernelSpec::new(self.space.clone(), self.structure.clone(), mode),
            None => Ok(KernelSpec::auto(self.space.clone(), self.structure.clone())),
        }
    }

    pub fn approx_params(&self) -> ApproxParams {
        ApproxParams {
            tau: self.params.tau,
            delta: self.params.delta,
            search_budget: self.params.search_budget,
            seed: self.params.seed,
        }
    }
}
