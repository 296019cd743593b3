//! JSON run configuration. Every block has defaults; unknown keys are
//! rejected so that typos fail loudly instead of silently using a default.

use std::path::{Path, PathBuf};

use fracbayes_core::bayes::{McmcConfig, OrderProposal};
use fracbayes_core::forward::analytic_source;
use fracbayes_core::prior::{Prior, PriorConfig};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_out")]
    pub out: PathBuf,
    #[serde(default)]
    pub mesh: MeshBlock,
    #[serde(default)]
    pub source: SourceBlock,
    #[serde(default)]
    pub truth: TruthBlock,
    #[serde(default)]
    pub prior: PriorConfig,
    #[serde(default)]
    pub observation: ObservationBlock,
    #[serde(default)]
    pub experiment: ExperimentBlock,
}

fn default_seed() -> u64 {
    2024
}

fn default_out() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeshBlock {
    pub n_cells: usize,
    /// Retained eigenpairs of the spectral solver.
    pub modes: usize,
}

impl Default for MeshBlock {
    fn default() -> Self {
        Self {
            n_cells: 1024,
            modes: 256,
        }
    }
}

/// Frequency `b` of the cosine source.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceBlock {
    pub b: f64,
}

impl Default for SourceBlock {
    fn default() -> Self {
        Self { b: 0.5 }
    }
}

/// Parameters generating synthetic data; `xi = null` means `a ≡ 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TruthBlock {
    pub s: f64,
    #[serde(default)]
    pub xi: Option<Vec<f64>>,
}

impl Default for TruthBlock {
    fn default() -> Self {
        Self { s: 0.7, xi: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObservationBlock {
    pub m: usize,
    pub gamma: f64,
}

impl Default for ObservationBlock {
    fn default() -> Self {
        Self { m: 100, gamma: 0.075 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepBlock {
    pub m: Vec<usize>,
    pub gamma: Vec<f64>,
}

impl Default for SweepBlock {
    fn default() -> Self {
        Self {
            m: vec![1, 100, 10_000],
            gamma: vec![0.3, 0.15, 0.075],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McmcBlock {
    pub n_steps: usize,
    pub beta: f64,
    /// Reflected random-walk step for `s`.
    pub s_step: f64,
    /// Sample `ξ` too; otherwise the coefficient is fixed at the truth.
    pub infer_coefficient: bool,
    pub burn_in: usize,
    /// Inversion mesh of the joint model; every `ξ` proposal needs a fresh
    /// eigendecomposition, so it is coarser than the data-generating mesh.
    pub n_cells: usize,
    pub modes: usize,
}

impl Default for McmcBlock {
    fn default() -> Self {
        Self {
            n_steps: 10_000,
            beta: 0.2,
            s_step: 0.05,
            infer_coefficient: true,
            burn_in: 1_000,
            n_cells: 128,
            modes: 64,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FaultInjection {
    /// Perturbs one stiffness diagonal entry before the null-space check.
    CorruptStiffness,
}

/// Settings of the verification suite.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifyBlock {
    pub pairs: usize,
    pub coarse_cells: usize,
    pub fine_cells: usize,
    pub n_eigen: usize,
    /// Upper end of the log-uniform range of `‖Δa‖_∞`.
    pub max_amplitude: f64,
    pub extension_cells: usize,
    pub extension_layers: usize,
    pub y_max: f64,
    pub grading: f64,
    /// Noise level of the well-posedness sweep; the observation count comes
    /// from the observation block.
    pub wellposedness_gamma: f64,
}

impl Default for VerifyBlock {
    fn default() -> Self {
        Self {
            pairs: 20,
            coarse_cells: 128,
            fine_cells: 512,
            n_eigen: 5,
            max_amplitude: 0.1,
            extension_cells: 256,
            extension_layers: 128,
            y_max: 8.0,
            grading: 3.0,
            wellposedness_gamma: 0.3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentBlock {
    #[serde(default = "default_grid_points")]
    pub grid_points: usize,
    /// Present ⇒ `posterior-grid` runs the full `m × γ` table.
    #[serde(default)]
    pub sweep: Option<SweepBlock>,
    #[serde(default)]
    pub mcmc: McmcBlock,
    #[serde(default = "default_epsilons")]
    pub epsilons: Vec<f64>,
    #[serde(default)]
    pub verify: VerifyBlock,
    #[serde(default)]
    pub fault_injection: Option<FaultInjection>,
}

fn default_grid_points() -> usize {
    fracbayes_core::bayes::DEFAULT_GRID_POINTS
}

fn default_epsilons() -> Vec<f64> {
    vec![1e-1, 1e-2, 1e-3]
}

impl Default for ExperimentBlock {
    fn default() -> Self {
        Self {
            grid_points: default_grid_points(),
            sweep: None,
            mcmc: McmcBlock::default(),
            epsilons: default_epsilons(),
            verify: VerifyBlock::default(),
            fault_injection: None,
        }
    }
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: default_seed(),
            out: default_out(),
            mesh: MeshBlock::default(),
            source: SourceBlock::default(),
            truth: TruthBlock::default(),
            prior: PriorConfig::default(),
            observation: ObservationBlock::default(),
            experiment: ExperimentBlock::default(),
        }
    }
}

fn invalid(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        serde_json::from_str(text).map_err(|e| invalid(format!("invalid config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| invalid(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    /// Checks every block before any computation starts.
    pub fn validate(&self) -> Result<(), CliError> {
        let MeshBlock { n_cells, modes } = self.mesh;
        if n_cells < 2 {
            return Err(invalid(format!("mesh.n_cells = {n_cells}: need at least 2 cells")));
        }
        if modes == 0 || modes > n_cells {
            return Err(invalid(format!("mesh.modes = {modes}: must lie in 1..={n_cells}")));
        }
        analytic_source(self.source.b, 0.0).map_err(|e| invalid(format!("source.b: {e}")))?;
        if !(0.0..=1.0).contains(&self.truth.s) {
            return Err(invalid(format!("truth.s = {} must lie in [0, 1]", self.truth.s)));
        }
        let prior = self.prior().map_err(|e| invalid(format!("prior: {e}")))?;
        if let Some(xi) = &self.truth.xi {
            if xi.len() != prior.n_kl() {
                return Err(invalid(format!(
                    "truth.xi has {} entries, prior.n_kl = {}",
                    xi.len(),
                    prior.n_kl()
                )));
            }
        }
        if !(self.observation.gamma.is_finite() && self.observation.gamma > 0.0) {
            return Err(invalid(format!(
                "observation.gamma = {} must be positive",
                self.observation.gamma
            )));
        }
        let ex = &self.experiment;
        if ex.grid_points < 51 {
            return Err(invalid(format!(
                "experiment.grid_points = {}: need at least 51",
                ex.grid_points
            )));
        }
        if let Some(sweep) = &ex.sweep {
            if sweep.m.is_empty() || sweep.gamma.is_empty() {
                return Err(invalid("experiment.sweep needs at least one m and one gamma"));
            }
            if let Some(g) = sweep.gamma.iter().find(|g| !(g.is_finite() && **g > 0.0)) {
                return Err(invalid(format!("experiment.sweep.gamma contains {g}")));
            }
        }
        self.mcmc_config()
            .validate()
            .map_err(|e| invalid(format!("experiment.mcmc: {e}")))?;
        if ex.mcmc.n_cells < 2 || ex.mcmc.modes == 0 || ex.mcmc.modes > ex.mcmc.n_cells {
            return Err(invalid("experiment.mcmc: need n_cells ≥ 2 and modes in 1..=n_cells"));
        }
        if ex.mcmc.burn_in >= ex.mcmc.n_steps {
            return Err(invalid("experiment.mcmc.burn_in must be smaller than n_steps"));
        }
        if ex.epsilons.is_empty() || ex.epsilons.iter().any(|e| !(e.is_finite() && *e > 0.0)) {
            return Err(invalid(
                "experiment.epsilons must be a non-empty list of positive values",
            ));
        }
        let v = &ex.verify;
        if v.pairs == 0 || v.n_eigen == 0 {
            return Err(invalid("experiment.verify: pairs and n_eigen must be positive"));
        }
        if v.coarse_cells < 8 || v.fine_cells < v.coarse_cells || v.extension_cells < 8 {
            return Err(invalid(
                "experiment.verify: need 8 ≤ coarse_cells ≤ fine_cells and extension_cells ≥ 8",
            ));
        }
        if v.n_eigen + 3 > v.coarse_cells {
            return Err(invalid("experiment.verify.n_eigen too large for coarse_cells"));
        }
        if !(v.max_amplitude > 0.0 && v.max_amplitude.is_finite()) {
            return Err(invalid("experiment.verify.max_amplitude must be positive"));
        }
        if v.extension_layers < 2 || !(v.y_max > 0.0) || !(v.grading >= 1.0) {
            return Err(invalid(
                "experiment.verify: extension grid needs layers ≥ 2, y_max > 0, grading ≥ 1",
            ));
        }
        if !(v.wellposedness_gamma > 0.0 && v.wellposedness_gamma.is_finite()) {
            return Err(invalid("experiment.verify.wellposedness_gamma must be positive"));
        }
        Ok(())
    }

    pub fn prior(&self) -> fracbayes_core::Result<Prior> {
        self.prior.build()
    }

    pub fn mcmc_config(&self) -> McmcConfig {
        let b = &self.experiment.mcmc;
        McmcConfig {
            n_steps: b.n_steps,
            beta: b.beta,
            order_proposal: OrderProposal::ReflectedWalk { step: b.s_step },
            init: None,
        }
    }

    /// SHA-256 of the canonical serialization, excluding the output location.
    pub fn hash(&self) -> String {
        let mut canonical = self.clone();
        canonical.out = PathBuf::new();
        let text = serde_json::to_string(&canonical).expect("config serializes");
        hex::encode(Sha256::digest(text.as_bytes()))
    }
}
