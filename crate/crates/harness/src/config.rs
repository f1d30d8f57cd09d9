//! TOML experiment configuration.
//!
//! Every file names its experiment kind and a seed, then carries one section
//! with the kind's parameters:
//!
//! ```toml
//! experiment = "oracle-check"
//! seed = 0
//!
//! [oracle]
//! instance = "reference"
//! expected = 46.47
//! tolerance = 0.02
//! ```

use std::path::{Path, PathBuf};

use cmdp_core::monte_carlo::MCConfig;
use cmdp_core::primal_dual::{EvaluatorKind, StepKind, StepSchedule};
use cmdp_envs::inventory::InventoryConfig;
use cmdp_envs::queue::CostRegime;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("malformed config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("experiment `{kind}` needs a [{section}] section")]
    MissingSection { kind: &'static str, section: &'static str },
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    Inventory,
    Queue,
    RandomCmdp,
    OracleCheck,
    TheoremCheck,
    DecompositionCheck,
    Invariants,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            Self::Inventory => "inventory",
            Self::Queue => "queue",
            Self::RandomCmdp => "random-cmdp",
            Self::OracleCheck => "oracle-check",
            Self::TheoremCheck => "theorem-check",
            Self::DecompositionCheck => "decomposition-check",
            Self::Invariants => "invariants",
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    pub seed: u64,
    /// Output directory; `--out` takes precedence.
    #[serde(default)]
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub oracle: Option<OracleSection>,
    #[serde(default)]
    pub inventory: Option<InventorySection>,
    #[serde(default)]
    pub random: Option<RandomSection>,
    #[serde(default)]
    pub theorem: Option<TheoremSection>,
    #[serde(default)]
    pub decomposition: Option<DecompositionSection>,
    #[serde(default)]
    pub invariants: Option<InvariantsSection>,
    #[serde(default)]
    pub queue: Option<QueueSection>,
}

/// Named inventory instance, optionally replaced by an explicit model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InventoryPreset {
    Reference,
    Reduced,
}

fn inventory_model(preset: InventoryPreset, model: &Option<InventoryConfig>) -> InventoryConfig {
    model.clone().unwrap_or_else(|| match preset {
        InventoryPreset::Reference => InventoryConfig::reference(),
        InventoryPreset::Reduced => InventoryConfig::reduced(),
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleSection {
    pub instance: InventoryPreset,
    #[serde(default)]
    pub model: Option<InventoryConfig>,
    /// Expected optimal cost on the unnormalized scale.
    pub expected: f64,
    pub tolerance: f64,
    /// Wall-clock limit in seconds.
    #[serde(default)]
    pub time_limit: Option<f64>,
}

impl OracleSection {
    pub fn model(&self) -> InventoryConfig {
        inventory_model(self.instance, &self.model)
    }
}

/// Sampled or exact evaluation, as written in a config.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum EvaluatorSpec {
    Exact,
    MonteCarlo { replications: usize, horizon: usize },
}

impl EvaluatorSpec {
    pub fn build(self) -> EvaluatorKind {
        match self {
            Self::Exact => EvaluatorKind::Exact,
            // the per-iteration seed is derived by the solver
            Self::MonteCarlo { replications, horizon } => {
                EvaluatorKind::MonteCarlo(MCConfig::new(replications, horizon, 0))
            }
        }
    }
}

pub fn schedule(kind: StepKind, base: f64) -> StepSchedule {
    StepSchedule { kind, base }
}

/// Closed interval `[lo, hi]` written as a two-element array.
pub type Interval = [f64; 2];

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InventoryAcceptance {
    /// Final running averaged cost (unnormalized) of constant-step runs.
    pub cost: Interval,
    /// Violation of the averaged policy for constant-step runs.
    pub violation: Interval,
    /// Minimum R² of the rate regression, every schedule.
    pub min_r2: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InventorySection {
    pub instance: InventoryPreset,
    #[serde(default)]
    pub model: Option<InventoryConfig>,
    pub schedules: Vec<StepKind>,
    pub step: f64,
    pub iterations: usize,
    /// Independent runs per schedule, seeded `seed, seed + 1, …`.
    #[serde(default = "one")]
    pub runs: usize,
    pub evaluator: EvaluatorSpec,
    #[serde(default = "unit_slack")]
    pub dual_slack: f64,
    #[serde(default)]
    pub acceptance: Option<InventoryAcceptance>,
}

impl InventorySection {
    pub fn model(&self) -> InventoryConfig {
        inventory_model(self.instance, &self.model)
    }
}

fn one() -> usize {
    1
}
fn unit_slack() -> f64 {
    1.0
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RandomSection {
    pub n_states: usize,
    pub max_actions: usize,
    pub n_constraints: usize,
    pub discount: f64,
    pub slack: f64,
    pub schedule: StepKind,
    pub step: f64,
    pub iterations: usize,
    pub evaluator: EvaluatorSpec,
    #[serde(default = "unit_slack")]
    pub dual_slack: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TheoremSection {
    pub fixtures: usize,
    /// Upper limits; each fixture draws its sizes from `1..=max` (states
    /// from `2..=max`).
    pub max_states: usize,
    pub max_actions: usize,
    pub max_constraints: usize,
    pub discount: f64,
    /// Threshold slack above the built-in strictly feasible policy.
    pub slack: f64,
    pub horizons: Vec<usize>,
    pub schedules: Vec<StepKind>,
    pub step: f64,
    #[serde(default = "unit_slack")]
    pub dual_slack: f64,
    /// Adds one fixture whose constraints can never bind.
    #[serde(default)]
    pub vacuous_fixture: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DecompositionSection {
    pub instance: InventoryPreset,
    #[serde(default)]
    pub model: Option<InventoryConfig>,
    pub schedule: StepKind,
    pub step: f64,
    pub iterations: usize,
    pub tolerance: f64,
    pub dual_radius: f64,
    #[serde(default = "unit_slack")]
    pub dual_slack: f64,
}

impl DecompositionSection {
    pub fn model(&self) -> InventoryConfig {
        inventory_model(self.instance, &self.model)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InvariantsSection {
    /// Random draws per randomized property.
    pub draws: usize,
    /// Random instances for the transportation solver.
    pub transport_instances: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum QueueScale {
    /// Tenfold smaller system, `γ = 0.9`.
    Scaled,
    /// Full-size system; long-running and gated.
    Standard,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThresholdSection {
    pub class: usize,
    pub varied_pool: usize,
    /// Occupancy of the class in every pool; the varied entry is overwritten.
    pub fixed: Vec<u32>,
    pub range: [u32; 2],
    pub max_queue: u32,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QueueSection {
    pub scale: QueueScale,
    pub regimes: Vec<CostRegime>,
    /// Discount factors (standard scale only; the scaled system uses 0.9).
    #[serde(default)]
    pub discounts: Vec<f64>,
    #[serde(default)]
    pub iterations: Option<usize>,
    #[serde(default)]
    pub step: Option<f64>,
    #[serde(default)]
    pub training_replications: Option<usize>,
    #[serde(default)]
    pub evaluation_replications: Option<usize>,
    #[serde(default)]
    pub states: Option<usize>,
    #[serde(default)]
    pub q_replications: Option<usize>,
    #[serde(default)]
    pub thresholds: Vec<ThresholdSection>,
    /// The standard scale refuses to run unless this is set.
    #[serde(default)]
    pub allow_long_running: bool,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let cfg: Self = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read { path: path.into(), source })?;
        Self::from_toml(&text)
    }

    fn section<'a, T>(&self, s: &'a Option<T>, name: &'static str) -> Result<&'a T, ConfigError> {
        s.as_ref().ok_or(ConfigError::MissingSection { kind: self.experiment.name(), section: name })
    }

    pub fn oracle(&self) -> Result<&OracleSection, ConfigError> {
        self.section(&self.oracle, "oracle")
    }
    pub fn inventory(&self) -> Result<&InventorySection, ConfigError> {
        self.section(&self.inventory, "inventory")
    }
    pub fn random(&self) -> Result<&RandomSection, ConfigError> {
        self.section(&self.random, "random")
    }
    pub fn theorem(&self) -> Result<&TheoremSection, ConfigError> {
        self.section(&self.theorem, "theorem")
    }
    pub fn decomposition(&self) -> Result<&DecompositionSection, ConfigError> {
        self.section(&self.decomposition, "decomposition")
    }
    pub fn invariants(&self) -> Result<&InvariantsSection, ConfigError> {
        self.section(&self.invariants, "invariants")
    }
    pub fn queue(&self) -> Result<&QueueSection, ConfigError> {
        self.section(&self.queue, "queue")
    }

    /// Shape checks that do not need to build any model.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: &str| Err(ConfigError::Invalid(m.to_string()));
        match self.experiment {
            ExperimentKind::OracleCheck => {
                let o = self.oracle()?;
                if !(o.tolerance >= 0.0) {
                    return bad("oracle tolerance must be nonnegative");
                }
                o.model().validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
            }
            ExperimentKind::Inventory => {
                let s = self.inventory()?;
                if s.schedules.is_empty() || s.iterations == 0 || s.runs == 0 {
                    return bad("inventory needs at least one schedule, iteration and run");
                }
                if !(s.step > 0.0) {
                    return bad("step must be positive");
                }
                s.model().validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
            }
            ExperimentKind::RandomCmdp => {
                let s = self.random()?;
                if s.n_states == 0 || s.max_actions == 0 || s.iterations == 0 || !(s.step > 0.0) {
                    return bad("random instance needs states, actions, iterations and a positive step");
                }
            }
            ExperimentKind::TheoremCheck => {
                let s = self.theorem()?;
                if s.fixtures == 0 || s.horizons.is_empty() || s.schedules.is_empty() {
                    return bad("theorem check needs fixtures, horizons and schedules");
                }
                if s.max_states < 2 || s.max_actions == 0 || s.max_constraints == 0 {
                    return bad("theorem fixtures need ≥ 2 states, ≥ 1 action and ≥ 1 constraint");
                }
                if s.horizons.iter().any(|&t| t < 2) || !(s.step > 0.0) {
                    return bad("horizons must be ≥ 2 and the step positive");
                }
            }
            ExperimentKind::DecompositionCheck => {
                let s = self.decomposition()?;
                if s.iterations == 0 || !(s.step > 0.0) || !(s.tolerance >= 0.0) {
                    return bad("decomposition check needs iterations, a positive step and a tolerance");
                }
                s.model().validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
            }
            ExperimentKind::Invariants => {
                self.invariants()?;
            }
            ExperimentKind::Queue => {
                let s = self.queue()?;
                if s.regimes.is_empty() {
                    return bad("queue needs at least one cost regime");
                }
                if s.scale == QueueScale::Standard && s.discounts.is_empty() {
                    return bad("the standard queue needs discount factors");
                }
                for t in &s.thresholds {
                    if t.fixed.len() != 3 || t.class >= 3 || t.varied_pool >= 3 || t.range[0] > t.range[1] {
                        return bad("threshold scan: class/pool out of range or empty occupancy range");
                    }
                }
            }
        }
        Ok(())
    }
}
