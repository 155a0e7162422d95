//! Experiment configuration files.
//!
//! ```json
//! { "seed": 7, "experiment": { "kind": "learn", "instance": { "values": [1, 0.5], "ctrs": [1, 0.4] }, "rounds": 1000 } }
//! ```
//!
//! Agents and slots are 0-based everywhere.

use std::path::Path;

use gsp_core::bayesian::{DistributionSpec, StrategyTable, DEFAULT_SAMPLES, DEFAULT_VALUE_POINTS};
use gsp_core::byzantine::ByzantineAgent;
use gsp_core::equilibria::DEFAULT_BUDGET;
use gsp_core::frontier::DEFAULT_RESTARTS;
use gsp_core::grid::DEFAULT_POINTS;
use gsp_core::{CtrProfile, Instance, ValueProfile};
use serde::{Deserialize, Serialize};

use crate::error::LabError;

pub const MAX_ROUNDS: usize = 100_000_000;
pub const MAX_SAMPLES: usize = 100_000_000;
pub const MAX_RESOLUTION: usize = 20_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub experiment: Experiment,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Experiment {
    Simulate(SimulateParams),
    CheckNe(CheckNeParams),
    Enumerate(EnumerateParams),
    Learn(LearnParams),
    Bpoa(BpoaParams),
    Byzantine(ByzantineParams),
    Poa3(Poa3Params),
    Cyclic(CyclicParams),
    TightInstance(TightInstanceParams),
}

impl Experiment {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Simulate(_) => "simulate",
            Self::CheckNe(_) => "check-ne",
            Self::Enumerate(_) => "enumerate",
            Self::Learn(_) => "learn",
            Self::Bpoa(_) => "bpoa",
            Self::Byzantine(_) => "byzantine",
            Self::Poa3(_) => "poa3",
            Self::Cyclic(_) => "cyclic",
            Self::TightInstance(_) => "tight-instance",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstanceSpec {
    pub values: Vec<f64>,
    /// Nonincreasing click-through rates.
    pub ctrs: Vec<f64>,
}

impl InstanceSpec {
    /// Padded to a square instance.
    pub fn build(&self) -> Result<Instance, LabError> {
        if self.values.is_empty() {
            return Err(LabError::Schema("instance has no agents".into()));
        }
        Ok(Instance::new(ValueProfile::new(self.values.clone())?, CtrProfile::new(self.ctrs.clone())?))
    }
}

fn default_points() -> usize {
    DEFAULT_POINTS
}
fn default_budget() -> u64 {
    DEFAULT_BUDGET as u64
}
fn default_one() -> usize {
    1
}
fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateParams {
    pub instance: InstanceSpec,
    /// Truthful when absent.
    #[serde(default)]
    pub bids: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckNeParams {
    pub instance: InstanceSpec,
    pub bids: Vec<f64>,
    #[serde(default = "default_points")]
    pub grid_points: usize,
    /// Explicit per-agent deviation levels; overrides `grid_points`.
    #[serde(default)]
    pub grid: Option<Vec<Vec<f64>>>,
    /// Defaults to `1e-6 · α_1 · max v`.
    #[serde(default)]
    pub epsilon: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SearchParams {
    pub slots: usize,
    pub ctr_samples: usize,
    pub value_samples: usize,
    #[serde(default)]
    pub refine_evals: usize,
}

/// Either every equilibrium of one instance, or a worst-case search over
/// sampled instances.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnumerateParams {
    #[serde(default)]
    pub instance: Option<InstanceSpec>,
    #[serde(default)]
    pub search: Option<SearchParams>,
    #[serde(default = "default_points")]
    pub grid_points: usize,
    #[serde(default = "default_budget")]
    pub budget: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LearnParams {
    pub instance: InstanceSpec,
    pub rounds: usize,
    #[serde(default = "default_points")]
    pub grid_points: usize,
    #[serde(default)]
    pub burn_in: usize,
    /// Write every n-th round to `rounds.csv`; 0 disables the log.
    #[serde(default = "default_one")]
    pub log_every: usize,
    /// Measure the structural property on the round distribution.
    #[serde(default = "default_true")]
    pub gamma: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StrategyChoice {
    Truthful,
    /// Iterated interim best response from truthful bidding.
    Search { iterations: usize, samples: usize },
    Table { table: StrategyTable },
}

fn default_strategy() -> StrategyChoice {
    StrategyChoice::Truthful
}
fn default_samples() -> usize {
    DEFAULT_SAMPLES
}
fn default_value_points() -> usize {
    DEFAULT_VALUE_POINTS
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BpoaParams {
    pub dists: Vec<DistributionSpec>,
    pub ctrs: Vec<f64>,
    #[serde(default = "default_strategy")]
    pub strategy: StrategyChoice,
    #[serde(default = "default_samples")]
    pub samples: usize,
    #[serde(default = "default_value_points")]
    pub value_points: usize,
    #[serde(default = "default_points")]
    pub deviation_points: usize,
    /// Samples for the structural property; 0 skips it.
    #[serde(default)]
    pub gamma_samples: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ByzantineParams {
    pub instance: InstanceSpec,
    /// Scripted agents; everyone else learns.
    #[serde(default)]
    pub byzantine: Vec<ByzantineAgent>,
    pub rounds: usize,
    #[serde(default = "default_points")]
    pub grid_points: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CaseTag {
    I,
    Ii,
}

fn default_resolution() -> usize {
    2000
}
fn default_restarts() -> usize {
    DEFAULT_RESTARTS
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Poa3Params {
    pub case: CaseTag,
    #[serde(default = "default_resolution")]
    pub resolution: usize,
    #[serde(default = "default_restarts")]
    pub restarts: usize,
}

fn default_min_slots() -> usize {
    3
}
fn default_max_slots() -> usize {
    8
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CyclicParams {
    #[serde(default = "default_min_slots")]
    pub min_slots: usize,
    #[serde(default = "default_max_slots")]
    pub max_slots: usize,
    #[serde(default = "default_restarts")]
    pub restarts: usize,
}

fn default_verify_points() -> usize {
    1000
}
fn default_tight_epsilon() -> f64 {
    1e-3
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TightInstanceParams {
    #[serde(default = "default_verify_points")]
    pub verify_points: usize,
    #[serde(default = "default_tight_epsilon")]
    pub epsilon: f64,
}

impl Default for TightInstanceParams {
    fn default() -> Self {
        Self {
            verify_points: default_verify_points(),
            epsilon: default_tight_epsilon(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self, LabError> {
        serde_json::from_str(text).map_err(|e| LabError::Schema(format!("config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self, LabError> {
        let text = std::fs::read_to_string(path).map_err(|e| LabError::Schema(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    /// Rejects parameter combinations outside the documented budgets.
    pub fn validate(&self) -> Result<(), LabError> {
        let rounds = |r: usize| {
            if r == 0 {
                Err(LabError::Schema("rounds must be positive".into()))
            } else if r > MAX_ROUNDS {
                Err(LabError::Budget(format!("{r} rounds exceed the limit of {MAX_ROUNDS}")))
            } else {
                Ok(())
            }
        };
        let samples = |s: usize| {
            if s > MAX_SAMPLES {
                Err(LabError::Budget(format!("{s} samples exceed the limit of {MAX_SAMPLES}")))
            } else {
                Ok(())
            }
        };
        match &self.experiment {
            Experiment::Learn(p) => {
                rounds(p.rounds)?;
                if p.burn_in >= p.rounds {
                    return Err(LabError::Schema(format!("burn-in {} leaves no rounds", p.burn_in)));
                }
            }
            Experiment::Byzantine(p) => rounds(p.rounds)?,
            Experiment::Enumerate(p) => {
                if p.instance.is_some() == p.search.is_some() {
                    return Err(LabError::Schema("enumerate needs exactly one of `instance` and `search`".into()));
                }
            }
            Experiment::Bpoa(p) => {
                samples(p.samples)?;
                samples(p.gamma_samples)?;
                if let StrategyChoice::Search { samples: s, .. } = p.strategy {
                    samples(s)?;
                }
            }
            Experiment::Poa3(p) if p.resolution > MAX_RESOLUTION => {
                return Err(LabError::Budget(format!(
                    "resolution {} exceeds the limit of {MAX_RESOLUTION}",
                    p.resolution
                )));
            }
            Experiment::Cyclic(p) if p.min_slots < 3 || p.max_slots < p.min_slots => {
                return Err(LabError::Schema("cyclic slot range must satisfy 3 ≤ min ≤ max".into()));
            }
            _ => {}
        }
        Ok(())
    }

    /// Canonical serialization, the input to the config hash.
    pub fn canonical(&self) -> Vec<u8> {
        serde_json::to_vec(self).expect("configs always serialize")
    }
}
