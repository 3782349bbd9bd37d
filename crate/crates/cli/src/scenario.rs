//! Scenario schema: pencil, perturbation, witnesses, solver overrides and
//! the list of requested analyses.

use disclab::geometry::config::{PencilConfig, PerturbationTermConfig};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct Witnesses {
    /// Condition-(f) witness V as [re, im] pairs; searched when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub v: Option<Vec<[f64; 2]>>,
    /// Condition-(t) witness c; searched when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct SolverOverrides {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_f: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m_grid: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub newton_tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_iter: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub continuation_steps: Option<usize>,
}

/// Automorphism selection for the determination experiment.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum AutomorphismSpec {
    Identity,
    Rotation { theta: f64 },
    Dilation { lambda: f64 },
    /// Identity plus one monomial on one (1-based) component.
    IdentityPlusTerm { component: usize, coefficient: [f64; 2], exponents: Vec<u32> },
}

impl Default for AutomorphismSpec {
    fn default() -> Self {
        Self::Identity
    }
}

/// Expected outcome of the determination experiment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentExpectation {
    #[default]
    Accepted,
    Rejected,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub pencil: PencilConfig,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub perturbation: Vec<PerturbationTermConfig>,
    /// Perturbation scale t.
    #[serde(default)]
    pub scale_t: f64,
    #[serde(default)]
    pub witnesses: Witnesses,
    #[serde(default)]
    pub solver: SolverOverrides,
    /// Analyses to run, in dependency order:
    /// check | disc | indices | kernel | solve | centers | jets | determine.
    #[serde(default)]
    pub analyses: Vec<String>,
    #[serde(default = "default_seed")]
    pub seed: u64,
    /// Witness search trials.
    #[serde(default = "default_trials")]
    pub trials: usize,
    /// Chart radius for solve/centers/jets/determine.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    /// Dilation parameter of the determination experiment.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_dil: Option<f64>,
    #[serde(default)]
    pub automorphism: AutomorphismSpec,
    #[serde(default)]
    pub expect_experiment: ExperimentExpectation,
}

fn default_seed() -> u64 {
    disclab::geometry::DEFAULT_WITNESS_SEED
}

fn default_trials() -> usize {
    disclab::geometry::DEFAULT_WITNESS_TRIALS
}

pub const KNOWN_ANALYSES: [&str; 8] =
    ["check", "disc", "indices", "kernel", "solve", "centers", "jets", "determine"];

/// Dependency order of the pipeline.
pub fn analysis_order(name: &str) -> usize {
    KNOWN_ANALYSES.iter().position(|a| *a == name).unwrap_or(usize::MAX)
}
