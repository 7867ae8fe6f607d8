//! Experiment configuration: JSON schema, defaults, and validation.
//!
//! Defaults reproduce the full-scale study (100 nodes, 1000m square, 300m
//! range, weights in [0, 50], 50 trials, budgets 1..=15); the `desk` scale
//! caps size and trials for quick runs.

use serde::{Deserialize, Serialize};
use std::fmt;

/// Which experiment family to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    /// Sweep the leader budget `k` on static topologies.
    StaticK,
    /// Sweep the error budget `alpha`, measuring leaders needed.
    StaticAlpha,
    /// Sweep the link-failure probability on switched topologies.
    LinkFailure,
    /// Track per-epoch loss under waypoint mobility.
    Waypoint,
    /// Simulate the adversarial regret construction.
    RegretLowerBound,
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            ExperimentKind::StaticK => "static_k",
            ExperimentKind::StaticAlpha => "static_alpha",
            ExperimentKind::LinkFailure => "link_failure",
            ExperimentKind::Waypoint => "waypoint",
            ExperimentKind::RegretLowerBound => "regret_lower_bound",
        };
        f.write_str(s)
    }
}

/// Selection policy names used in configs and CSV output.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Policy {
    /// Greedy minimization of the bound (with distribution knowledge where
    /// the experiment provides one).
    Supermodular,
    Random,
    MaxDegree,
    AverageDegree,
    /// Experts-driven online selection (dynamic experiments); in the regret
    /// experiment this is the experts arm.
    Dynamic,
}

impl fmt::Display for Policy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Policy::Supermodular => "supermodular",
            Policy::Random => "random",
            Policy::MaxDegree => "max_degree",
            Policy::AverageDegree => "average_degree",
            Policy::Dynamic => "dynamic",
        };
        f.write_str(s)
    }
}

impl std::str::FromStr for Policy {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "supermodular" => Ok(Policy::Supermodular),
            "random" => Ok(Policy::Random),
            "max_degree" => Ok(Policy::MaxDegree),
            "average_degree" => Ok(Policy::AverageDegree),
            "dynamic" => Ok(Policy::Dynamic),
            other => Err(format!("unknown policy `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TopologySection {
    pub n: usize,
    pub area_side: f64,
    pub comm_range: f64,
    pub weight_min: f64,
    pub weight_max: f64,
    pub symmetric_weights: bool,
}

impl Default for TopologySection {
    fn default() -> Self {
        Self {
            n: 100,
            area_side: 1000.0,
            comm_range: 300.0,
            weight_min: 0.0,
            weight_max: 50.0,
            symmetric_weights: false,
        }
    }
}

/// Horizon selection for static experiments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "snake_case", tag = "rule")]
pub enum HorizonSection {
    /// Fixed horizon `t`.
    Fixed { t: f64 },
    /// Smallest `t` at which a random probe set's bound reaches `beta`.
    BoundTarget { beta: f64 },
}

impl Default for HorizonSection {
    fn default() -> Self {
        HorizonSection::BoundTarget { beta: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AlgorithmSection {
    pub k_values: Vec<usize>,
    pub alpha_values: Vec<f64>,
    pub p: f64,
    pub horizon: HorizonSection,
    /// Multiplicative parameter of the online selector.
    pub experts_beta: f64,
    /// Learning rate for the generic experts subroutine; `None` means the
    /// horizon-tuned default.
    pub eta: Option<f64>,
}

impl Default for AlgorithmSection {
    fn default() -> Self {
        Self {
            k_values: (1..=15).collect(),
            alpha_values: vec![0.5, 1.0, 2.0],
            p: 2.0,
            horizon: HorizonSection::default(),
            experts_beta: 0.8,
            eta: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DynamicsSection {
    pub epochs: usize,
    pub dwell: f64,
    pub fail_probs: Vec<f64>,
    pub ref_speed: f64,
    pub disturbance_min: f64,
    pub disturbance_max: f64,
    /// Realizations behind the known-distribution (Monte Carlo) evaluator.
    pub mc_samples: usize,
    /// Leader budget used by the dynamic experiments.
    pub k: usize,
}

impl Default for DynamicsSection {
    fn default() -> Self {
        Self {
            epochs: 8,
            dwell: 0.05,
            fail_probs: vec![0.0, 0.05, 0.10, 0.15],
            ref_speed: 100.0,
            disturbance_min: 0.0,
            disturbance_max: 50.0,
            mc_samples: 20,
            k: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RegretSection {
    /// Number of epochs `r` in the adversarial construction.
    pub rounds: usize,
    /// Low-loss value sigma(n); the construction's default is 0.
    pub sigma: f64,
}

impl Default for RegretSection {
    fn default() -> Self {
        Self {
            rounds: 2000,
            sigma: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    pub topology: TopologySection,
    pub algorithm: AlgorithmSection,
    pub dynamics: DynamicsSection,
    pub regret: RegretSection,
    pub policies: Vec<Policy>,
    pub trials: usize,
    pub master_seed: u64,
    /// Initial states sampled per row for the realized-error column.
    pub initial_state_samples: usize,
    pub output: String,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            experiment: ExperimentKind::StaticK,
            topology: TopologySection::default(),
            algorithm: AlgorithmSection::default(),
            dynamics: DynamicsSection::default(),
            regret: RegretSection::default(),
            policies: vec![
                Policy::Supermodular,
                Policy::Random,
                Policy::MaxDegree,
                Policy::AverageDegree,
            ],
            trials: 50,
            master_seed: 12345,
            initial_state_samples: 16,
            output: "results.csv".to_string(),
        }
    }
}

/// Output scale: `desk` caps size and trials for CI-speed runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Scale {
    Desk,
    Paper,
}

impl ExperimentConfig {
    pub fn apply_scale(&mut self, scale: Scale) {
        if scale == Scale::Desk {
            self.topology.n = self.topology.n.min(50);
            self.trials = self.trials.min(20);
            self.algorithm.k_values.retain(|&k| k <= self.topology.n);
            self.dynamics.k = self.dynamics.k.min(self.topology.n);
        }
    }
}

/// Parse and validate a configuration document. An empty document yields the
/// full-scale `static_k` defaults. All range problems are reported together.
pub fn validate_config(raw: &str) -> Result<ExperimentConfig, String> {
    let trimmed = raw.trim();
    let config: ExperimentConfig = if trimmed.is_empty() {
        ExperimentConfig::default()
    } else {
        serde_json::from_str(trimmed).map_err(|e| format!("configuration parse error: {e}"))?
    };
    let problems = validation_problems(&config);
    if problems.is_empty() {
        Ok(config)
    } else {
        Err(format!(
            "invalid configuration:\n  - {}",
            problems.join("\n  - ")
        ))
    }
}

fn validation_problems(c: &ExperimentConfig) -> Vec<String> {
    let mut out = Vec::new();
    let t = &c.topology;
    if t.n < 2 {
        out.push(format!("topology.n = {} must be at least 2", t.n));
    }
    if t.area_side <= 0.0 {
        out.push(format!("topology.area_side = {} must be positive", t.area_side));
    }
    if t.comm_range <= 0.0 {
        out.push(format!(
            "topology.comm_range = {} must be positive",
            t.comm_range
        ));
    }
    if t.weight_min < 0.0 || t.weight_max < t.weight_min {
        out.push(format!(
            "topology weight range [{}, {}] must satisfy 0 <= min <= max",
            t.weight_min, t.weight_max
        ));
    }

    let a = &c.algorithm;
    if a.p < 1.0 || !a.p.is_finite() {
        out.push(format!("algorithm.p = {} must lie in [1, inf)", a.p));
    }
    if c.experiment == ExperimentKind::StaticK {
        if a.k_values.is_empty() {
            out.push("algorithm.k_values must not be empty".to_string());
        }
        for &k in &a.k_values {
            if k < 1 || k > t.n {
                out.push(format!("algorithm.k_values entry {k} outside 1..={}", t.n));
            }
        }
    }
    if c.experiment == ExperimentKind::StaticAlpha {
        if a.alpha_values.is_empty() {
            out.push("algorithm.alpha_values must not be empty".to_string());
        }
        for &alpha in &a.alpha_values {
            if alpha <= 0.0 {
                out.push(format!("algorithm.alpha_values entry {alpha} must be positive"));
            }
        }
    }
    match a.horizon {
        HorizonSection::Fixed { t } if t <= 0.0 => {
            out.push(format!("algorithm.horizon.t = {t} must be positive"));
        }
        HorizonSection::BoundTarget { beta } if beta <= 0.0 => {
            out.push(format!("algorithm.horizon.beta = {beta} must be positive"));
        }
        _ => {}
    }
    if a.experts_beta <= 0.0 || a.experts_beta > 1.0 {
        out.push(format!(
            "algorithm.experts_beta = {} must lie in (0, 1]",
            a.experts_beta
        ));
    }
    if let Some(eta) = a.eta {
        if eta < 0.0 || !eta.is_finite() {
            out.push(format!("algorithm.eta = {eta} must be a nonnegative real"));
        }
    }

    let d = &c.dynamics;
    if d.epochs < 1 {
        out.push("dynamics.epochs must be at least 1".to_string());
    }
    if d.dwell <= 0.0 {
        out.push(format!("dynamics.dwell = {} must be positive", d.dwell));
    }
    for &fp in &d.fail_probs {
        if !(0.0..1.0).contains(&fp) {
            out.push(format!("dynamics.fail_probs entry {fp} outside [0, 1)"));
        }
    }
    if d.disturbance_min < 0.0 || d.disturbance_max < d.disturbance_min {
        out.push(format!(
            "dynamics disturbance range [{}, {}] must satisfy 0 <= min <= max",
            d.disturbance_min, d.disturbance_max
        ));
    }
    if d.ref_speed < 0.0 {
        out.push(format!("dynamics.ref_speed = {} must be nonnegative", d.ref_speed));
    }
    if d.mc_samples < 1 {
        out.push("dynamics.mc_samples must be at least 1".to_string());
    }
    let dynamic_kind = matches!(
        c.experiment,
        ExperimentKind::LinkFailure | ExperimentKind::Waypoint
    );
    if dynamic_kind && (d.k < 1 || d.k > t.n) {
        out.push(format!("dynamics.k = {} outside 1..={}", d.k, t.n));
    }

    if c.regret.rounds < 1 {
        out.push("regret.rounds must be at least 1".to_string());
    }
    if !(0.0..=1.0).contains(&c.regret.sigma) {
        out.push(format!("regret.sigma = {} outside [0, 1]", c.regret.sigma));
    }

    if c.trials < 1 {
        out.push("trials must be at least 1".to_string());
    }
    if c.policies.is_empty() {
        out.push("policies must not be empty".to_string());
    }
    let allowed: &[Policy] = match c.experiment {
        ExperimentKind::StaticK | ExperimentKind::StaticAlpha => &[
            Policy::Supermodular,
            Policy::Random,
            Policy::MaxDegree,
            Policy::AverageDegree,
        ],
        ExperimentKind::LinkFailure | ExperimentKind::Waypoint => &[
            Policy::Supermodular,
            Policy::Random,
            Policy::MaxDegree,
            Policy::AverageDegree,
            Policy::Dynamic,
        ],
        ExperimentKind::RegretLowerBound => &[Policy::Random, Policy::Dynamic],
    };
    for p in &c.policies {
        if !allowed.contains(p) {
            out.push(format!(
                "policy `{p}` is not applicable to experiment `{}`",
                c.experiment
            ));
        }
    }
    if c.output.is_empty() {
        out.push("output path must not be empty".to_string());
    }
    out
}
