//! Experiment configuration: one TOML file, every field defaulted.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use safetrack::brs::{Intersection, RefineScope, TubeParams};
use safetrack::conformal::Role;
use safetrack::controller::TrainConfig;
use safetrack::geom::{HyperRect, UnsafeRegion};
use safetrack::model::{Dubins, ProblemSpec};
use safetrack::nominal::RrtParams;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Base seed; planning, training and rollouts derive their streams from it.
    pub seed: u64,
    pub out: PathBuf,
    pub model: ModelConfig,
    pub problem: ProblemConfig,
    pub planner: PlannerConfig,
    pub brs: BrsConfig,
    pub train: TrainSection,
    pub rollout: RolloutConfig,
    pub certify: CertifyConfig,
    pub probe: Option<ProbeConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub name: String,
    pub tau: f64,
    /// Half-widths of the disturbance box the sets are computed for.
    pub disturbance: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoxConfig {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProblemConfig {
    pub start: Vec<f64>,
    pub operating: BoxConfig,
    #[serde(rename = "unsafe")]
    pub unsafe_pieces: Vec<BoxConfig>,
    pub target: BoxConfig,
    pub inputs: BoxConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlannerConfig {
    pub max_iterations: usize,
    pub goal_bias: f64,
    pub max_horizon: usize,
    pub speeds: Vec<f64>,
    pub turn_rates: Vec<f64>,
    pub hold_steps: Vec<usize>,
    pub min_clearance: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BrsConfig {
    pub gamma: f64,
    pub state_fraction: f64,
    pub input_fraction: f64,
    pub margin: f64,
    pub shrink: f64,
    pub budget: usize,
    pub max_error_ratio: f64,
    /// `"per-generator"` or `"uniform"`.
    pub intersection: String,
    pub core_factor: f64,
    pub state_floor: f64,
    /// `"global"` or `"step"`.
    pub scope: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub lambda: f64,
    pub alpha1: f64,
    pub alpha2: f64,
    pub uniform_samples: usize,
    pub extreme_samples: usize,
    pub train_fraction: f64,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub validation_period: usize,
    pub patience: usize,
    pub max_epochs: usize,
    pub hidden: Vec<usize>,
    pub scale_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RolloutConfig {
    pub count: usize,
    /// Enlargement of the initial set: starts come from `(1 + sigma)` times
    /// its generators.
    pub sigma: f64,
    /// Uniform disturbance half-widths used in simulation.
    pub amplitude: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CertifyConfig {
    pub delta: f64,
    pub epsilon: f64,
    /// Per-coordinate flag: separating (true) or not.
    pub separating: Vec<bool>,
}

/// A start outside the initial set, simulated without disturbance for the
/// report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProbeConfig {
    pub start: Vec<f64>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            out: PathBuf::from("out"),
            model: ModelConfig::default(),
            problem: ProblemConfig::default(),
            planner: PlannerConfig::default(),
            brs: BrsConfig::default(),
            train: TrainSection::default(),
            rollout: RolloutConfig::default(),
            certify: CertifyConfig::default(),
            probe: None,
        }
    }
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            name: "dubins".into(),
            tau: Dubins::DEFAULT_TAU,
            disturbance: vec![0.003, 0.003, 0.015],
        }
    }
}

fn box_config(b: &HyperRect) -> BoxConfig {
    BoxConfig {
        lower: b.lower().iter().copied().collect(),
        upper: b.upper().iter().copied().collect(),
    }
}

impl Default for ProblemConfig {
    fn default() -> Self {
        let spec = ProblemSpec::dubins_benchmark([1.0, 1.0, 0.0]);
        Self {
            start: vec![1.0, 1.0, 0.0],
            operating: box_config(&spec.operating),
            unsafe_pieces: spec.unsafe_region.pieces().iter().map(box_config).collect(),
            target: box_config(&spec.target),
            inputs: box_config(&spec.inputs),
        }
    }
}

impl Default for PlannerConfig {
    fn default() -> Self {
        let p = RrtParams::dubins();
        Self {
            max_iterations: p.max_iterations,
            goal_bias: p.goal_bias,
            max_horizon: p.max_horizon,
            speeds: vec![1.0, 2.0, 4.5],
            turn_rates: vec![-3.0, -1.5, 0.0, 1.5, 3.0],
            hold_steps: p.hold_steps,
            min_clearance: p.min_clearance.iter().copied().collect(),
        }
    }
}

impl Default for BrsConfig {
    fn default() -> Self {
        let t = TubeParams::default();
        Self {
            gamma: safetrack::brs::DEFAULT_GAMMA,
            state_fraction: t.state_fraction,
            input_fraction: t.input_fraction,
            margin: t.margin,
            shrink: t.shrink,
            budget: t.budget,
            max_error_ratio: t.max_error_ratio,
            intersection: "per-generator".into(),
            core_factor: t.core_factor,
            state_floor: t.state_floor,
            scope: "global".into(),
        }
    }
}

impl Default for TrainSection {
    fn default() -> Self {
        let c = TrainConfig::default();
        Self {
            lambda: c.lambda,
            alpha1: c.alpha1,
            alpha2: c.alpha2,
            uniform_samples: c.uniform_samples,
            extreme_samples: c.extreme_samples,
            train_fraction: c.train_fraction,
            learning_rate: c.learning_rate,
            weight_decay: c.weight_decay,
            validation_period: c.validation_period,
            patience: c.patience,
            max_epochs: c.max_epochs,
            hidden: c.hidden,
            scale_fraction: c.scale_fraction,
        }
    }
}

impl Default for RolloutConfig {
    fn default() -> Self {
        Self {
            count: 200,
            sigma: 0.0,
            amplitude: vec![0.003, 0.003, 0.015],
        }
    }
}

impl Default for CertifyConfig {
    fn default() -> Self {
        Self {
            delta: 0.05,
            epsilon: 0.01,
            separating: vec![true, true, false],
        }
    }
}

fn rect(b: &BoxConfig, what: &str) -> Result<HyperRect> {
    HyperRect::from_slices(&b.lower, &b.upper).with_context(|| format!("invalid box `{what}`"))
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::parse(&text).with_context(|| format!("in {}", path.display()))
    }

    pub fn parse(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        if self.model.name != "dubins" {
            bail!("model.name: unknown model `{}` (available: dubins)", self.model.name);
        }
        if self.model.disturbance.len() != 3 || self.model.disturbance.iter().any(|w| !(*w >= 0.0)) {
            bail!("model.disturbance: expected 3 non-negative half-widths");
        }
        if self.rollout.amplitude.len() != 3 || self.rollout.amplitude.iter().any(|w| !(*w >= 0.0)) {
            bail!("rollout.amplitude: expected 3 non-negative half-widths");
        }
        if self.rollout.count == 0 {
            bail!("rollout.count: must be at least 1");
        }
        if !(self.rollout.sigma >= 0.0) {
            bail!("rollout.sigma: must be non-negative");
        }
        if !(self.certify.delta > 0.0 && self.certify.delta < 1.0) {
            bail!("certify.delta: must lie in (0, 1)");
        }
        if self.certify.separating.len() != 3 {
            bail!("certify.separating: expected one flag per state coordinate");
        }
        if let Some(p) = &self.probe {
            if p.start.len() != 3 {
                bail!("probe.start: expected a 3-vector");
            }
        }
        self.spec()?;
        self.tube_params()?;
        self.train_config().validate().context("train")?;
        Ok(())
    }

    pub fn model(&self) -> Dubins {
        let w = &self.model.disturbance;
        Dubins::new(self.model.tau, [w[0], w[1], w[2]])
    }

    pub fn spec(&self) -> Result<ProblemSpec> {
        let p = &self.problem;
        if p.start.len() != 3 {
            bail!("problem.start: expected a 3-vector");
        }
        let start = DVector::from_column_slice(&p.start);
        let pieces = p
            .unsafe_pieces
            .iter()
            .enumerate()
            .map(|(i, b)| rect(b, &format!("problem.unsafe[{i}]")))
            .collect::<Result<Vec<_>>>()?;
        let spec = ProblemSpec {
            operating: rect(&p.operating, "problem.operating")?,
            unsafe_region: UnsafeRegion::new(pieces).context("problem.unsafe")?,
            target: rect(&p.target, "problem.target")?,
            initial: HyperRect::new(start.clone(), start)?,
            inputs: rect(&p.inputs, "problem.inputs")?,
        };
        spec.validate().context("problem")?;
        Ok(spec)
    }

    pub fn rrt_params(&self) -> RrtParams {
        let p = &self.planner;
        let mut params = RrtParams::dubins();
        params.max_iterations = p.max_iterations;
        params.goal_bias = p.goal_bias;
        params.max_horizon = p.max_horizon;
        params.input_grid = p
            .speeds
            .iter()
            .flat_map(|v| p.turn_rates.iter().map(move |w| DVector::from_vec(vec![*v, *w])))
            .collect();
        params.hold_steps = p.hold_steps.clone();
        params.min_clearance = DVector::from_column_slice(&p.min_clearance);
        params
    }

    pub fn tube_params(&self) -> Result<TubeParams> {
        let b = &self.brs;
        let intersection = match b.intersection.as_str() {
            "per-generator" => Intersection::PerGenerator,
            "uniform" => Intersection::Uniform,
            other => bail!("brs.intersection: expected `per-generator` or `uniform`, got `{other}`"),
        };
        let scope = match b.scope.as_str() {
            "global" => RefineScope::Global,
            "step" => RefineScope::Step,
            other => bail!("brs.scope: expected `global` or `step`, got `{other}`"),
        };
        let t = TubeParams {
            state_fraction: b.state_fraction,
            input_fraction: b.input_fraction,
            margin: b.margin,
            shrink: b.shrink,
            budget: b.budget,
            max_error_ratio: b.max_error_ratio,
            intersection,
            core_factor: b.core_factor,
            state_floor: b.state_floor,
            scope,
        };
        t.validate().context("brs")?;
        if !(b.gamma >= 1.0) {
            bail!("brs.gamma: must be at least 1");
        }
        Ok(t)
    }

    pub fn train_config(&self) -> TrainConfig {
        let t = &self.train;
        TrainConfig {
            lambda: t.lambda,
            alpha1: t.alpha1,
            alpha2: t.alpha2,
            uniform_samples: t.uniform_samples,
            extreme_samples: t.extreme_samples,
            train_fraction: t.train_fraction,
            learning_rate: t.learning_rate,
            weight_decay: t.weight_decay,
            validation_period: t.validation_period,
            patience: t.patience,
            max_epochs: t.max_epochs,
            hidden: t.hidden.clone(),
            scale_fraction: t.scale_fraction,
            seed: self.seed,
        }
    }

    pub fn roles(&self) -> Vec<Role> {
        self.certify
            .separating
            .iter()
            .map(|s| if *s { Role::Separating } else { Role::NonSeparating })
            .collect()
    }

    pub fn amplitude(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.rollout.amplitude)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip() {
        let cfg = ExperimentConfig::default();
        let text = cfg.to_toml();
        assert_eq!(ExperimentConfig::parse(&text).unwrap(), cfg);
        assert_eq!(ExperimentConfig::parse("").unwrap(), cfg);
    }

    #[test]
    fn unknown_key_is_named() {
        let err = ExperimentConfig::parse("[train]\nmax_epoch = 5\n").unwrap_err();
        assert!(format!("{err:#}").contains("max_epoch"), "{err:#}");
    }

    #[test]
    fn bad_values_are_rejected() {
        assert!(ExperimentConfig::parse("[certify]\ndelta = 1.5\n").is_err());
        assert!(ExperimentConfig::parse("[brs]\nintersection = \"exact\"\n").is_err());
        assert!(ExperimentConfig::parse("[problem]\nstart = [4.0, 0.5, -0.785]\n").is_err());
    }
}
