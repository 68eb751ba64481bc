//! Run configuration file (TOML) with command-line overrides.

use std::path::{Path, PathBuf};

use advo_core::frontend::{FrontendParams, KltConfig, RansacConfig, TrackerConfig};
use advo_core::learn::{BanditConfig, EvalContext, PsoConfig, TrainConfig};
use advo_core::reward::{CostModel, RewardConfig};
use advo_core::sim::WorldConfig;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrackerSection {
    pub max_features: usize,
    pub pyramid_levels: usize,
    pub klt_max_iters: u32,
    pub klt_epsilon: f64,
    pub klt_min_determinant: f64,
    pub klt_max_residual: f64,
    pub ransac_confidence: f64,
    pub ransac_max_hypotheses: usize,
    pub min_ransac_threshold: f64,
    pub seed: u64,
}

impl Default for TrackerSection {
    fn default() -> Self {
        let t = TrackerConfig::default();
        Self {
            max_features: t.max_features,
            pyramid_levels: t.pyramid_levels,
            klt_max_iters: t.klt.max_iters,
            klt_epsilon: t.klt.epsilon,
            klt_min_determinant: t.klt.min_determinant,
            klt_max_residual: t.klt.max_residual,
            ransac_confidence: t.ransac.confidence,
            ransac_max_hypotheses: t.ransac.max_hypotheses,
            min_ransac_threshold: t.min_ransac_threshold,
            seed: t.seed,
        }
    }
}

impl TrackerSection {
    pub fn to_config(&self) -> TrackerConfig {
        TrackerConfig {
            max_features: self.max_features,
            pyramid_levels: self.pyramid_levels,
            klt: KltConfig {
                max_iters: self.klt_max_iters,
                epsilon: self.klt_epsilon,
                min_determinant: self.klt_min_determinant,
                max_residual: self.klt_max_residual,
            },
            ransac: RansacConfig {
                confidence: self.ransac_confidence,
                max_hypotheses: self.ransac_max_hypotheses,
            },
            min_ransac_threshold: self.min_ransac_threshold,
            seed: self.seed,
        }
    }

    fn validate(&self) -> Result<(), String> {
        if self.max_features == 0 {
            return Err("tracker.max_features must be >= 1".into());
        }
        if !(1..=6).contains(&self.pyramid_levels) {
            return Err("tracker.pyramid_levels must be in 1..=6".into());
        }
        if self.klt_max_iters == 0 || !(self.klt_epsilon > 0.0) || !(self.klt_max_residual > 0.0) {
            return Err("tracker KLT limits must be positive".into());
        }
        if !(self.klt_min_determinant >= 0.0) {
            return Err("tracker.klt_min_determinant must be >= 0".into());
        }
        if !(self.ransac_confidence > 0.0 && self.ransac_confidence < 1.0) {
            return Err("tracker.ransac_confidence must be in (0, 1)".into());
        }
        if self.ransac_max_hypotheses == 0 || !(self.min_ransac_threshold >= 0.0) {
            return Err("tracker RANSAC limits must be positive".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateSection {
    /// Scenes written by `simulate` and generated live by `train`.
    pub scenes: usize,
}

impl Default for SimulateSection {
    fn default() -> Self {
        Self { scenes: 5 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PsoSection {
    pub particles: usize,
    pub iterations: usize,
    pub inertia: f64,
    pub cognitive: f64,
    pub social: f64,
    /// Search box per `(fast, patch, ransac)` axis.
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    /// Score only the first this many frames of each sequence; 0 uses all.
    pub subset_frames: usize,
}

impl Default for PsoSection {
    fn default() -> Self {
        let p = PsoConfig::default();
        Self {
            particles: p.particles,
            iterations: p.iterations,
            inertia: p.inertia,
            cognitive: p.cognitive,
            social: p.social,
            lower: p.lower,
            upper: p.upper,
            subset_frames: 0,
        }
    }
}

impl PsoSection {
    pub fn to_config(&self, seed: u64) -> PsoConfig {
        PsoConfig {
            particles: self.particles,
            iterations: self.iterations,
            inertia: self.inertia,
            cognitive: self.cognitive,
            social: self.social,
            lower: self.lower.clone(),
            upper: self.upper.clone(),
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub world: WorldConfig,
    pub simulate: SimulateSection,
    pub tracker: TrackerSection,
    /// Static parameters used by `track` when no parameter file is given.
    pub params: FrontendParams,
    pub reward: RewardConfig,
    pub cost: CostModel,
    pub pso: PsoSection,
    pub train: TrainConfig,
    pub bandit: BanditConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            world: WorldConfig::default(),
            simulate: SimulateSection::default(),
            tracker: TrackerSection::default(),
            params: FrontendParams::default(),
            reward: RewardConfig::default(),
            cost: CostModel::default(),
            pso: PsoSection::default(),
            train: TrainConfig::default(),
            bandit: BanditConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::config(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| CliError::config(format!("config {}: {e}", path.display())))
    }

    /// Parses TOML text, rejecting keys that no section defines.
    pub fn parse(text: &str) -> Result<Self, String> {
        let mut unknown = Vec::new();
        let de = toml::Deserializer::new(text);
        let cfg: Self = serde_ignored::deserialize(de, |path| unknown.push(path.to_string())).map_err(|e| e.to_string())?;
        if !unknown.is_empty() {
            return Err(format!("unknown keys: {}", unknown.join(", ")));
        }
        Ok(cfg)
    }

    /// Every section checked against its documented range.
    pub fn validate(&self) -> Result<(), CliError> {
        let core = |e: advo_core::Error| CliError::config(e.to_string());
        self.world.validate().map_err(core)?;
        self.params.validate().map_err(core)?;
        self.reward.validate().map_err(core)?;
        self.cost.validate().map_err(core)?;
        self.pso.to_config(self.seed).validate().map_err(core)?;
        self.train.ppo.validate().map_err(core)?;
        self.bandit.validate().map_err(core)?;
        self.tracker.validate().map_err(CliError::config)?;
        if self.simulate.scenes == 0 {
            return Err(CliError::config("simulate.scenes must be >= 1"));
        }
        Ok(())
    }

    pub fn eval_context(&self) -> EvalContext {
        EvalContext {
            tracker: self.tracker.to_config(),
            reward: self.reward,
            cost: self.cost,
        }
    }
}

/// Fails with a configuration error naming `path` unless it exists.
pub fn require_path(path: &Path, what: &str) -> Result<PathBuf, CliError> {
    if path.exists() {
        Ok(path.to_path_buf())
    } else {
        Err(CliError::config(format!("{what} {} does not exist", path.display())))
    }
}
