//! Observation assembly, actor and privileged critic, and the checkpoint container.

use std::path::Path;

use ndarray::{Array1, ArrayView1};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frontend::FrontendParams;
use crate::image::GrayImage;
use crate::policy::action::{canonical_params, map_action, ACTION_DIM};
use crate::policy::encoder::{ConvEncoder, LATENT_DIM};
use crate::policy::fourier::{fourier_features, DEFAULT_BANDS};
use crate::policy::nn::{GaussianPolicyHead, MlpNet};
use crate::policy::stats::{texture_stats, TEXTURE_STATS_DIM};

pub const CHECKPOINT_FORMAT: &str = "advo-policy";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObsMode {
    TextureStats,
    Encoder,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ObservationConfig {
    pub mode: ObsMode,
    /// How many previous raw actions enter the observation.
    pub past_actions: usize,
    /// Feature counts are divided by this.
    pub max_features: usize,
    pub fourier_bands: usize,
    /// Frame-index normalizer of the critic's Fourier features.
    pub horizon: usize,
    pub hidden: Vec<usize>,
}

impl Default for ObservationConfig {
    fn default() -> Self {
        Self {
            mode: ObsMode::TextureStats,
            past_actions: 1,
            max_features: 400,
            fourier_bands: DEFAULT_BANDS,
            horizon: 128,
            hidden: vec![256, 256],
        }
    }
}

impl ObservationConfig {
    pub fn code_dim(&self) -> usize {
        match self.mode {
            ObsMode::TextureStats => TEXTURE_STATS_DIM,
            ObsMode::Encoder => LATENT_DIM,
        }
    }

    pub fn obs_dim(&self) -> usize {
        self.code_dim() + 2 + ACTION_DIM * self.past_actions
    }

    pub fn critic_dim(&self) -> usize {
        self.obs_dim() + 2 * self.fourier_bands
    }
}

/// Per-dimension affine normalization applied to the observation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Normalizer {
    pub fn identity(dim: usize) -> Self {
        Self {
            mean: vec![0.0; dim],
            std: vec![1.0; dim],
        }
    }

    /// Mean and standard deviation of each column of `rows`, std floored at `1e-6`.
    pub fn fit(rows: &[Vec<f64>], dim: usize) -> Self {
        if rows.is_empty() {
            return Self::identity(dim);
        }
        let n = rows.len() as f64;
        let mut mean = vec![0.0; dim];
        for r in rows {
            for (m, v) in mean.iter_mut().zip(r) {
                *m += v / n;
            }
        }
        let mut std = vec![0.0; dim];
        for r in rows {
            for ((s, v), m) in std.iter_mut().zip(r).zip(&mean) {
                *s += (v - m) * (v - m) / n;
            }
        }
        Self {
            mean,
            std: std.into_iter().map(|v| v.sqrt().max(1e-6)).collect(),
        }
    }

    pub fn apply(&self, x: &mut [f64]) {
        for ((v, m), s) in x.iter_mut().zip(&self.mean).zip(&self.std) {
            *v = (*v - m) / s;
        }
    }
}

/// Unnormalized observation: image code, feature counts, previous actions.
pub fn build_observation(
    image_code: &[f64],
    cur_count: usize,
    prev_count: usize,
    max_features: usize,
    past_actions: &[[f64; ACTION_DIM]],
) -> Vec<f64> {
    let mut obs = Vec::with_capacity(image_code.len() + 2 + ACTION_DIM * past_actions.len());
    obs.extend_from_slice(image_code);
    let m = max_features.max(1) as f64;
    obs.push((cur_count as f64 / m).min(1.0));
    obs.push((prev_count as f64 / m).min(1.0));
    for a in past_actions {
        obs.extend(a.iter().map(|v| v.clamp(-1.0, 1.0)));
    }
    obs
}

/// Observation followed by the Fourier encoding of the frame index.
pub fn critic_input(obs: &[f64], frame_index: usize, bands: usize, horizon: usize) -> Vec<f64> {
    let mut x = obs.to_vec();
    x.extend(fourier_features(frame_index, bands, horizon));
    x
}

/// Actor, critic and everything needed to turn a frame into an action.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Policy {
    pub format: String,
    pub version: u32,
    pub observation: ObservationConfig,
    /// Applied to the image-code part of the observation.
    pub normalizer: Normalizer,
    pub actor: MlpNet,
    pub head: GaussianPolicyHead,
    pub critic: MlpNet,
    pub encoder: Option<ConvEncoder>,
    /// Completed PPO updates; drives the learning-rate schedule on resume.
    pub update: usize,
}

impl Policy {
    pub fn new<R: Rng + ?Sized>(
        observation: ObservationConfig,
        encoder: Option<ConvEncoder>,
        init_log_std: f64,
        rng: &mut R,
    ) -> Result<Self> {
        if observation.mode == ObsMode::Encoder && encoder.is_none() {
            return Err(Error::InvalidConfig("encoder observation mode needs an encoder".into()));
        }
        let mut actor_sizes = vec![observation.obs_dim()];
        actor_sizes.extend(&observation.hidden);
        actor_sizes.push(ACTION_DIM);
        let mut critic_sizes = vec![observation.critic_dim()];
        critic_sizes.extend(&observation.hidden);
        critic_sizes.push(1);
        let actor = MlpNet::new(&actor_sizes, 0.01, rng);
        let critic = MlpNet::new(&critic_sizes, 1.0, rng);
        Ok(Self {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            normalizer: Normalizer::identity(observation.code_dim()),
            head: GaussianPolicyHead::new(ACTION_DIM, init_log_std),
            observation,
            actor,
            critic,
            encoder,
            update: 0,
        })
    }

    /// A policy whose mean action is the canonical raw vector of `params` for
    /// every observation.
    pub fn constant(params: &FrontendParams, observation: ObservationConfig) -> Self {
        let (raw, _) = canonical_params(params);
        let mut actor_sizes = vec![observation.obs_dim()];
        actor_sizes.extend(&observation.hidden);
        actor_sizes.push(ACTION_DIM);
        let mut critic_sizes = vec![observation.critic_dim()];
        critic_sizes.extend(&observation.hidden);
        critic_sizes.push(1);
        let mut actor = MlpNet::zeros(&actor_sizes);
        actor.layers.last_mut().unwrap().bias = Array1::from_iter(raw.iter().map(|v| v.atanh()));
        let encoder = (observation.mode == ObsMode::Encoder).then(ConvEncoder::zeros);
        Self {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            normalizer: Normalizer::identity(observation.code_dim()),
            head: GaussianPolicyHead::new(ACTION_DIM, crate::policy::nn::LOG_STD_MIN),
            critic: MlpNet::zeros(&critic_sizes),
            observation,
            actor,
            encoder,
            update: 0,
        }
    }

    /// Moves the actor's mean output to `raw` for near-zero hidden activity.
    pub fn warm_start(&mut self, raw: [f64; ACTION_DIM]) {
        let last = self.actor.layers.last_mut().unwrap();
        last.bias = Array1::from_iter(raw.iter().map(|v| v.clamp(-0.999, 0.999).atanh()));
    }

    pub fn image_code(&self, image: &GrayImage) -> Vec<f64> {
        let mut code = match self.observation.mode {
            ObsMode::TextureStats => texture_stats(image).0.to_vec(),
            ObsMode::Encoder => self
                .encoder
                .as_ref()
                .expect("encoder mode checked at construction")
                .encode(image)
                .to_vec(),
        };
        self.normalizer.apply(&mut code);
        code
    }

    pub fn observe(
        &self,
        image_code: &[f64],
        cur_count: usize,
        prev_count: usize,
        past_actions: &[[f64; ACTION_DIM]],
    ) -> Vec<f64> {
        build_observation(
            image_code,
            cur_count,
            prev_count,
            self.observation.max_features,
            past_actions,
        )
    }

    pub fn critic_input(&self, obs: &[f64], frame_index: usize) -> Vec<f64> {
        critic_input(obs, frame_index, self.observation.fourier_bands, self.observation.horizon)
    }

    /// Squashed mean and standard deviation of the action distribution.
    pub fn policy_forward(&self, obs: ArrayView1<f64>) -> Result<([f64; ACTION_DIM], [f64; ACTION_DIM])> {
        let out = self.actor.forward_one(obs)?;
        let std = self.head.std();
        let mut mean = [0.0; ACTION_DIM];
        let mut s = [0.0; ACTION_DIM];
        for i in 0..ACTION_DIM {
            mean[i] = out[i].tanh();
            s[i] = std[i];
        }
        Ok((mean, s))
    }

    pub fn value_forward(&self, input: ArrayView1<f64>) -> Result<f64> {
        Ok(self.critic.forward_one(input)?[0])
    }

    /// Deterministic parameters for an observation.
    pub fn act_deterministic(&self, obs: &[f64]) -> Result<([f64; ACTION_DIM], FrontendParams)> {
        let (mean, _) = self.policy_forward(ArrayView1::from(obs))?;
        Ok((mean, map_action(mean)))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string(self).map_err(|e| Error::Checkpoint(e.to_string()))?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let p: Policy = serde_json::from_str(&text).map_err(|e| Error::Checkpoint(e.to_string()))?;
        if p.format != CHECKPOINT_FORMAT || p.version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported checkpoint {} v{}",
                p.format, p.version
            )));
        }
        if p.actor.input_dim() != p.observation.obs_dim() || p.critic.input_dim() != p.observation.critic_dim() {
            return Err(Error::Checkpoint("network sizes disagree with the observation layout".into()));
        }
        Ok(p)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn dims() {
        let c = ObservationConfig::default();
        assert_eq!(c.obs_dim(), 21);
        assert_eq!(c.critic_dim(), 55);
    }

    #[test]
    fn constant_policy_replays_params() {
        let params = FrontendParams {
            fast_threshold: 33,
            klt_patch_size: 17,
            ransac_threshold: 1.234,
        };
        let (_, canon) = canonical_params(&params);
        let p = Policy::constant(&params, ObservationConfig::default());
        let obs = vec![0.37; 21];
        let (_, out) = p.act_deterministic(&obs).unwrap();
        assert_eq!(out, canon);
    }

    #[test]
    fn critic_sees_frame_index() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let p = Policy::new(ObservationConfig::default(), None, -1.0, &mut rng).unwrap();
        let obs = vec![0.1; 21];
        let a = p.value_forward(ArrayView1::from(&p.critic_input(&obs, 3))).unwrap();
        let b = p.value_forward(ArrayView1::from(&p.critic_input(&obs, 40))).unwrap();
        assert_ne!(a, b);
    }

    #[test]
    fn checkpoint_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let p = Policy::new(ObservationConfig::default(), None, -1.0, &mut rng).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.json");
        p.save(&path).unwrap();
        assert_eq!(Policy::load(&path).unwrap(), p);
    }
}
