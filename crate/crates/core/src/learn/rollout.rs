//! Tracking episodes driven by static parameters or a policy, reference runs and
//! rollout collection.

use std::sync::Arc;

use ndarray::{Array2, ArrayView1};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::flow::FlowField;
use crate::frontend::{FrameStats, FrontendParams, TrackerConfig, TrackerState};
use crate::io::SequenceFrame;
use crate::policy::action::{canonical_params, map_action, ACTION_DIM};
use crate::policy::Policy;
use crate::reward::{frame_reward, training_reward, CostModel, ReferenceRun, RewardBreakdown, RewardConfig};

/// Tracker and reward settings shared by every episode of a run.
#[derive(Debug, Clone, Default)]
pub struct EvalContext {
    pub tracker: TrackerConfig,
    pub reward: RewardConfig,
    pub cost: CostModel,
}

/// Result of one tracked frame.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameOutcome {
    pub params: FrontendParams,
    /// Raw action when a policy chose the parameters.
    pub raw: Option<[f64; ACTION_DIM]>,
    pub stats: FrameStats,
    pub breakdown: RewardBreakdown,
}

/// Flow from the previous frame into frame `k`.
fn flow_into(frames: &[SequenceFrame], k: usize) -> Option<&FlowField> {
    k.checked_sub(1).and_then(|j| frames[j].gt_flow_to_next.as_ref())
}

/// A tracker walking once through a frame sequence.
pub struct EpisodeRunner<'a> {
    frames: &'a [SequenceFrame],
    tracker: TrackerState,
    cursor: usize,
    last_action: [f64; ACTION_DIM],
}

impl<'a> EpisodeRunner<'a> {
    pub fn new(frames: &'a [SequenceFrame], config: TrackerConfig) -> Self {
        Self {
            frames,
            tracker: TrackerState::new(config),
            cursor: 0,
            last_action: [0.0; ACTION_DIM],
        }
    }

    /// Index of the next frame to track.
    pub fn cursor(&self) -> usize {
        self.cursor
    }

    pub fn finished(&self) -> bool {
        self.cursor >= self.frames.len()
    }

    /// Unnormalized-count observation for the next frame.
    pub fn observation(&self, policy: &Policy) -> Vec<f64> {
        let code = policy.image_code(&self.frames[self.cursor].image);
        policy.observe(
            &code,
            self.tracker.cur_count(),
            self.tracker.prev_count(),
            &[self.last_action],
        )
    }

    /// Tracks the next frame with `params` and scores it.
    pub fn advance(
        &mut self,
        params: FrontendParams,
        raw: Option<[f64; ACTION_DIM]>,
        ctx: &EvalContext,
    ) -> Result<FrameOutcome> {
        let k = self.cursor;
        let frame = &self.frames[k];
        let out = self.tracker.step(&frame.image, &params)?;
        let breakdown = frame_reward(
            k,
            &out.tracks,
            flow_into(self.frames, k),
            &out.stats,
            &params,
            (frame.image.width(), frame.image.height()),
            &ctx.reward,
            &ctx.cost,
        );
        if let Some(r) = raw {
            self.last_action = r;
        }
        self.cursor += 1;
        Ok(FrameOutcome {
            params,
            raw,
            stats: out.stats,
            breakdown,
        })
    }
}

/// Tracks every frame with fixed parameters.
pub fn run_static(frames: &[SequenceFrame], params: &FrontendParams, ctx: &EvalContext) -> Result<Vec<FrameOutcome>> {
    let mut ep = EpisodeRunner::new(frames, ctx.tracker);
    let mut out = Vec::with_capacity(frames.len());
    while !ep.finished() {
        out.push(ep.advance(*params, None, ctx)?);
    }
    Ok(out)
}

/// Tracks every frame with the policy's deterministic action.
pub fn run_policy(frames: &[SequenceFrame], policy: &Policy, ctx: &EvalContext) -> Result<Vec<FrameOutcome>> {
    let mut ep = EpisodeRunner::new(frames, ctx.tracker);
    let mut out = Vec::with_capacity(frames.len());
    while !ep.finished() {
        let obs = ep.observation(policy);
        let (raw, params) = policy.act_deterministic(&obs)?;
        out.push(ep.advance(params, Some(raw), ctx)?);
    }
    Ok(out)
}

/// Per-frame rewards of the canonical form of `params` over `frames`.
pub fn reference_run(frames: &[SequenceFrame], params: &FrontendParams, ctx: &EvalContext) -> Result<ReferenceRun> {
    let (_, params) = canonical_params(params);
    let frames = run_static(frames, &params, ctx)?
        .into_iter()
        .map(|o| o.breakdown)
        .collect();
    Ok(ReferenceRun { params, frames })
}

/// One training environment: a sequence and the reference rewards on it.
#[derive(Debug, Clone)]
pub struct EnvSpec {
    pub name: String,
    pub frames: Arc<Vec<SequenceFrame>>,
    pub reference: Option<Arc<ReferenceRun>>,
}

/// Transitions of all environments, stored environment-major.
#[derive(Debug, Clone, PartialEq)]
pub struct RolloutBuffer {
    pub envs: usize,
    pub steps: usize,
    pub observations: Array2<f64>,
    pub critic_inputs: Array2<f64>,
    /// Unclamped raw actions as sampled.
    pub actions: Array2<f64>,
    pub log_probs: Vec<f64>,
    pub values: Vec<f64>,
    /// Policy reward minus reference reward.
    pub rewards: Vec<f64>,
    /// Policy reward alone.
    pub policy_rewards: Vec<f64>,
    pub dones: Vec<bool>,
    /// Critic value after each environment's last step; 0 when that step ended an episode.
    pub bootstrap: Vec<f64>,
}

impl RolloutBuffer {
    pub fn len(&self) -> usize {
        self.envs * self.steps
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn index(&self, env: usize, step: usize) -> usize {
        env * self.steps + step
    }

    pub fn mean_reward(&self) -> f64 {
        if self.rewards.is_empty() {
            0.0
        } else {
            self.rewards.iter().sum::<f64>() / self.rewards.len() as f64
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct RolloutOptions {
    pub steps: usize,
    /// Use the mean action instead of sampling.
    pub deterministic: bool,
    pub seed: u64,
    pub update: usize,
}

/// Seed of the action-sampling stream of one environment in one update.
pub fn stream_seed(seed: u64, env: usize, update: usize) -> u64 {
    let mut h = seed ^ 0x243F_6A88_85A3_08D3;
    for v in [env as u64, update as u64] {
        h = (h ^ v).wrapping_mul(0x9E37_79B9_7F4A_7C15);
        h ^= h >> 31;
    }
    h
}

#[derive(Default)]
struct EnvTrace {
    obs: Vec<Vec<f64>>,
    critic: Vec<Vec<f64>>,
    actions: Vec<[f64; ACTION_DIM]>,
    log_probs: Vec<f64>,
    values: Vec<f64>,
    rewards: Vec<f64>,
    policy_rewards: Vec<f64>,
    dones: Vec<bool>,
    bootstrap: f64,
}

fn run_env(index: usize, env: &EnvSpec, policy: &Policy, ctx: &EvalContext, opts: &RolloutOptions) -> Result<EnvTrace> {
    let reference = env.reference.as_ref().ok_or(Error::MissingReferenceRun(index))?;
    if reference.frames.len() < env.frames.len() {
        return Err(Error::MissingReferenceRun(index));
    }
    if env.frames.is_empty() {
        return Err(Error::EmptySequence);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(opts.seed, index, opts.update));
    let mut trace = EnvTrace::default();
    let mut ep = EpisodeRunner::new(&env.frames, ctx.tracker);
    for _ in 0..opts.steps {
        if ep.finished() {
            ep = EpisodeRunner::new(&env.frames, ctx.tracker);
        }
        let frame = ep.cursor();
        let obs = ep.observation(policy);
        let critic = policy.critic_input(&obs, frame);
        let (mean, std) = policy.policy_forward(ArrayView1::from(&obs[..]))?;
        let mut raw = mean;
        if !opts.deterministic {
            for i in 0..ACTION_DIM {
                let z: f64 = rng.sample(StandardNormal);
                raw[i] = mean[i] + std[i] * z;
            }
        }
        let log_prob = policy
            .head
            .log_prob(ArrayView1::from(&mean[..]), ArrayView1::from(&raw[..]));
        let value = policy.value_forward(ArrayView1::from(&critic[..]))?;
        let outcome = ep.advance(map_action(raw), Some(raw), ctx)?;
        let r = training_reward(&outcome.breakdown, &reference.frames[frame])?;
        trace.obs.push(obs);
        trace.critic.push(critic);
        trace.actions.push(raw);
        trace.log_probs.push(log_prob);
        trace.values.push(value);
        trace.rewards.push(r);
        trace.policy_rewards.push(outcome.breakdown.r_total);
        trace.dones.push(ep.finished());
    }
    trace.bootstrap = if ep.finished() || opts.steps == 0 {
        0.0
    } else {
        let obs = ep.observation(policy);
        policy.value_forward(ArrayView1::from(&policy.critic_input(&obs, ep.cursor())[..]))?
    };
    Ok(trace)
}

fn stack(rows: impl Iterator<Item = Vec<f64>>, n: usize, dim: usize) -> Result<Array2<f64>> {
    let flat: Vec<f64> = rows.flatten().collect();
    Array2::from_shape_vec((n, dim), flat).map_err(|e| Error::LengthMismatch(e.to_string()))
}

/// Runs `opts.steps` policy steps in every environment, in parallel.
///
/// Episodes start at the first frame of their sequence and restart there when it
/// runs out. Each environment samples from its own stream keyed by
/// `(seed, environment, update)`, so results do not depend on scheduling.
pub fn collect_rollout(envs: &[EnvSpec], policy: &Policy, ctx: &EvalContext, opts: &RolloutOptions) -> Result<RolloutBuffer> {
    let traces: Vec<EnvTrace> = envs
        .par_iter()
        .enumerate()
        .map(|(i, env)| run_env(i, env, policy, ctx, opts))
        .collect::<Result<_>>()?;
    let n = envs.len() * opts.steps;
    let obs_dim = policy.observation.obs_dim();
    let critic_dim = policy.observation.critic_dim();
    let mut buf = RolloutBuffer {
        envs: envs.len(),
        steps: opts.steps,
        observations: Array2::zeros((0, obs_dim)),
        critic_inputs: Array2::zeros((0, critic_dim)),
        actions: Array2::zeros((0, ACTION_DIM)),
        log_probs: Vec::with_capacity(n),
        values: Vec::with_capacity(n),
        rewards: Vec::with_capacity(n),
        policy_rewards: Vec::with_capacity(n),
        dones: Vec::with_capacity(n),
        bootstrap: Vec::with_capacity(envs.len()),
    };
    let mut obs = Vec::with_capacity(n);
    let mut critic = Vec::with_capacity(n);
    let mut actions = Vec::with_capacity(n);
    for t in traces {
        obs.extend(t.obs);
        critic.extend(t.critic);
        actions.extend(t.actions.iter().map(|a| a.to_vec()));
        buf.log_probs.extend(t.log_probs);
        buf.values.extend(t.values);
        buf.rewards.extend(t.rewards);
        buf.policy_rewards.extend(t.policy_rewards);
        buf.dones.extend(t.dones);
        buf.bootstrap.push(t.bootstrap);
    }
    buf.observations = stack(obs.into_iter(), n, obs_dim)?;
    buf.critic_inputs = stack(critic.into_iter(), n, critic_dim)?;
    buf.actions = stack(actions.into_iter(), n, ACTION_DIM)?;
    Ok(buf)
}
