//! Clipped-surrogate PPO over a rollout buffer.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::learn::adam::Adam;
use crate::learn::gae::{compute_gae, normalize};
use crate::learn::rollout::RolloutBuffer;
use crate::policy::nn::{grads_slices, MlpGrads, HALF_LN_TWO_PI, LOG_STD_MAX, LOG_STD_MIN};
use crate::policy::Policy;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PpoConfig {
    pub gamma: f64,
    pub gae_lambda: f64,
    pub clip: f64,
    pub epochs: usize,
    /// Minibatch size.
    pub batch: usize,
    pub entropy_coef: f64,
    pub value_coef: f64,
    pub envs: usize,
    pub rollout: usize,
    pub lr_start: f64,
    pub lr_end: f64,
    pub updates: usize,
    /// Multiplies training rewards before advantage and return estimation.
    pub reward_scale: f64,
    pub normalize_advantages: bool,
}

impl Default for PpoConfig {
    fn default() -> Self {
        Self {
            gamma: 0.99,
            gae_lambda: 0.95,
            clip: 0.2,
            epochs: 20,
            batch: 256,
            entropy_coef: 0.0,
            value_coef: 0.5,
            envs: 8,
            rollout: 128,
            lr_start: 3e-4,
            lr_end: 3e-5,
            updates: 300,
            reward_scale: 0.01,
            normalize_advantages: true,
        }
    }
}

impl PpoConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return bad("gamma must be in (0, 1]");
        }
        if !(self.gae_lambda > 0.0 && self.gae_lambda <= 1.0) {
            return bad("gae_lambda must be in (0, 1]");
        }
        if !(self.clip > 0.0) {
            return bad("clip must be positive");
        }
        if self.envs == 0 || self.rollout == 0 || self.epochs == 0 || self.batch == 0 {
            return bad("envs, rollout, epochs and batch must be at least 1");
        }
        if self.batch > self.envs * self.rollout {
            return bad("batch exceeds envs x rollout");
        }
        if !(self.lr_start > 0.0 && self.lr_end > 0.0) {
            return bad("learning rates must be positive");
        }
        if !(self.reward_scale > 0.0) || self.value_coef < 0.0 || self.entropy_coef < 0.0 {
            return bad("reward_scale must be positive and loss weights non-negative");
        }
        Ok(())
    }

    /// Linear decay from `lr_start` at update 0 to `lr_end` at the last update.
    pub fn learning_rate(&self, update: usize) -> f64 {
        if self.updates <= 1 {
            return self.lr_start;
        }
        let f = (update.min(self.updates - 1)) as f64 / (self.updates - 1) as f64;
        self.lr_start + (self.lr_end - self.lr_start) * f
    }
}

/// Per-environment GAE over the scaled training rewards.
pub fn buffer_advantages(buf: &RolloutBuffer, cfg: &PpoConfig) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut adv = Vec::with_capacity(buf.len());
    let mut ret = Vec::with_capacity(buf.len());
    for e in 0..buf.envs {
        let r = buf.index(e, 0)..buf.index(e, 0) + buf.steps;
        let rewards: Vec<f64> = buf.rewards[r.clone()].iter().map(|v| v * cfg.reward_scale).collect();
        let (a, g) = compute_gae(
            &rewards,
            &buf.values[r.clone()],
            &buf.dones[r],
            buf.bootstrap[e],
            cfg.gamma,
            cfg.gae_lambda,
        )?;
        adv.extend(a);
        ret.extend(g);
    }
    Ok((adv, ret))
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct PpoStats {
    pub policy_loss: f64,
    pub value_loss: f64,
    /// Mean of `(r - 1) - ln r` over samples.
    pub kl: f64,
    pub clip_fraction: f64,
}

/// Gradients of the PPO loss with respect to every trained tensor.
#[derive(Debug, Clone)]
pub struct PolicyGrads {
    pub actor: MlpGrads,
    pub log_std: Array1<f64>,
    pub critic: MlpGrads,
}

impl PolicyGrads {
    pub fn slices(&self) -> Vec<&[f64]> {
        let mut out = grads_slices(&self.actor);
        out.push(self.log_std.as_slice().expect("standard layout"));
        out.extend(grads_slices(&self.critic));
        out
    }
}

/// Trained tensors in the order of `PolicyGrads::slices`.
pub fn policy_params_mut(policy: &mut Policy) -> Vec<&mut [f64]> {
    let mut out = policy.actor.params_mut();
    out.push(policy.head.log_std.as_slice_mut().expect("standard layout"));
    out.extend(policy.critic.params_mut());
    out
}

pub fn optimizer_for(policy: &Policy) -> Adam {
    let mut sizes: Vec<usize> = policy.actor.params().iter().map(|p| p.len()).collect();
    sizes.push(policy.head.log_std.len());
    sizes.extend(policy.critic.params().iter().map(|p| p.len()));
    Adam::new(sizes)
}

/// One minibatch worth of training data.
#[derive(Debug, Clone, Copy)]
pub struct Minibatch<'a> {
    pub observations: ArrayView2<'a, f64>,
    pub critic_inputs: ArrayView2<'a, f64>,
    pub actions: ArrayView2<'a, f64>,
    pub old_log_probs: &'a [f64],
    pub advantages: &'a [f64],
    pub returns: &'a [f64],
}

/// Log-probabilities of the batch actions under the current policy.
pub fn batch_log_probs(policy: &Policy, observations: ArrayView2<f64>, actions: ArrayView2<f64>) -> Result<Vec<f64>> {
    let out = policy.actor.forward(observations)?;
    let ls = policy.head.clamped_log_std();
    Ok((0..out.nrows())
        .map(|i| {
            (0..ls.len())
                .map(|j| {
                    let z = (actions[[i, j]] - out[[i, j]].tanh()) / ls[j].exp();
                    -0.5 * z * z - ls[j] - HALF_LN_TWO_PI
                })
                .sum()
        })
        .collect())
}

/// Loss diagnostics and exact gradients of
/// `policy_loss + value_coef * value_loss - entropy_coef * entropy`.
pub fn ppo_loss_and_grads(policy: &Policy, mb: &Minibatch, cfg: &PpoConfig) -> Result<(PpoStats, PolicyGrads)> {
    let b = mb.old_log_probs.len();
    if b == 0 {
        return Err(Error::EmptyBuffer);
    }
    let bf = b as f64;
    let actor_cache = policy.actor.forward_cached(mb.observations)?;
    let out = actor_cache.output();
    let dim = out.ncols();
    let raw_ls = &policy.head.log_std;
    let ls = policy.head.clamped_log_std();
    let sigma = ls.mapv(f64::exp);

    let mut d_out = Array2::zeros((b, dim));
    let mut d_ls = Array1::zeros(dim);
    let mut stats = PpoStats::default();
    for i in 0..b {
        let mut logp = 0.0;
        let mut z = vec![0.0; dim];
        for j in 0..dim {
            let mu = out[[i, j]].tanh();
            z[j] = (mb.actions[[i, j]] - mu) / sigma[j];
            logp += -0.5 * z[j] * z[j] - ls[j] - HALF_LN_TWO_PI;
        }
        let log_ratio = logp - mb.old_log_probs[i];
        let ratio = log_ratio.exp();
        let a = mb.advantages[i];
        let surr1 = ratio * a;
        let surr2 = ratio.clamp(1.0 - cfg.clip, 1.0 + cfg.clip) * a;
        stats.policy_loss -= surr1.min(surr2) / bf;
        stats.kl += ((ratio - 1.0) - log_ratio) / bf;
        if (ratio - 1.0).abs() > cfg.clip {
            stats.clip_fraction += 1.0 / bf;
        }
        let d_logp = if surr1 <= surr2 { -ratio * a / bf } else { 0.0 };
        if d_logp != 0.0 {
            for j in 0..dim {
                let mu = out[[i, j]].tanh();
                d_out[[i, j]] = d_logp * z[j] / sigma[j] * (1.0 - mu * mu);
                d_ls[j] += d_logp * (z[j] * z[j] - 1.0);
            }
        }
    }
    for j in 0..dim {
        d_ls[j] -= cfg.entropy_coef;
        if raw_ls[j] < LOG_STD_MIN || raw_ls[j] > LOG_STD_MAX {
            d_ls[j] = 0.0;
        }
    }
    let (actor_grads, _) = policy.actor.backward(&actor_cache, d_out.view())?;

    let critic_cache = policy.critic.forward_cached(mb.critic_inputs)?;
    let values = critic_cache.output();
    let mut d_v = Array2::zeros((b, 1));
    for i in 0..b {
        let err = values[[i, 0]] - mb.returns[i];
        stats.value_loss += err * err / bf;
        d_v[[i, 0]] = cfg.value_coef * 2.0 * err / bf;
    }
    let (critic_grads, _) = policy.critic.backward(&critic_cache, d_v.view())?;
    Ok((
        stats,
        PolicyGrads {
            actor: actor_grads,
            log_std: d_ls,
            critic: critic_grads,
        },
    ))
}

/// `epochs` passes of shuffled minibatch Adam steps; returns averaged diagnostics.
#[allow(clippy::too_many_arguments)]
pub fn ppo_update<R: Rng + ?Sized>(
    policy: &mut Policy,
    optimizer: &mut Adam,
    buf: &RolloutBuffer,
    advantages: &[f64],
    returns: &[f64],
    cfg: &PpoConfig,
    lr: f64,
    rng: &mut R,
) -> Result<PpoStats> {
    let n = buf.len();
    if n == 0 {
        return Err(Error::EmptyBuffer);
    }
    if advantages.len() != n || returns.len() != n {
        return Err(Error::LengthMismatch(format!(
            "{n} transitions, {} advantages, {} returns",
            advantages.len(),
            returns.len()
        )));
    }
    let mut adv = advantages.to_vec();
    if cfg.normalize_advantages {
        normalize(&mut adv);
    }
    let mut order: Vec<usize> = (0..n).collect();
    let mut total = PpoStats::default();
    let mut count = 0usize;
    for _ in 0..cfg.epochs {
        order.shuffle(rng);
        for chunk in order.chunks(cfg.batch.max(1)) {
            let obs = buf.observations.select(Axis(0), chunk);
            let critic = buf.critic_inputs.select(Axis(0), chunk);
            let actions = buf.actions.select(Axis(0), chunk);
            let old: Vec<f64> = chunk.iter().map(|&i| buf.log_probs[i]).collect();
            let a: Vec<f64> = chunk.iter().map(|&i| adv[i]).collect();
            let g: Vec<f64> = chunk.iter().map(|&i| returns[i]).collect();
            let mb = Minibatch {
                observations: obs.view(),
                critic_inputs: critic.view(),
                actions: actions.view(),
                old_log_probs: &old,
                advantages: &a,
                returns: &g,
            };
            let (stats, grads) = ppo_loss_and_grads(policy, &mb, cfg)?;
            let slices = grads.slices();
            optimizer.step(&mut policy_params_mut(policy), &slices, lr)?;
            total.policy_loss += stats.policy_loss;
            total.value_loss += stats.value_loss;
            total.kl += stats.kl;
            total.clip_fraction += stats.clip_fraction;
            count += 1;
        }
    }
    let c = count as f64;
    Ok(PpoStats {
        policy_loss: total.policy_loss / c,
        value_loss: total.value_loss / c,
        kl: total.kl / c,
        clip_fraction: total.clip_fraction / c,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frontend::FrontendParams;
    use crate::learn::rollout::{collect_rollout, reference_run, EnvSpec, EvalContext, RolloutOptions};
    use crate::sim::{generate_episode, WorldConfig};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::sync::Arc;

    fn buffer(policy: &Policy) -> RolloutBuffer {
        let ctx = EvalContext::default();
        let cfg = WorldConfig {
            n_frames: 6,
            ..WorldConfig::default()
        };
        let frames = generate_episode(&cfg, 9).unwrap().frames;
        let reference = reference_run(&frames, &FrontendParams::default(), &ctx).unwrap();
        let env = EnvSpec {
            name: "a".into(),
            frames: Arc::new(frames),
            reference: Some(Arc::new(reference)),
        };
        let opts = RolloutOptions {
            steps: 6,
            deterministic: false,
            seed: 1,
            update: 0,
        };
        collect_rollout(&[env.clone(), env], policy, &ctx, &opts).unwrap()
    }

    #[test]
    fn stored_log_probs_match_batched_evaluation() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let policy = Policy::new(Default::default(), None, -0.5, &mut rng).unwrap();
        let buf = buffer(&policy);
        let all = batch_log_probs(&policy, buf.observations.view(), buf.actions.view()).unwrap();
        assert_eq!(all, buf.log_probs);
        let idx = [7, 2, 11, 0];
        let sub = batch_log_probs(
            &policy,
            buf.observations.select(Axis(0), &idx).view(),
            buf.actions.select(Axis(0), &idx).view(),
        )
        .unwrap();
        for (k, &i) in idx.iter().enumerate() {
            assert_eq!(sub[k], buf.log_probs[i]);
        }
    }

    #[test]
    fn unchanged_policy_has_unit_ratio() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let policy = Policy::new(Default::default(), None, -0.5, &mut rng).unwrap();
        let buf = buffer(&policy);
        let cfg = PpoConfig::default();
        let (adv, ret) = buffer_advantages(&buf, &cfg).unwrap();
        let mut a = adv.clone();
        normalize(&mut a);
        let mb = Minibatch {
            observations: buf.observations.view(),
            critic_inputs: buf.critic_inputs.view(),
            actions: buf.actions.view(),
            old_log_probs: &buf.log_probs,
            advantages: &a,
            returns: &ret,
        };
        let (stats, _) = ppo_loss_and_grads(&policy, &mb, &cfg).unwrap();
        assert_eq!(stats.clip_fraction, 0.0);
        assert_eq!(stats.kl, 0.0);
        let mean_a = a.iter().sum::<f64>() / a.len() as f64;
        assert!((stats.policy_loss + mean_a).abs() < 1e-12);
    }

    #[test]
    fn single_sample_clipped_objective() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let policy = Policy::new(Default::default(), None, 0.0, &mut rng).unwrap();
        let obs = ndarray::Array2::zeros((1, policy.observation.obs_dim()));
        let critic = ndarray::Array2::zeros((1, policy.observation.critic_dim()));
        let actions = ndarray::Array2::zeros((1, 3));
        let lp = batch_log_probs(&policy, obs.view(), actions.view()).unwrap()[0];
        let old = [lp - 1.5f64.ln()];
        let mb = Minibatch {
            observations: obs.view(),
            critic_inputs: critic.view(),
            actions: actions.view(),
            old_log_probs: &old,
            advantages: &[1.0],
            returns: &[0.0],
        };
        let (stats, grads) = ppo_loss_and_grads(&policy, &mb, &PpoConfig::default()).unwrap();
        assert!((stats.policy_loss + 1.2).abs() < 1e-12);
        assert_eq!(stats.clip_fraction, 1.0);
        assert!(grads.actor.iter().all(|l| l.weight.iter().all(|&g| g == 0.0)));
    }

    #[test]
    fn ppo_update_runs_and_rejects_empty() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut policy = Policy::new(Default::default(), None, -0.5, &mut rng).unwrap();
        let buf = buffer(&policy);
        let cfg = PpoConfig {
            batch: 4,
            epochs: 2,
            ..PpoConfig::default()
        };
        let (adv, ret) = buffer_advantages(&buf, &cfg).unwrap();
        let mut opt = optimizer_for(&policy);
        let before = policy.clone();
        let stats = ppo_update(&mut policy, &mut opt, &buf, &adv, &ret, &cfg, 1e-3, &mut rng).unwrap();
        assert!(stats.value_loss.is_finite());
        assert_ne!(before.actor, policy.actor);
        let mut empty = buf.clone();
        empty.envs = 0;
        assert!(matches!(
            ppo_update(&mut policy, &mut opt, &empty, &[], &[], &cfg, 1e-3, &mut rng),
            Err(Error::EmptyBuffer)
        ));
    }

    #[test]
    fn learning_rate_schedule() {
        let cfg = PpoConfig {
            updates: 11,
            ..PpoConfig::default()
        };
        assert_eq!(cfg.learning_rate(0), 3e-4);
        assert!((cfg.learning_rate(10) - 3e-5).abs() < 1e-18);
        assert!((cfg.learning_rate(5) - 1.65e-4).abs() < 1e-15);
    }
}
