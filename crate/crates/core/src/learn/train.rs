//! PPO training loop and static-parameter tuning on simulated sequences.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::io::Write as _;
use std::path::Path;
use std::sync::{Arc, Mutex};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frontend::FrontendParams;
use crate::io::SequenceFrame;
use crate::learn::ppo::{buffer_advantages, optimizer_for, ppo_update, PpoConfig};
use crate::learn::pso::{params_at, pso_optimize, PsoConfig, PsoResult};
use crate::learn::rollout::{collect_rollout, reference_run, run_static, stream_seed, EnvSpec, EvalContext, RolloutOptions};
use crate::policy::action::canonical_params;
use crate::policy::encoder::ConvEncoder;
use crate::policy::{Normalizer, ObservationConfig, Policy};

pub const CURVE_HEADER: &str = "update,lr,mean_train_reward,policy_loss,value_loss,clip_fraction,kl";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub ppo: PpoConfig,
    pub observation: ObservationConfig,
    pub init_log_std: f64,
    /// Start the actor's mean action at the reference parameters.
    pub warm_start: bool,
    /// Fit the observation normalizer on the training frames.
    pub fit_normalizer: bool,
    pub seed: u64,
    /// Write a numbered checkpoint every this many updates; 0 disables them.
    pub checkpoint_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            ppo: PpoConfig::default(),
            observation: ObservationConfig::default(),
            init_log_std: -1.0,
            warm_start: true,
            fit_normalizer: true,
            seed: 0,
            checkpoint_every: 50,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainScene {
    pub name: String,
    pub frames: Vec<SequenceFrame>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub update: usize,
    pub lr: f64,
    pub mean_train_reward: f64,
    pub policy_loss: f64,
    pub value_loss: f64,
    pub clip_fraction: f64,
    pub kl: f64,
}

impl CurveRow {
    pub fn csv_line(&self) -> String {
        format!(
            "{},{},{},{},{},{},{}",
            self.update, self.lr, self.mean_train_reward, self.policy_loss, self.value_loss, self.clip_fraction, self.kl
        )
    }
}

/// Fresh policy with the normalizer fitted on `scenes` and, if configured, the
/// mean action set to `reference`.
pub fn initial_policy(
    cfg: &TrainConfig,
    scenes: &[TrainScene],
    reference: &FrontendParams,
    encoder: Option<ConvEncoder>,
) -> Result<Policy> {
    let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(cfg.seed, usize::MAX, usize::MAX));
    let mut policy = Policy::new(cfg.observation.clone(), encoder, cfg.init_log_std, &mut rng)?;
    if cfg.fit_normalizer {
        let codes: Vec<Vec<f64>> = scenes
            .par_iter()
            .flat_map_iter(|s| s.frames.iter().map(|f| policy.image_code(&f.image)).collect::<Vec<_>>())
            .collect();
        policy.normalizer = Normalizer::fit(&codes, cfg.observation.code_dim());
    }
    if cfg.warm_start {
        policy.warm_start(canonical_params(reference).0);
    }
    Ok(policy)
}

/// Reference runs of `params` on every scene, in parallel.
pub fn reference_runs(scenes: &[TrainScene], params: &FrontendParams, ctx: &EvalContext) -> Result<Vec<EnvSpec>> {
    scenes
        .par_iter()
        .map(|s| {
            Ok(EnvSpec {
                name: s.name.clone(),
                frames: Arc::new(s.frames.clone()),
                reference: Some(Arc::new(reference_run(&s.frames, params, ctx)?)),
            })
        })
        .collect()
}

fn append_curve(path: &Path, rows: &[CurveRow], fresh: bool) -> Result<()> {
    let mut text = String::new();
    if fresh {
        text.push_str(CURVE_HEADER);
        text.push('\n');
    }
    for r in rows {
        let _ = writeln!(text, "{}", r.csv_line());
    }
    let mut f = std::fs::OpenOptions::new()
        .create(true)
        .write(true)
        .append(!fresh)
        .truncate(fresh)
        .open(path)
        .map_err(|e| Error::io(path, e))?;
    f.write_all(text.as_bytes()).map_err(|e| Error::io(path, e))
}

/// Runs PPO updates `policy.update .. cfg.ppo.updates`.
///
/// Environment `i` replays scene `i % scenes.len()`; training rewards are measured
/// against reference runs of `reference`. With `out_dir`, writes `curve.csv`
/// (appended when resuming), periodic `checkpoint_NNNNN.json` files and the final
/// `policy.json`.
pub fn train(
    policy: &mut Policy,
    scenes: &[TrainScene],
    reference: &FrontendParams,
    ctx: &EvalContext,
    cfg: &TrainConfig,
    out_dir: Option<&Path>,
) -> Result<Vec<CurveRow>> {
    cfg.ppo.validate()?;
    if scenes.is_empty() {
        return Err(Error::EmptyInput);
    }
    if let Some(dir) = out_dir {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let per_scene = reference_runs(scenes, reference, ctx)?;
    let envs: Vec<EnvSpec> = (0..cfg.ppo.envs).map(|i| per_scene[i % per_scene.len()].clone()).collect();
    let mut optimizer = optimizer_for(policy);
    let mut rows = Vec::new();
    let first = policy.update;
    for update in first..cfg.ppo.updates {
        let lr = cfg.ppo.learning_rate(update);
        let opts = RolloutOptions {
            steps: cfg.ppo.rollout,
            deterministic: false,
            seed: cfg.seed,
            update,
        };
        let buf = collect_rollout(&envs, policy, ctx, &opts)?;
        let (adv, ret) = buffer_advantages(&buf, &cfg.ppo)?;
        let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(cfg.seed, usize::MAX, update));
        let stats = ppo_update(policy, &mut optimizer, &buf, &adv, &ret, &cfg.ppo, lr, &mut rng)?;
        policy.update = update + 1;
        let row = CurveRow {
            update,
            lr,
            mean_train_reward: buf.mean_reward(),
            policy_loss: stats.policy_loss,
            value_loss: stats.value_loss,
            clip_fraction: stats.clip_fraction,
            kl: stats.kl,
        };
        log::info!(
            "update {update} lr {lr:.2e} reward {:.3} kl {:.4} clip {:.3}",
            row.mean_train_reward,
            row.kl,
            row.clip_fraction
        );
        if let Some(dir) = out_dir {
            append_curve(&dir.join("curve.csv"), &[row], update == 0)?;
            if cfg.checkpoint_every > 0 && policy.update % cfg.checkpoint_every == 0 {
                policy.save(&dir.join(format!("checkpoint_{:05}.json", policy.update)))?;
            }
        }
        rows.push(row);
    }
    if let Some(dir) = out_dir {
        if first == 0 && rows.is_empty() {
            append_curve(&dir.join("curve.csv"), &[], true)?;
        }
        policy.save(&dir.join("policy.json"))?;
    }
    Ok(rows)
}

/// Mean per-frame `r_total` of static `params` over all frames of `scenes`.
pub fn static_score(scenes: &[&[SequenceFrame]], params: &FrontendParams, ctx: &EvalContext) -> Result<f64> {
    let mut total = 0.0;
    let mut n = 0usize;
    for frames in scenes {
        for o in run_static(frames, params, ctx)? {
            total += o.breakdown.r_total;
            n += 1;
        }
    }
    if n == 0 {
        return Err(Error::EmptySequence);
    }
    Ok(total / n as f64)
}

/// PSO over the parameter box maximizing `static_score`; evaluations of positions
/// that quantize to the same parameters are shared.
pub fn tune_static_params(
    scenes: &[&[SequenceFrame]],
    ctx: &EvalContext,
    config: &PsoConfig,
) -> Result<(FrontendParams, f64, PsoResult)> {
    type Key = (u32, usize, u64);
    let cache: Mutex<HashMap<Key, f64>> = Mutex::new(HashMap::new());
    let failure: Mutex<Option<Error>> = Mutex::new(None);
    let objective = |x: &[f64]| {
        let p = params_at(x);
        let key = (p.fast_threshold, p.klt_patch_size, p.ransac_threshold.to_bits());
        if let Some(v) = cache.lock().expect("cache lock").get(&key) {
            return *v;
        }
        match static_score(scenes, &p, ctx) {
            Ok(v) => {
                cache.lock().expect("cache lock").insert(key, v);
                v
            }
            Err(e) => {
                failure.lock().expect("error lock").get_or_insert(e);
                f64::NEG_INFINITY
            }
        }
    };
    let result = pso_optimize(objective, config)?;
    if let Some(e) = failure.into_inner().expect("error lock") {
        return Err(e);
    }
    let params = params_at(&result.best_position);
    Ok((params, result.best_score, result))
}
