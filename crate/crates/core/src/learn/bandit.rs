//! Encoder pretraining as a contextual bandit: a critic on `(latent, action)`
//! regresses the immediate tracking reward and its gradient trains the encoder.

use ndarray::{Array1, Array2, Array3};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::FlowField;
use crate::frontend::{FrontendParams, TrackerConfig, TrackerState};
use crate::image::GrayImage;
use crate::learn::adam::Adam;
use crate::policy::action::map_action;
use crate::policy::encoder::{thumbnail, ConvEncoder, EncoderCache, LATENT_DIM};
use crate::policy::nn::{grads_slices, MlpNet};
use crate::reward::feature_drift;

/// Actions the bandit explores: FAST threshold and patch size, as raw values.
pub const BANDIT_ACTION_DIM: usize = 2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BanditConfig {
    pub lr: f64,
    pub batch: usize,
    pub capacity: usize,
    /// Gradient steps; one new transition is collected before each.
    pub steps: usize,
    pub hidden: Vec<usize>,
    pub freeze_encoder: bool,
    /// Drift charged when a step leaves no feature with defined drift.
    pub missing_drift_px: f64,
    /// RANSAC threshold used for every sampled action.
    pub ransac_threshold: f64,
}

impl Default for BanditConfig {
    fn default() -> Self {
        Self {
            lr: 3e-4,
            batch: 64,
            capacity: 10_000,
            steps: 2_000,
            hidden: vec![64, 64],
            freeze_encoder: false,
            missing_drift_px: 10.0,
            ransac_threshold: FrontendParams::default().ransac_threshold,
        }
    }
}

impl BanditConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch == 0 || self.capacity < self.batch {
            return Err(Error::InvalidConfig("bandit capacity must be at least the batch size".into()));
        }
        if !(self.lr > 0.0) {
            return Err(Error::InvalidConfig("bandit learning rate must be positive".into()));
        }
        Ok(())
    }
}

/// A frame pair with the ground-truth flow between them.
#[derive(Debug, Clone)]
pub struct BanditFrame {
    pub prev: GrayImage,
    pub cur: GrayImage,
    pub flow: FlowField,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transition {
    /// Index of the dataset frame whose image is the context.
    pub frame: usize,
    pub action: [f64; BANDIT_ACTION_DIM],
    pub reward: f64,
}

/// Fixed-capacity FIFO replay.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity: usize,
    items: Vec<Transition>,
    next: usize,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        Self {
            capacity: capacity.max(1),
            items: Vec::new(),
            next: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    /// Appends, overwriting the oldest entry once full.
    pub fn push(&mut self, t: Transition) {
        if self.items.len() < self.capacity {
            self.items.push(t);
        } else {
            self.items[self.next] = t;
        }
        self.next = (self.next + 1) % self.capacity;
    }

    pub fn get(&self, i: usize) -> &Transition {
        &self.items[i]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BanditReport {
    /// Minibatch mean squared error before each gradient step.
    pub losses: Vec<f64>,
    pub max_replay_len: usize,
}

/// Critic over the latent followed by the bandit action.
pub fn bandit_critic<R: Rng + ?Sized>(hidden: &[usize], rng: &mut R) -> MlpNet {
    let mut sizes = vec![LATENT_DIM + BANDIT_ACTION_DIM];
    sizes.extend(hidden);
    sizes.push(1);
    MlpNet::new(&sizes, 1.0, rng)
}

/// Reward of one tracker step on a frame pair: the negative mean drift.
pub fn tracking_reward(
    frame: &BanditFrame,
    action: [f64; BANDIT_ACTION_DIM],
    tracker: TrackerConfig,
    cfg: &BanditConfig,
) -> Result<f64> {
    let mut params = map_action([action[0], action[1], 0.0]);
    params.ransac_threshold = cfg.ransac_threshold;
    let mut state = TrackerState::new(tracker);
    state.step(&frame.prev, &params)?;
    let out = state.step(&frame.cur, &params)?;
    let drifts: Vec<f64> = out.tracks.iter().filter_map(|t| feature_drift(t, &frame.flow)).collect();
    Ok(if drifts.is_empty() {
        -cfg.missing_drift_px
    } else {
        -drifts.iter().sum::<f64>() / drifts.len() as f64
    })
}

/// Regresses sampled rewards with `critic(encoder(thumb), action)`.
///
/// `sample` produces a new transition per step; `thumbs[t.frame]` is its context.
pub fn train_bandit<R, S>(
    thumbs: &[Array3<f64>],
    encoder: &mut ConvEncoder,
    critic: &mut MlpNet,
    cfg: &BanditConfig,
    mut sample: S,
    rng: &mut R,
) -> Result<BanditReport>
where
    R: Rng + ?Sized,
    S: FnMut(&mut R) -> Result<Transition>,
{
    cfg.validate()?;
    if thumbs.is_empty() {
        return Err(Error::EmptyInput);
    }
    if critic.input_dim() != LATENT_DIM + BANDIT_ACTION_DIM || critic.output_dim() != 1 {
        return Err(Error::DimensionMismatch {
            expected: LATENT_DIM + BANDIT_ACTION_DIM,
            got: critic.input_dim(),
        });
    }
    let frozen: Option<Vec<Array1<f64>>> = cfg
        .freeze_encoder
        .then(|| thumbs.iter().map(|t| encoder.forward_cached(t.clone()).latent).collect());
    let mut critic_opt = Adam::new(critic.params().iter().map(|p| p.len()));
    let mut encoder_opt = Adam::new(encoder.params().iter().map(|p| p.len()));
    let mut replay = ReplayBuffer::new(cfg.capacity);
    let mut report = BanditReport {
        losses: Vec::with_capacity(cfg.steps),
        max_replay_len: 0,
    };
    while replay.len() + 1 < cfg.batch {
        replay.push(sample(rng)?);
    }
    for _ in 0..cfg.steps {
        replay.push(sample(rng)?);
        report.max_replay_len = report.max_replay_len.max(replay.len());
        let picks: Vec<&Transition> = (0..cfg.batch)
            .map(|_| replay.get(rng.gen_range(0..replay.len())))
            .collect();
        let b = picks.len();
        let mut input = Array2::zeros((b, LATENT_DIM + BANDIT_ACTION_DIM));
        let mut caches: Vec<EncoderCache> = Vec::new();
        for (i, t) in picks.iter().enumerate() {
            let latent = match &frozen {
                Some(l) => l[t.frame].clone(),
                None => {
                    let c = encoder.forward_cached(thumbs[t.frame].clone());
                    let l = c.latent.clone();
                    caches.push(c);
                    l
                }
            };
            let mut row = input.row_mut(i);
            for k in 0..LATENT_DIM {
                row[k] = latent[k];
            }
            for k in 0..BANDIT_ACTION_DIM {
                row[LATENT_DIM + k] = t.action[k];
            }
        }
        let cache = critic.forward_cached(input.view())?;
        let pred = cache.output();
        let mut d = Array2::zeros((b, 1));
        let mut loss = 0.0;
        for (i, t) in picks.iter().enumerate() {
            let err = pred[[i, 0]] - t.reward;
            loss += err * err / b as f64;
            d[[i, 0]] = 2.0 * err / b as f64;
        }
        report.losses.push(loss);
        let (grads, d_input) = critic.backward(&cache, d.view())?;
        critic_opt.step(&mut critic.params_mut(), &grads_slices(&grads), cfg.lr)?;
        if frozen.is_none() {
            let mut enc_grad = ConvEncoder::zeros();
            for (i, c) in caches.iter().enumerate() {
                let d_latent = d_input.row(i).slice(ndarray::s![..LATENT_DIM]).to_owned();
                encoder.backward(c, &d_latent, &mut enc_grad);
            }
            encoder_opt.step(&mut encoder.params_mut(), &enc_grad.params(), cfg.lr)?;
        }
    }
    Ok(report)
}

/// Pretrains `encoder` on tracking rewards of random FAST-threshold and patch-size
/// actions over `dataset`.
pub fn pretrain_encoder_bandit<R: Rng + ?Sized>(
    dataset: &[BanditFrame],
    encoder: &mut ConvEncoder,
    critic: &mut MlpNet,
    cfg: &BanditConfig,
    tracker: TrackerConfig,
    rng: &mut R,
) -> Result<BanditReport> {
    if dataset.is_empty() {
        return Err(Error::EmptyInput);
    }
    let thumbs: Vec<Array3<f64>> = dataset.iter().map(|f| thumbnail(&f.cur)).collect();
    let sampler = |rng: &mut R| -> Result<Transition> {
        let frame = rng.gen_range(0..dataset.len());
        let action = [rng.gen_range(-1.0..=1.0), rng.gen_range(-1.0..=1.0)];
        let reward = tracking_reward(&dataset[frame], action, tracker, cfg)?;
        Ok(Transition { frame, action, reward })
    };
    train_bandit(&thumbs, encoder, critic, cfg, sampler, rng)
}
