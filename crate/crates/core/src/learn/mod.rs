//! Optimizers, PPO, encoder pretraining and static-parameter search.

pub mod adam;
pub mod bandit;
pub mod gae;
pub mod ppo;
pub mod pso;
pub mod rollout;
pub mod train;

pub use adam::Adam;
pub use bandit::{pretrain_encoder_bandit, BanditConfig, BanditFrame, ReplayBuffer};
pub use gae::compute_gae;
pub use ppo::{ppo_update, PpoConfig, PpoStats};
pub use pso::{pso_optimize, sphere_self_test, PsoConfig, PsoResult, SphereCheck};
pub use rollout::{collect_rollout, reference_run, run_policy, run_static, EnvSpec, EvalContext, RolloutBuffer, RolloutOptions};
pub use train::{train, tune_static_params, CurveRow, TrainConfig, TrainScene};
