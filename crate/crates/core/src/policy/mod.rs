//! Observation features, action mapping and the actor/critic networks.

pub mod action;
pub mod agent;
pub mod encoder;
pub mod fourier;
pub mod nn;
pub mod stats;

pub use action::{canonical_params, map_action, raw_for_params, ACTION_DIM};
pub use agent::{build_observation, critic_input, Normalizer, ObsMode, ObservationConfig, Policy};
pub use encoder::{thumbnail, ConvEncoder, LATENT_DIM};
pub use fourier::fourier_features;
pub use nn::{Activation, GaussianPolicyHead, Linear, MlpCache, MlpGrads, MlpNet};
pub use stats::{texture_stats, TextureStats};
