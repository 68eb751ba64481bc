//! Sparse feature frontend: detection, tracking and outlier rejection.

pub mod fast;
pub mod klt;
pub mod ransac;
pub mod tracker;
pub mod tukey;

pub use fast::{detect_fast, Keypoint};
pub use klt::{track_klt, KltConfig, KltResult};
pub use ransac::{estimate_fundamental_ransac, sampson_distance, RansacConfig, RansacResult};
pub use tracker::{
    step_tracker, FeatureTrack, FrameStats, FrontendParams, StepOutput, TrackStatus, TrackerConfig,
    TrackerState,
};
pub use tukey::tukey_filter;
