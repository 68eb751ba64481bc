//! Procedural planar worlds, camera trajectories and image augmentation.

pub mod augment;
pub mod episode;
pub mod scene;
pub mod texture;
pub mod trajectory;

pub use augment::{apply_motion_blur, apply_sensor_noise, noisy_intensity, AugmentConfig};
pub use episode::{generate_episode, make_episode, Episode, WorldConfig};
pub use scene::{generate_scene, gt_flow, render_frame, reproject, DepthMap, Plane, Scene};
pub use texture::TextureSpec;
pub use trajectory::{
    random_trajectory, spline_trajectory, MotionProfile, SplinePath, Trajectory, Waypoint,
};
