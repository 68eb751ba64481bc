//! Rendered, augmented frame sequences with clean ground-truth flow.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::camera::PinholeCamera;
use crate::error::{Error, Result};
use crate::flow::FlowField;
use crate::io::SequenceFrame;
use crate::sim::augment::{apply_motion_blur, apply_sensor_noise, AugmentConfig};
use crate::sim::scene::{generate_scene, gt_flow, render_frame, Scene};
use crate::sim::texture::TextureSpec;
use crate::sim::trajectory::{random_trajectory, MotionProfile, Trajectory};

/// Everything needed to generate a procedural episode from a seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WorldConfig {
    pub width: usize,
    pub height: usize,
    pub focal: f64,
    pub fps: f64,
    pub n_frames: usize,
    pub num_planes: usize,
    pub texture: TextureSpec,
    pub motion: MotionProfile,
    pub augment: AugmentConfig,
}

impl Default for WorldConfig {
    fn default() -> Self {
        Self {
            width: 128,
            height: 96,
            focal: 110.0,
            fps: 30.0,
            n_frames: 128,
            num_planes: 6,
            texture: TextureSpec::default(),
            motion: MotionProfile::default(),
            augment: AugmentConfig::default(),
        }
    }
}

impl WorldConfig {
    pub fn camera(&self) -> PinholeCamera {
        PinholeCamera::centered(self.width, self.height, self.focal)
    }

    pub fn validate(&self) -> Result<()> {
        self.camera().validate()?;
        self.texture.validate()?;
        self.augment.validate()?;
        if self.n_frames < 2 {
            return Err(Error::InvalidConfig(
                "an episode needs at least 2 frames".into(),
            ));
        }
        if self.num_planes < 1 {
            return Err(Error::InvalidConfig(
                "a scene needs at least 1 plane".into(),
            ));
        }
        if !(self.fps > 0.0) {
            return Err(Error::InvalidConfig("fps must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct Episode {
    pub scene: Scene,
    pub trajectory: Trajectory,
    pub camera: PinholeCamera,
    pub frames: Vec<SequenceFrame>,
}

fn frame_seed(seed: u64, frame: usize) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ (frame as u64).wrapping_add(0xD1B5_4A32_D192_ED03)
}

/// Renders every pose, blurs with the frame's forward flow, then adds noise.
///
/// Flow stored with each frame is computed on the clean geometry. The last frame
/// has no forward flow and is blurred with the flow that leads into it.
pub fn make_episode(
    scene: &Scene,
    trajectory: &Trajectory,
    camera: &PinholeCamera,
    augment: &AugmentConfig,
    noise_seed: u64,
) -> Vec<SequenceFrame> {
    let n = trajectory.poses.len();
    let flows: Vec<FlowField> = trajectory
        .poses
        .windows(2)
        .map(|p| gt_flow(scene, &p[0], &p[1], camera))
        .collect();
    let fraction = augment.exposure_fraction(trajectory.fps);
    (0..n)
        .map(|k| {
            let pose = trajectory.poses[k];
            let (mut image, _) = render_frame(scene, &pose, camera);
            if augment.enable_blur {
                let blur_flow = flows
                    .get(k)
                    .or_else(|| k.checked_sub(1).and_then(|j| flows.get(j)));
                if let Some(f) = blur_flow {
                    image = apply_motion_blur(&image, f, fraction);
                }
            }
            if augment.enable_noise {
                let mut rng = ChaCha8Rng::seed_from_u64(frame_seed(noise_seed, k));
                image = apply_sensor_noise(&image, augment, &mut rng);
            }
            SequenceFrame {
                index: k,
                timestamp: k as f64 / trajectory.fps,
                image,
                gt_flow_to_next: flows.get(k).cloned(),
                pose: Some(pose),
            }
        })
        .collect()
}

/// Scene, trajectory and frames for `seed` under `config`.
pub fn generate_episode(config: &WorldConfig, seed: u64) -> Result<Episode> {
    config.validate()?;
    let camera = config.camera();
    let texture = TextureSpec {
        seed: config.texture.seed ^ seed,
        ..config.texture
    };
    let scene = generate_scene(seed, texture, config.num_planes);
    let trajectory = random_trajectory(seed ^ 0x5EED, config.n_frames, config.fps, &config.motion);
    let frames = make_episode(&scene, &trajectory, &camera, &config.augment, seed);
    Ok(Episode {
        scene,
        trajectory,
        camera,
        frames,
    })
}
