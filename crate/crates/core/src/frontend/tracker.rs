//! Frame-to-frame tracking loop: KLT, RANSAC, Tukey fence, FAST replenishment.

use nalgebra::Point2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frontend::fast::detect_fast;
use crate::frontend::klt::{track_klt, KltConfig};
use crate::frontend::ransac::{estimate_fundamental_ransac, RansacConfig, MIN_CORRESPONDENCES};
use crate::frontend::tukey::tukey_filter;
use crate::image::{GrayImage, ImagePyramid, DEFAULT_PYRAMID_LEVELS};

pub const FAST_THRESHOLD_MAX: u32 = 209;
pub const PATCH_SIZE_MIN: usize = 3;
pub const PATCH_SIZE_MAX: usize = 41;
pub const RANSAC_THRESHOLD_MAX: f64 = 3.0;

/// The three tunable frontend parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FrontendParams {
    /// FAST threshold on the 0-255 scale, `0..=209`.
    pub fast_threshold: u32,
    /// Odd KLT window side, `3..=41` pixels.
    pub klt_patch_size: usize,
    /// Sampson-distance inlier threshold, `[0, 3]` pixels.
    pub ransac_threshold: f64,
}

impl FrontendParams {
    pub fn validate(&self) -> Result<()> {
        if self.fast_threshold > FAST_THRESHOLD_MAX {
            return Err(Error::InvalidConfig(format!(
                "fast_threshold {} above {FAST_THRESHOLD_MAX}",
                self.fast_threshold
            )));
        }
        if !(PATCH_SIZE_MIN..=PATCH_SIZE_MAX).contains(&self.klt_patch_size)
            || self.klt_patch_size % 2 == 0
        {
            return Err(Error::InvalidConfig(format!(
                "klt_patch_size {} must be odd in [{PATCH_SIZE_MIN}, {PATCH_SIZE_MAX}]",
                self.klt_patch_size
            )));
        }
        if !(0.0..=RANSAC_THRESHOLD_MAX).contains(&self.ransac_threshold) {
            return Err(Error::InvalidConfig(format!(
                "ransac_threshold {} outside [0, {RANSAC_THRESHOLD_MAX}]",
                self.ransac_threshold
            )));
        }
        Ok(())
    }

    /// Minimum spacing between a new feature and any other active feature.
    pub fn min_feature_distance(&self) -> f64 {
        self.klt_patch_size.div_ceil(2) as f64
    }
}

impl Default for FrontendParams {
    fn default() -> Self {
        Self {
            fast_threshold: 20,
            klt_patch_size: 21,
            ransac_threshold: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TrackStatus {
    New,
    Tracked,
    Lost,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTrack {
    pub id: u64,
    pub position: Point2<f64>,
    pub prev_position: Option<Point2<f64>>,
    pub age: u32,
    pub status: TrackStatus,
}

/// Per-frame counters consumed by the runtime model.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrameStats {
    /// LK iterations summed over features and pyramid levels.
    pub n_klt: u64,
    /// RANSAC hypotheses evaluated.
    pub n_ransac: u64,
    /// Features successfully tracked by KLT (the RANSAC input size).
    pub tracked_count: usize,
    pub detected_count: usize,
    /// Tracked features surviving RANSAC and the Tukey fence.
    pub inlier_count: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackerConfig {
    pub max_features: usize,
    pub pyramid_levels: usize,
    pub klt: KltConfig,
    pub ransac: RansacConfig,
    /// Lower bound applied to the RANSAC threshold.
    pub min_ransac_threshold: f64,
    pub seed: u64,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        Self {
            max_features: 400,
            pyramid_levels: DEFAULT_PYRAMID_LEVELS,
            klt: KltConfig::default(),
            ransac: RansacConfig::default(),
            min_ransac_threshold: 0.25,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrackerState {
    config: TrackerConfig,
    tracks: Vec<FeatureTrack>,
    prev_pyramid: Option<ImagePyramid>,
    frame_index: usize,
    next_id: u64,
    prev_count: usize,
    cur_count: usize,
    rng: ChaCha8Rng,
}

/// Result of one tracker step.
#[derive(Debug, Clone)]
pub struct StepOutput {
    pub stats: FrameStats,
    /// Surviving tracks followed by newly detected ones.
    pub tracks: Vec<FeatureTrack>,
    /// Tracks dropped this frame, carrying their final age.
    pub lost: Vec<FeatureTrack>,
}

impl TrackerState {
    pub fn new(config: TrackerConfig) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(config.seed),
            config,
            tracks: Vec::new(),
            prev_pyramid: None,
            frame_index: 0,
            next_id: 0,
            prev_count: 0,
            cur_count: 0,
        }
    }

    pub fn config(&self) -> &TrackerConfig {
        &self.config
    }

    pub fn tracks(&self) -> &[FeatureTrack] {
        &self.tracks
    }

    pub fn frame_index(&self) -> usize {
        self.frame_index
    }

    pub fn prev_count(&self) -> usize {
        self.prev_count
    }

    pub fn cur_count(&self) -> usize {
        self.cur_count
    }

    pub fn step(&mut self, image: &GrayImage, params: &FrontendParams) -> Result<StepOutput> {
        step_tracker(self, image, params)
    }
}

pub fn step_tracker(
    state: &mut TrackerState,
    image: &GrayImage,
    params: &FrontendParams,
) -> Result<StepOutput> {
    params.validate()?;
    if let Some(prev) = &state.prev_pyramid {
        let base = prev.base();
        if base.width() != image.width() || base.height() != image.height() {
            return Err(Error::InvalidImage(format!(
                "frame is {}x{}, tracker expects {}x{}",
                image.width(),
                image.height(),
                base.width(),
                base.height()
            )));
        }
    }
    let cfg = state.config;
    let pyramid = ImagePyramid::build(image.clone(), cfg.pyramid_levels)?;
    let mut stats = FrameStats::default();
    let mut lost = Vec::new();
    let mut survivors: Vec<FeatureTrack> = Vec::new();

    if let Some(prev) = state
        .prev_pyramid
        .as_ref()
        .filter(|_| !state.tracks.is_empty())
    {
        let pts: Vec<_> = state.tracks.iter().map(|t| t.position).collect();
        let results = track_klt(prev, &pyramid, &pts, params.klt_patch_size, &cfg.klt);
        stats.n_klt = results.iter().map(|r| u64::from(r.iterations)).sum();

        let mut moved = Vec::with_capacity(results.len());
        for (track, res) in state.tracks.drain(..).zip(results) {
            if res.converged {
                moved.push((track, res.position));
            } else {
                lost.push(FeatureTrack {
                    status: TrackStatus::Lost,
                    ..track
                });
            }
        }
        stats.tracked_count = moved.len();

        if moved.len() >= MIN_CORRESPONDENCES {
            let threshold = if params.ransac_threshold < cfg.min_ransac_threshold {
                log::debug!(
                    "ransac threshold {} raised to {}",
                    params.ransac_threshold,
                    cfg.min_ransac_threshold
                );
                cfg.min_ransac_threshold
            } else {
                params.ransac_threshold
            };
            let prev_pts: Vec<_> = moved.iter().map(|(t, _)| t.position).collect();
            let cur_pts: Vec<_> = moved.iter().map(|(_, p)| *p).collect();
            match estimate_fundamental_ransac(
                &prev_pts,
                &cur_pts,
                threshold,
                &cfg.ransac,
                &mut state.rng,
            ) {
                Ok(res) => {
                    stats.n_ransac = res.hypotheses as u64;
                    let mut kept = Vec::with_capacity(moved.len());
                    for (item, inlier) in moved.into_iter().zip(res.inliers) {
                        if inlier {
                            kept.push(item);
                        } else {
                            lost.push(FeatureTrack {
                                status: TrackStatus::Lost,
                                ..item.0
                            });
                        }
                    }
                    moved = kept;
                }
                Err(Error::DegenerateConfiguration) => {
                    stats.n_ransac = cfg.ransac.max_hypotheses as u64;
                }
                Err(e) => return Err(e),
            }
        }

        if !moved.is_empty() {
            let mags: Vec<f64> = moved.iter().map(|(t, p)| (p - t.position).norm()).collect();
            let keep = tukey_filter(&mags)?;
            for (item, k) in moved.into_iter().zip(keep) {
                if k {
                    survivors.push(FeatureTrack {
                        id: item.0.id,
                        prev_position: Some(item.0.position),
                        position: item.1,
                        age: item.0.age + 1,
                        status: TrackStatus::Tracked,
                    });
                } else {
                    lost.push(FeatureTrack {
                        status: TrackStatus::Lost,
                        ..item.0
                    });
                }
            }
        }
        stats.inlier_count = survivors.len();
    } else {
        lost.append(&mut state.tracks);
    }

    // Replenish with new FAST corners spaced at least half a patch from everything.
    let min_dist = params.min_feature_distance();
    let exclusion: Vec<_> = survivors.iter().map(|t| t.position).collect();
    let candidates = detect_fast(image, params.fast_threshold, &exclusion, min_dist);
    let mut grid = SpacingGrid::new(image.width(), image.height(), min_dist);
    for p in &exclusion {
        grid.insert(*p);
    }
    let budget = cfg.max_features.saturating_sub(survivors.len());
    let mut added = 0;
    for kp in candidates {
        if added >= budget {
            break;
        }
        if grid.too_close(kp.position) {
            continue;
        }
        grid.insert(kp.position);
        survivors.push(FeatureTrack {
            id: state.next_id,
            position: kp.position,
            prev_position: None,
            age: 1,
            status: TrackStatus::New,
        });
        state.next_id += 1;
        added += 1;
    }
    stats.detected_count = added;

    state.tracks = survivors.clone();
    state.prev_pyramid = Some(pyramid);
    state.frame_index += 1;
    state.prev_count = state.cur_count;
    state.cur_count = state.tracks.len();
    Ok(StepOutput {
        stats,
        tracks: survivors,
        lost,
    })
}

/// Uniform bucket grid for minimum-distance queries.
struct SpacingGrid {
    cell: f64,
    cols: usize,
    rows: usize,
    min_d2: f64,
    buckets: Vec<Vec<Point2<f64>>>,
}

impl SpacingGrid {
    fn new(width: usize, height: usize, min_dist: f64) -> Self {
        let cell = min_dist.max(1.0);
        let cols = (width as f64 / cell).ceil() as usize + 1;
        let rows = (height as f64 / cell).ceil() as usize + 1;
        Self {
            cell,
            cols,
            rows,
            min_d2: min_dist * min_dist,
            buckets: vec![Vec::new(); cols * rows],
        }
    }

    fn key(&self, p: Point2<f64>) -> (usize, usize) {
        let cx = ((p.x / self.cell).floor().max(0.0) as usize).min(self.cols - 1);
        let cy = ((p.y / self.cell).floor().max(0.0) as usize).min(self.rows - 1);
        (cx, cy)
    }

    fn insert(&mut self, p: Point2<f64>) {
        let (cx, cy) = self.key(p);
        self.buckets[cy * self.cols + cx].push(p);
    }

    fn too_close(&self, p: Point2<f64>) -> bool {
        let (cx, cy) = self.key(p);
        for y in cy.saturating_sub(1)..=(cy + 1).min(self.rows - 1) {
            for x in cx.saturating_sub(1)..=(cx + 1).min(self.cols - 1) {
                if self.buckets[y * self.cols + x]
                    .iter()
                    .any(|q| (q - p).norm_squared() < self.min_d2)
                {
                    return true;
                }
            }
        }
        false
    }
}
