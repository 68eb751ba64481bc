//! Drift, coverage and compute rewards, the runtime cost model and sequence metrics.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::FlowField;
use crate::frontend::{FeatureTrack, FrameStats, FrontendParams};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RewardConfig {
    pub lambda1: f64,
    pub lambda2: f64,
    pub lambda3: f64,
    pub lambda4: f64,
    pub lambda5: f64,
    pub lambda6: f64,
    pub lambda7: f64,
    pub lambda8: f64,
    pub alpha0: f64,
    pub grid_cols: usize,
    pub grid_rows: usize,
    /// Drift reward when no feature has a defined drift.
    pub no_feature_penalty: f64,
}

impl Default for RewardConfig {
    fn default() -> Self {
        Self {
            lambda1: -15.0,
            lambda2: 0.15,
            lambda3: 5.0,
            lambda4: 0.3,
            lambda5: 3.0,
            lambda6: 0.03,
            lambda7: 10.2,
            lambda8: 0.1,
            alpha0: 0.3,
            grid_cols: 8,
            grid_rows: 8,
            no_feature_penalty: -35.0,
        }
    }
}

impl RewardConfig {
    pub fn validate(&self) -> Result<()> {
        if self.grid_cols == 0 || self.grid_rows == 0 {
            return Err(Error::InvalidConfig("coverage grid needs at least one cell".into()));
        }
        let all = [
            self.lambda1,
            self.lambda2,
            self.lambda3,
            self.lambda4,
            self.lambda5,
            self.lambda6,
            self.lambda7,
            self.lambda8,
            self.alpha0,
            self.no_feature_penalty,
        ];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidConfig("reward constants must be finite".into()));
        }
        Ok(())
    }
}

/// Parametric frontend runtime model; coefficients in microseconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CostModel {
    pub tau_c_us: f64,
    pub nu1: f64,
    pub nu2: f64,
    pub nu3: f64,
    pub nu4: f64,
    pub nu5: f64,
    pub nu6: f64,
    /// Hardware scaling factor.
    pub beta: f64,
}

impl Default for CostModel {
    fn default() -> Self {
        Self {
            tau_c_us: 187.9201,
            nu1: 0.0731,
            nu2: 0.0166,
            nu3: 0.0010,
            nu4: 2.4456,
            nu5: 0.1042,
            nu6: 0.0050,
            beta: 10.0,
        }
    }
}

impl CostModel {
    pub fn validate(&self) -> Result<()> {
        let coeffs = [self.tau_c_us, self.nu1, self.nu2, self.nu3, self.nu4, self.nu5, self.nu6];
        if coeffs.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
            return Err(Error::InvalidConfig("cost coefficients must be finite and >= 0".into()));
        }
        if !(self.beta > 0.0) || !self.beta.is_finite() {
            return Err(Error::InvalidConfig(format!("beta {} must be > 0", self.beta)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardBreakdown {
    pub frame: usize,
    pub r_drift: f64,
    pub r_cover: f64,
    pub r_comp: f64,
    pub r_total: f64,
    pub tau_ms: f64,
    pub alpha: f64,
    /// Mean drift of the features with defined drift; 0 when there are none.
    pub mean_drift_px: f64,
    /// Number of features with defined drift.
    pub n_drift: usize,
}

/// Per-frame rewards of one static parameter set on one sequence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceRun {
    pub params: FrontendParams,
    pub frames: Vec<RewardBreakdown>,
}

/// Distance between the tracked position and the flow-predicted one.
///
/// `None` for new tracks and where the flow at the previous position is invalid.
pub fn feature_drift(track: &FeatureTrack, flow_prev_to_cur: &FlowField) -> Option<f64> {
    let prev = track.prev_position?;
    let (du, dv) = flow_prev_to_cur.sample(prev.x, prev.y)?;
    let (ex, ey) = (prev.x + du, prev.y + dv);
    Some((track.position.x - ex).hypot(track.position.y - ey))
}

pub fn r_drift(drifts: &[f64], config: &RewardConfig) -> f64 {
    if drifts.is_empty() {
        return config.no_feature_penalty;
    }
    drifts
        .iter()
        .map(|&d| config.lambda1 * (config.lambda2 * d).tanh() + config.lambda3)
        .sum()
}

/// Fraction of grid cells holding at least one position. Remainder pixels belong
/// to the last row and column.
pub fn coverage<'a, I>(positions: I, width: usize, height: usize, config: &RewardConfig) -> f64
where
    I: IntoIterator<Item = &'a nalgebra::Point2<f64>>,
{
    let (gc, gr) = (config.grid_cols, config.grid_rows);
    let (cw, ch) = ((width / gc).max(1), (height / gr).max(1));
    let mut occupied = vec![false; gc * gr];
    for p in positions {
        if !(p.x >= 0.0 && p.y >= 0.0) {
            continue;
        }
        let cx = ((p.x as usize) / cw).min(gc - 1);
        let cy = ((p.y as usize) / ch).min(gr - 1);
        occupied[cy * gc + cx] = true;
    }
    occupied.iter().filter(|&&o| o).count() as f64 / (gc * gr) as f64
}

pub fn r_cover(alpha: f64, config: &RewardConfig) -> f64 {
    let slope = if alpha >= config.alpha0 { config.lambda4 } else { config.lambda5 };
    slope * (alpha - config.alpha0) + config.lambda6
}

/// Estimated frame runtime in seconds.
pub fn estimate_runtime(stats: &FrameStats, patch_size: usize, model: &CostModel) -> f64 {
    let n_klt = stats.n_klt as f64;
    let w2 = (patch_size * patch_size) as f64;
    let n_ransac = stats.n_ransac as f64;
    let n = stats.tracked_count as f64;
    let tau_klt = model.nu1 * n_klt + model.nu2 * w2 + model.nu3 * n_klt * w2;
    let tau_ransac = model.nu4 * n_ransac + model.nu5 * n + model.nu6 * n_ransac * n;
    model.beta * (tau_klt + tau_ransac + model.tau_c_us) * 1e-6
}

/// Compute reward for a runtime `tau` in seconds.
pub fn r_comp(tau: f64, config: &RewardConfig) -> f64 {
    (-(-1.0 / tau + config.lambda7).exp() + config.lambda8).clamp(-10.0, 0.1)
}

/// Full reward of one tracker step.
///
/// `tracks` is the active set after the step; drift is evaluated for the tracked
/// ones against `flow` (previous frame to this one) when it is available.
#[allow(clippy::too_many_arguments)]
pub fn frame_reward(
    frame: usize,
    tracks: &[FeatureTrack],
    flow: Option<&FlowField>,
    stats: &FrameStats,
    params: &FrontendParams,
    image_size: (usize, usize),
    config: &RewardConfig,
    cost: &CostModel,
) -> RewardBreakdown {
    let drifts: Vec<f64> = match flow {
        Some(f) => tracks.iter().filter_map(|t| feature_drift(t, f)).collect(),
        None => Vec::new(),
    };
    let rd = r_drift(&drifts, config);
    let alpha = coverage(tracks.iter().map(|t| &t.position), image_size.0, image_size.1, config);
    let rc = r_cover(alpha, config);
    let tau = estimate_runtime(stats, params.klt_patch_size, cost);
    let rp = r_comp(tau, config);
    RewardBreakdown {
        frame,
        r_drift: rd,
        r_cover: rc,
        r_comp: rp,
        r_total: rd + rc + rp,
        tau_ms: tau * 1e3,
        alpha,
        mean_drift_px: if drifts.is_empty() {
            0.0
        } else {
            drifts.iter().sum::<f64>() / drifts.len() as f64
        },
        n_drift: drifts.len(),
    }
}

/// Policy reward minus the reference reward of the same frame.
pub fn training_reward(policy: &RewardBreakdown, reference: &RewardBreakdown) -> Result<f64> {
    if policy.frame != reference.frame {
        return Err(Error::FrameMismatch {
            policy: policy.frame,
            reference: reference.frame,
        });
    }
    Ok(policy.r_total - reference.r_total)
}

/// One row of the metrics CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub sequence: String,
    pub frame: usize,
    pub n_tracked: usize,
    pub n_inliers: usize,
    /// Blank when no ground-truth flow was available.
    pub mean_drift_px: Option<f64>,
    pub alpha: f64,
    pub tau_ms: f64,
    pub r_drift: f64,
    pub r_cover: f64,
    pub r_comp: f64,
    pub r_total: f64,
    /// Features created on this frame.
    pub n_new: usize,
}

impl MetricsRecord {
    pub fn new(
        sequence: &str,
        stats: &FrameStats,
        breakdown: &RewardBreakdown,
        has_flow: bool,
    ) -> Self {
        Self {
            sequence: sequence.to_string(),
            frame: breakdown.frame,
            n_tracked: stats.tracked_count,
            n_inliers: stats.inlier_count,
            mean_drift_px: (has_flow && breakdown.n_drift > 0).then_some(breakdown.mean_drift_px),
            alpha: breakdown.alpha,
            tau_ms: breakdown.tau_ms,
            r_drift: breakdown.r_drift,
            r_cover: breakdown.r_cover,
            r_comp: breakdown.r_comp,
            r_total: breakdown.r_total,
            n_new: stats.detected_count,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SequenceMetrics {
    /// Mean per-frame drift scaled to pixels per second; `None` without drift data.
    pub drift_px_per_s: Option<f64>,
    /// Mean final age over every feature created, in frames.
    pub mean_age: f64,
    pub coverage_pct: f64,
    pub tau_ms: f64,
    pub mean_reward: f64,
}

pub fn sequence_metrics(records: &[MetricsRecord], fps: f64) -> Result<SequenceMetrics> {
    if records.is_empty() {
        return Err(Error::EmptySequence);
    }
    let n = records.len() as f64;
    let drifts: Vec<f64> = records.iter().filter_map(|r| r.mean_drift_px).collect();
    let drift_px_per_s =
        (!drifts.is_empty()).then(|| drifts.iter().sum::<f64>() / drifts.len() as f64 * fps);
    // every active feature-frame adds one to some feature's final age
    let feature_frames: usize = records.iter().map(|r| r.n_inliers + r.n_new).sum();
    let created: usize = records.iter().map(|r| r.n_new).sum();
    let mean_age = if created == 0 { 0.0 } else { feature_frames as f64 / created as f64 };
    Ok(SequenceMetrics {
        drift_px_per_s,
        mean_age,
        coverage_pct: records.iter().map(|r| r.alpha).sum::<f64>() / n * 100.0,
        tau_ms: records.iter().map(|r| r.tau_ms).sum::<f64>() / n,
        mean_reward: records.iter().map(|r| r.r_total).sum::<f64>() / n,
    })
}
