//! Sinusoidal encoding of the frame index for the critic.

pub const DEFAULT_BANDS: usize = 17;

/// `[sin(2^k pi t), ..., cos(2^k pi t), ...]` for `k < num_bands`, `t = index / horizon`.
pub fn fourier_features(frame_index: usize, num_bands: usize, horizon: usize) -> Vec<f64> {
    assert!(horizon >= 1, "horizon must be at least 1");
    let t = frame_index as f64 / horizon as f64;
    let mut out = vec![0.0; 2 * num_bands];
    for k in 0..num_bands {
        let phase = (1u64 << k) as f64 * std::f64::consts::PI * t;
        out[k] = phase.sin();
        out[num_bands + k] = phase.cos();
    }
    out
}
