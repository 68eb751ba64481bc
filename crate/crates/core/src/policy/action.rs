//! Raw action vector to frontend parameters.

use crate::frontend::tracker::{FAST_THRESHOLD_MAX, PATCH_SIZE_MAX, PATCH_SIZE_MIN, RANSAC_THRESHOLD_MAX};
use crate::frontend::FrontendParams;

pub const ACTION_DIM: usize = 3;

/// Nearest integer with halves rounded down.
fn round_half_down(v: f64) -> f64 {
    (v - 0.5).ceil()
}

/// Maps `raw` (clamped to `[-1, 1]`) onto the parameter box.
///
/// FAST threshold rounds halves down; the patch size snaps to the nearest odd
/// value with ties going to the smaller one.
pub fn map_action(raw: [f64; ACTION_DIM]) -> FrontendParams {
    let r = raw.map(|v| if v.is_nan() { 0.0 } else { v.clamp(-1.0, 1.0) });
    let half_fast = f64::from(FAST_THRESHOLD_MAX) / 2.0;
    let fast = round_half_down(half_fast + half_fast * r[0]).clamp(0.0, f64::from(FAST_THRESHOLD_MAX));
    let (lo, hi) = (PATCH_SIZE_MIN as f64, PATCH_SIZE_MAX as f64);
    let x = 0.5 * (lo + hi) + 0.5 * (hi - lo) * r[1];
    let k = round_half_down((x - 1.0) / 2.0);
    let patch = (2.0 * k + 1.0).clamp(lo, hi);
    let half_ransac = RANSAC_THRESHOLD_MAX / 2.0;
    FrontendParams {
        fast_threshold: fast as u32,
        klt_patch_size: patch as usize,
        ransac_threshold: (half_ransac + half_ransac * r[2]).clamp(0.0, RANSAC_THRESHOLD_MAX),
    }
}

/// A raw vector that `map_action` sends to `params`.
///
/// Discrete components land mid-cell; the RANSAC component is the exact inverse.
pub fn raw_for_params(params: &FrontendParams) -> [f64; ACTION_DIM] {
    let half_fast = f64::from(FAST_THRESHOLD_MAX) / 2.0;
    let (lo, hi) = (PATCH_SIZE_MIN as f64, PATCH_SIZE_MAX as f64);
    let half_ransac = RANSAC_THRESHOLD_MAX / 2.0;
    [
        ((f64::from(params.fast_threshold) - half_fast) / half_fast).clamp(-1.0, 1.0),
        ((params.klt_patch_size as f64 - 0.5 * (lo + hi)) / (0.5 * (hi - lo))).clamp(-1.0, 1.0),
        ((params.ransac_threshold - half_ransac) / half_ransac).clamp(-1.0, 1.0),
    ]
}

/// A raw vector `r` with `tanh(atanh(r)) == r` bit-exactly, close to `raw`.
///
/// A network whose output bias is `atanh(r)` then reproduces `r` exactly.
pub fn tanh_fixed_point(raw: [f64; ACTION_DIM]) -> [f64; ACTION_DIM] {
    raw.map(|v| {
        let mut x = v.clamp(-1.0 + 1e-9, 1.0 - 1e-9);
        for _ in 0..64 {
            let y = x.atanh().tanh();
            if y == x {
                return x;
            }
            x = y;
        }
        x
    })
}

/// Parameters reachable exactly by a constant-output policy, next to `params`.
pub fn canonical_params(params: &FrontendParams) -> ([f64; ACTION_DIM], FrontendParams) {
    let raw = tanh_fixed_point(raw_for_params(params));
    (raw, map_action(raw))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_bounds_and_center() {
        let lo = map_action([-1.0; 3]);
        assert_eq!((lo.fast_threshold, lo.klt_patch_size, lo.ransac_threshold), (0, 3, 0.0));
        let hi = map_action([1.0; 3]);
        assert_eq!((hi.fast_threshold, hi.klt_patch_size, hi.ransac_threshold), (209, 41, 3.0));
        let mid = map_action([0.0; 3]);
        assert_eq!((mid.fast_threshold, mid.klt_patch_size, mid.ransac_threshold), (104, 21, 1.5));
    }

    #[test]
    fn inverse_round_trips_discrete_grid() {
        for fast in 0..=209 {
            for patch in (3..=41).step_by(2) {
                let p = FrontendParams {
                    fast_threshold: fast,
                    klt_patch_size: patch,
                    ransac_threshold: 1.0,
                };
                let q = map_action(raw_for_params(&p));
                assert_eq!((q.fast_threshold, q.klt_patch_size), (fast, patch));
            }
        }
    }

    #[test]
    fn canonical_raw_is_tanh_stable() {
        let p = FrontendParams {
            fast_threshold: 37,
            klt_patch_size: 15,
            ransac_threshold: 0.731,
        };
        let (raw, q) = canonical_params(&p);
        for v in raw {
            assert_eq!(v.atanh().tanh(), v);
        }
        assert_eq!((q.fast_threshold, q.klt_patch_size), (37, 15));
        assert!((q.ransac_threshold - 0.731).abs() < 1e-8);
    }
}
