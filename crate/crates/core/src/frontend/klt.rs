//! Pyramidal Lucas-Kanade point tracking.
//!
//! Coarse-to-fine, forward-additive translation model. The template patch and its
//! gradients are sampled from the previous frame once per level; each iteration
//! samples the current frame at the warped patch and solves the 2x2 normal equations.

use nalgebra::{Point2, Vector2};

use crate::image::{GrayImage, ImagePyramid};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KltConfig {
    pub max_iters: u32,
    /// Per-level convergence threshold on the update norm, in pixels.
    pub epsilon: f64,
    /// Structure tensors with smaller determinant are degenerate.
    pub min_determinant: f64,
    /// Final mean absolute intensity residual above which a point is rejected.
    pub max_residual: f64,
}

impl Default for KltConfig {
    fn default() -> Self {
        Self {
            max_iters: 30,
            epsilon: 0.01,
            min_determinant: 1e-6,
            max_residual: 0.2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KltResult {
    pub position: Point2<f64>,
    pub converged: bool,
    /// Iterations summed over all pyramid levels.
    pub iterations: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Failure {
    Degenerate,
    OutOfBounds,
    Residual,
}

/// Column or row tap: lower index, upper index, weight of the upper, outside flag.
type Tap = (usize, usize, f64, bool);

#[derive(Default)]
struct Scratch {
    grid: Vec<f64>,
    cols: Vec<Tap>,
    rows: Vec<Tap>,
}

#[derive(Default)]
struct Patch {
    values: Vec<f64>,
    gx: Vec<f64>,
    gy: Vec<f64>,
    /// Offsets whose template sample lies inside the previous image.
    active: Vec<usize>,
}

/// Bilinear samples of a `side x side` grid of unit-spaced points whose top-left
/// corner is `(x0, y0)`, written row-major into `out`.
///
/// All points share one set of interpolation weights, so interior grids are read
/// with direct indexing. Points outside the image get `NaN` when `mask_outside`,
/// otherwise the border-clamped sample. Returns true when the grid was interior.
fn sample_grid(
    scratch: &mut Scratch,
    img: &GrayImage,
    x0: f64,
    y0: f64,
    side: usize,
    mask_outside: bool,
) -> bool {
    let out = &mut scratch.grid;
    out.clear();
    let (w, h) = (img.width(), img.height());
    let (fx0, fy0) = (x0.floor(), y0.floor());
    let interior = fx0 >= 0.0
        && fy0 >= 0.0
        && fx0 + side as f64 + 1.0 <= (w - 1) as f64
        && fy0 + side as f64 + 1.0 <= (h - 1) as f64;
    if interior {
        let (ix, iy) = (fx0 as usize, fy0 as usize);
        let (ax, ay) = (x0 - fx0, y0 - fy0);
        let w00 = (1.0 - ax) * (1.0 - ay);
        let w10 = ax * (1.0 - ay);
        let w01 = (1.0 - ax) * ay;
        let w11 = ax * ay;
        let data = img.data();
        for r in 0..side {
            let row0 = &data[(iy + r) * w + ix..(iy + r) * w + ix + side + 1];
            let row1 = &data[(iy + r + 1) * w + ix..(iy + r + 1) * w + ix + side + 1];
            for c in 0..side {
                out.push(w00 * row0[c] + w10 * row0[c + 1] + w01 * row1[c] + w11 * row1[c + 1]);
            }
        }
        return true;
    }
    // clamping is separable, so precompute the taps of every column and row
    let taps = |start: f64, len: usize, max: usize, into: &mut Vec<Tap>| {
        into.clear();
        into.extend((0..len).map(|k| {
            let raw = start + k as f64;
            let outside = !(raw >= 0.0 && raw <= max as f64);
            let c = raw.clamp(0.0, max as f64);
            // c is non-negative, so truncation is floor
            let i0 = (c as usize).min(max);
            let i1 = (i0 + 1).min(max);
            (i0, i1, c - i0 as f64, outside)
        }));
    };
    taps(x0, side, w - 1, &mut scratch.cols);
    taps(y0, side, h - 1, &mut scratch.rows);
    let (cols, rows) = (&scratch.cols, &scratch.rows);
    let data = img.data();
    for &(r0, r1, fy, out_y) in rows {
        let (row0, row1) = (&data[r0 * w..(r0 + 1) * w], &data[r1 * w..(r1 + 1) * w]);
        for &(c0, c1, fx, out_x) in cols {
            out.push(if mask_outside && (out_x || out_y) {
                f64::NAN
            } else {
                (1.0 - fx) * (1.0 - fy) * row0[c0]
                    + fx * (1.0 - fy) * row0[c1]
                    + (1.0 - fx) * fy * row1[c0]
                    + fx * fy * row1[c1]
            });
        }
    }
    false
}

fn sample_template(
    img: &GrayImage,
    center: Point2<f64>,
    half: usize,
    scratch: &mut Scratch,
    patch: &mut Patch,
) {
    let side = 2 * half + 1;
    let ext = side + 2;
    let h = half as f64;
    // one-pixel apron supplies the central differences
    sample_grid(
        scratch,
        img,
        center.x - h - 1.0,
        center.y - h - 1.0,
        ext,
        false,
    );
    let buf = &scratch.grid;
    patch.values.clear();
    patch.gx.clear();
    patch.gy.clear();
    patch.active.clear();
    for r in 0..side {
        for c in 0..side {
            let k = (r + 1) * ext + c + 1;
            let (x, y) = (center.x - h + c as f64, center.y - h + r as f64);
            if inside(img, Point2::new(x, y)) {
                patch.active.push(r * side + c);
            }
            patch.values.push(buf[k]);
            patch.gx.push(0.5 * (buf[k + 1] - buf[k - 1]));
            patch.gy.push(0.5 * (buf[k + ext] - buf[k - ext]));
        }
    }
}

/// Gradient-weighted residual sums of a full template against the grid of `img`
/// at top-left `(x0, y0)`; `None` unless the grid is interior.
///
/// Samples exactly as `sample_grid` does, without materializing them.
fn interior_mismatch(img: &GrayImage, x0: f64, y0: f64, side: usize, tpl: &Patch) -> Option<(f64, f64)> {
    let (w, h) = (img.width(), img.height());
    let (fx0, fy0) = (x0.floor(), y0.floor());
    let interior = fx0 >= 0.0
        && fy0 >= 0.0
        && fx0 + side as f64 + 1.0 <= (w - 1) as f64
        && fy0 + side as f64 + 1.0 <= (h - 1) as f64;
    if !interior {
        return None;
    }
    let (ix, iy) = (fx0 as usize, fy0 as usize);
    let (ax, ay) = (x0 - fx0, y0 - fy0);
    let w00 = (1.0 - ax) * (1.0 - ay);
    let w10 = ax * (1.0 - ay);
    let w01 = (1.0 - ax) * ay;
    let w11 = ax * ay;
    let data = img.data();
    let (mut bx, mut by) = (0.0, 0.0);
    for r in 0..side {
        let row0 = &data[(iy + r) * w + ix..(iy + r) * w + ix + side + 1];
        let row1 = &data[(iy + r + 1) * w + ix..(iy + r + 1) * w + ix + side + 1];
        let t = &tpl.values[r * side..(r + 1) * side];
        let gx = &tpl.gx[r * side..(r + 1) * side];
        let gy = &tpl.gy[r * side..(r + 1) * side];
        for c in 0..side {
            let v = w00 * row0[c] + w10 * row0[c + 1] + w01 * row1[c] + w11 * row1[c + 1];
            let err = t[c] - v;
            bx += err * gx[c];
            by += err * gy[c];
        }
    }
    Some((bx, by))
}

fn inside(img: &GrayImage, p: Point2<f64>) -> bool {
    p.x >= 0.0 && p.y >= 0.0 && p.x <= (img.width() - 1) as f64 && p.y <= (img.height() - 1) as f64
}

fn track_one(
    prev: &ImagePyramid,
    cur: &ImagePyramid,
    point: Point2<f64>,
    half: usize,
    config: &KltConfig,
    scratch: &mut Scratch,
    tpl: &mut Patch,
) -> (Vector2<f64>, u32, Option<Failure>) {
    let levels = prev.num_levels().min(cur.num_levels());
    let side = 2 * half + 1;
    let h = half as f64;
    let mut guess = Vector2::zeros();
    let mut iterations = 0u32;
    for level in (0..levels).rev() {
        let scale = f64::from(1u32 << level);
        let p = Point2::new(point.x / scale, point.y / scale);
        let prev_img = prev.level(level);
        let cur_img = cur.level(level);
        sample_template(prev_img, p, half, scratch, tpl);

        let (mut gxx, mut gxy, mut gyy) = (0.0, 0.0, 0.0);
        for &i in &tpl.active {
            gxx += tpl.gx[i] * tpl.gx[i];
            gxy += tpl.gx[i] * tpl.gy[i];
            gyy += tpl.gy[i] * tpl.gy[i];
        }
        let det = gxx * gyy - gxy * gxy;
        if det < config.min_determinant {
            if level == 0 {
                return (guess, iterations, Some(Failure::Degenerate));
            }
            // keep the coarse estimate and refine on the next finer level
            guess *= 2.0;
            continue;
        }
        let inv = 1.0 / det;
        let full = tpl.active.len() == side * side;

        let mut d = guess;
        for _ in 0..config.max_iters {
            iterations += 1;
            let q = p + d;
            if !inside(cur_img, q) {
                return (d * scale, iterations, Some(Failure::OutOfBounds));
            }
            let fast = if full {
                interior_mismatch(cur_img, q.x - h, q.y - h, side, tpl)
            } else {
                None
            };
            let (mut bx, mut by) = (0.0, 0.0);
            if let Some(b) = fast {
                (bx, by) = b;
            } else {
                sample_grid(scratch, cur_img, q.x - h, q.y - h, side, true);
                let buf = &scratch.grid;
                for &i in &tpl.active {
                    let v = buf[i];
                    if v.is_nan() {
                        continue;
                    }
                    let err = tpl.values[i] - v;
                    bx += err * tpl.gx[i];
                    by += err * tpl.gy[i];
                }
            }
            let step = Vector2::new(inv * (gyy * bx - gxy * by), inv * (gxx * by - gxy * bx));
            d += step;
            if step.norm() < config.epsilon {
                break;
            }
        }
        if !inside(cur_img, p + d) {
            return (d * scale, iterations, Some(Failure::OutOfBounds));
        }
        if level == 0 {
            let q = p + d;
            sample_grid(scratch, cur_img, q.x - h, q.y - h, side, true);
            let buf = &scratch.grid;
            let mut resid = 0.0;
            let mut count = 0usize;
            for &i in &tpl.active {
                let v = buf[i];
                if !v.is_nan() {
                    resid += (tpl.values[i] - v).abs();
                    count += 1;
                }
            }
            if count == 0 {
                return (d, iterations, Some(Failure::OutOfBounds));
            }
            resid /= count as f64;
            if resid > config.max_residual {
                return (d, iterations, Some(Failure::Residual));
            }
            return (d, iterations, None);
        }
        guess = d * 2.0;
    }
    (guess, iterations, None)
}

/// Tracks `points` from `prev` to `cur` with a square `patch_size` window.
pub fn track_klt(
    prev: &ImagePyramid,
    cur: &ImagePyramid,
    points: &[Point2<f64>],
    patch_size: usize,
    config: &KltConfig,
) -> Vec<KltResult> {
    assert!(
        patch_size >= 3 && patch_size % 2 == 1,
        "patch size must be odd and >= 3"
    );
    let half = patch_size / 2;
    let mut scratch = Scratch::default();
    let mut tpl = Patch::default();
    points
        .iter()
        .map(|&pt| {
            let (d, iterations, failure) = track_one(prev, cur, pt, half, config, &mut scratch, &mut tpl);
            KltResult {
                position: pt + d,
                converged: failure.is_none(),
                iterations,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Smooth random texture: sum of random sinusoids.
    fn texture(seed: u64) -> impl Fn(f64, f64) -> f64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let waves: Vec<(f64, f64, f64, f64)> = (0..12)
            .map(|_| {
                (
                    rng.gen_range(-0.5..0.5),
                    rng.gen_range(-0.5..0.5),
                    rng.gen_range(0.0..6.28),
                    rng.gen_range(0.02..0.06),
                )
            })
            .collect();
        move |x, y| {
            0.5 + waves
                .iter()
                .map(|(kx, ky, ph, a)| a * (kx * x + ky * y + ph).sin())
                .sum::<f64>()
        }
    }

    fn pair(shift: (f64, f64), seed: u64) -> (ImagePyramid, ImagePyramid) {
        let tex = texture(seed);
        let a = GrayImage::from_fn(96, 96, |x, y| tex(x as f64, y as f64));
        let b = GrayImage::from_fn(96, 96, |x, y| tex(x as f64 - shift.0, y as f64 - shift.1));
        (
            ImagePyramid::build(a, 3).unwrap(),
            ImagePyramid::build(b, 3).unwrap(),
        )
    }

    #[test]
    fn identical_frames_give_zero_displacement() {
        let (a, _) = pair((0.0, 0.0), 1);
        let pts: Vec<_> = (0..5)
            .map(|i| Point2::new(30.0 + 7.0 * i as f64, 40.0))
            .collect();
        for r in track_klt(&a, &a, &pts, 11, &KltConfig::default())
            .iter()
            .zip(&pts)
        {
            assert!(r.0.converged);
            assert_eq!(r.0.position, *r.1);
            assert!(r.0.iterations <= 3);
        }
    }

    #[test]
    fn recovers_integer_shift() {
        let (a, b) = pair((3.0, 2.0), 7);
        let pts = [
            Point2::new(40.0, 40.0),
            Point2::new(55.0, 35.0),
            Point2::new(30.0, 60.0),
        ];
        for (r, p) in track_klt(&a, &b, &pts, 21, &KltConfig::default())
            .iter()
            .zip(&pts)
        {
            assert!(r.converged);
            let d = r.position - p;
            assert!((d.x - 3.0).abs() < 0.1 && (d.y - 2.0).abs() < 0.1, "{d:?}");
        }
    }

    #[test]
    fn uniform_region_is_degenerate() {
        let flat = ImagePyramid::build(GrayImage::filled(64, 64, 0.3), 3).unwrap();
        let r = track_klt(
            &flat,
            &flat,
            &[Point2::new(32.0, 32.0)],
            9,
            &KltConfig::default(),
        );
        assert!(!r[0].converged);
    }

    #[test]
    fn iteration_count_is_bounded() {
        let (a, b) = pair((5.0, -4.0), 3);
        let cfg = KltConfig::default();
        let pts: Vec<_> = (0..10)
            .map(|i| Point2::new(20.0 + 5.0 * i as f64, 48.0))
            .collect();
        let res = track_klt(&a, &b, &pts, 7, &cfg);
        let total: u32 = res.iter().map(|r| r.iterations).sum();
        assert!(total as usize <= pts.len() * 3 * cfg.max_iters as usize);
    }
}
