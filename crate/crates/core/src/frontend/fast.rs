//! FAST-9 corner detection with 3x3 non-maximum suppression.

use nalgebra::Point2;

use crate::image::GrayImage;

/// Radius of the Bresenham circle; also the minimum border margin of a keypoint.
pub const CIRCLE_RADIUS: usize = 3;
/// Contiguous arc length required by the segment test.
pub const ARC_LENGTH: usize = 9;

/// The 16-pixel radius-3 Bresenham circle, clockwise from 12 o'clock.
pub const CIRCLE: [(i32, i32); 16] = [
    (0, -3),
    (1, -3),
    (2, -2),
    (3, -1),
    (3, 0),
    (3, 1),
    (2, 2),
    (1, 3),
    (0, 3),
    (-1, 3),
    (-2, 2),
    (-3, 1),
    (-3, 0),
    (-3, -1),
    (-2, -2),
    (-1, -3),
];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Keypoint {
    pub position: Point2<f64>,
    /// Largest integer threshold (0-255 scale) at which the pixel passes the segment test.
    pub score: i32,
}

/// Corner response used by non-maximum suppression.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct Response {
    pub score: i32,
    /// Larger of the summed positive and summed negative circle differences; breaks
    /// score ties so the pixel with the strongest overall contrast wins.
    pub contrast: i32,
}

/// Segment-test response for the pixel at `(x, y)` of an 8-bit raster.
#[inline]
pub(crate) fn response(pix: &[u8], width: usize, x: usize, y: usize) -> Response {
    let c = i32::from(pix[y * width + x]);
    let mut d = [0i32; 16];
    let (mut pos_sum, mut neg_sum) = (0, 0);
    for (k, &(dx, dy)) in CIRCLE.iter().enumerate() {
        let px = (x as i32 + dx) as usize;
        let py = (y as i32 + dy) as usize;
        let v = i32::from(pix[py * width + px]) - c;
        d[k] = v;
        if v > 0 {
            pos_sum += v;
        } else {
            neg_sum -= v;
        }
    }
    // sliding min/max over the wrapped 9-arcs by doubling windows 1, 2, 4, 8, then + 1
    let mut lo = [0i32; 32];
    let mut hi = [0i32; 32];
    for k in 0..32 {
        lo[k] = d[k % 16];
        hi[k] = d[k % 16];
    }
    for step in [1, 2, 4] {
        for k in 0..32 - step {
            lo[k] = lo[k].min(lo[k + step]);
            hi[k] = hi[k].max(hi[k + step]);
        }
    }
    let mut best = i32::MIN;
    for start in 0..16 {
        let l = lo[start].min(d[(start + 8) % 16]);
        let h = hi[start].max(d[(start + 8) % 16]);
        // brighter: p > c + t for all arc pixels  <=>  t <= min(d) - 1
        best = best.max(l - 1).max(-h - 1);
    }
    Response {
        score: best,
        contrast: pos_sum.max(neg_sum),
    }
}

/// True when 9 contiguous circle pixels are all brighter than `c + t` or all darker than `c - t`.
#[inline]
fn passes(pix: &[u8], width: usize, x: usize, y: usize, t: i32) -> bool {
    let c = i32::from(pix[y * width + x]);
    let (mut bright, mut dark) = (0u32, 0u32);
    for (k, &(dx, dy)) in CIRCLE.iter().enumerate() {
        let v = i32::from(pix[(y as i32 + dy) as usize * width + (x as i32 + dx) as usize]);
        bright |= u32::from(v > c + t) << k;
        dark |= u32::from(v < c - t) << k;
    }
    has_arc(bright) || has_arc(dark)
}

#[inline]
fn has_arc(mask: u32) -> bool {
    // bit s of `run` survives iff bits s..s+8 of the wrapped mask are all set
    let doubled = mask | (mask << 16);
    let mut run = doubled;
    for k in 1..ARC_LENGTH {
        run &= doubled >> k;
    }
    run & 0xFFFF != 0
}

#[inline]
fn beats(a: Response, a_idx: usize, b: Response, b_idx: usize) -> bool {
    (a.score, a.contrast, std::cmp::Reverse(a_idx))
        > (b.score, b.contrast, std::cmp::Reverse(b_idx))
}

/// Pixels strictly closer than `sqrt(min_d2)` to some exclusion point.
fn exclusion_mask(w: usize, h: usize, exclusion: &[Point2<f64>], min_d2: f64) -> Vec<bool> {
    let mut mask = vec![false; w * h];
    if !(min_d2 > 0.0) {
        return mask;
    }
    let reach = min_d2.sqrt().ceil() + 1.0;
    for e in exclusion {
        if !(e.x.is_finite() && e.y.is_finite()) {
            continue;
        }
        let x0 = (e.x - reach).floor().max(0.0) as usize;
        let y0 = (e.y - reach).floor().max(0.0) as usize;
        let x1 = ((e.x + reach).ceil().max(-1.0) + 1.0).min(w as f64) as usize;
        let y1 = ((e.y + reach).ceil().max(-1.0) + 1.0).min(h as f64) as usize;
        for y in y0..y1 {
            for x in x0..x1 {
                let p = Point2::new(x as f64, y as f64);
                if (e - p).norm_squared() < min_d2 {
                    mask[y * w + x] = true;
                }
            }
        }
    }
    mask
}

/// Detects FAST-9 corners.
///
/// `threshold` is on the 0-255 scale; the image is quantized to 8 bits first.
/// Corners within `min_distance` (strictly closer) of any `exclusion` point are dropped.
/// Output is sorted by descending score.
pub fn detect_fast(
    image: &GrayImage,
    threshold: u32,
    exclusion: &[Point2<f64>],
    min_distance: f64,
) -> Vec<Keypoint> {
    let (w, h) = (image.width(), image.height());
    let r = CIRCLE_RADIUS;
    if w <= 2 * r || h <= 2 * r {
        return Vec::new();
    }
    let pix = image.to_u8();
    let t = threshold as i32;
    let mut resp: Vec<Option<Response>> = vec![None; w * h];
    for y in r..h - r {
        for x in r..w - r {
            let c = i32::from(pix[y * w + x]);
            // An arc of 9 covers at least two of the four compass points.
            let (mut bright, mut dark) = (0, 0);
            for p in [pix[(y - 3) * w + x], pix[y * w + x + 3], pix[(y + 3) * w + x], pix[y * w + x - 3]] {
                let p = i32::from(p);
                bright += i32::from(p > c + t);
                dark += i32::from(p < c - t);
            }
            if bright < 2 && dark < 2 {
                continue;
            }
            if !passes(&pix, w, x, y, t) {
                continue;
            }
            let rsp = response(&pix, w, x, y);
            if rsp.score >= t {
                resp[y * w + x] = Some(rsp);
            }
        }
    }

    let min_d2 = min_distance * min_distance;
    let excluded = exclusion_mask(w, h, exclusion, min_d2);
    let mut out = Vec::new();
    for y in r..h - r {
        'px: for x in r..w - r {
            let idx = y * w + x;
            let Some(me) = resp[idx] else { continue };
            if excluded[idx] {
                continue;
            }
            for ny in y - 1..=y + 1 {
                for nx in x - 1..=x + 1 {
                    let nidx = ny * w + nx;
                    if nidx == idx {
                        continue;
                    }
                    if let Some(other) = resp[nidx] {
                        if !beats(me, idx, other, nidx) {
                            continue 'px;
                        }
                    }
                }
            }
            out.push((me, idx, Point2::new(x as f64, y as f64)));
        }
    }
    out.sort_by(|a, b| {
        (b.0.score, b.0.contrast, std::cmp::Reverse(b.1)).cmp(&(
            a.0.score,
            a.0.contrast,
            std::cmp::Reverse(a.1),
        ))
    });
    out.into_iter()
        .map(|(rsp, _, position)| Keypoint {
            position,
            score: rsp.score,
        })
        .collect()
}
