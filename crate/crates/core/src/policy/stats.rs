//! Deterministic 16-dimensional texture statistics of a frame.

use crate::frontend::tukey::quantile_sorted;
use crate::image::GrayImage;

pub const TEXTURE_STATS_DIM: usize = 16;

/// Gradient-magnitude levels whose exceedance fractions are reported.
pub const GRADIENT_LEVELS: [f64; 3] = [0.02, 0.05, 0.1];

/// `[mean, std, grad mean, grad p25, p50, p75, p90, laplacian var,
///   frac > 0.02, > 0.05, > 0.1, hist0..hist3, half-resolution std]`
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TextureStats(pub [f64; TEXTURE_STATS_DIM]);

impl TextureStats {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Histogram bin of an intensity: quarters of `[0, 1]`, 1.0 in the top bin.
pub fn histogram_bin(v: f64) -> usize {
    ((v * 4.0) as usize).min(3)
}

/// Gradient magnitudes (central differences) and 4-neighbor Laplacians over interior pixels.
pub fn gradient_and_laplacian(image: &GrayImage) -> (Vec<f64>, Vec<f64>) {
    let (w, h) = (image.width(), image.height());
    let mut grad = Vec::with_capacity(w.saturating_sub(2) * h.saturating_sub(2));
    let mut lap = Vec::with_capacity(grad.capacity());
    for y in 1..h.saturating_sub(1) {
        for x in 1..w.saturating_sub(1) {
            let c = image.get(x, y);
            let (l, r) = (image.get(x - 1, y), image.get(x + 1, y));
            let (u, d) = (image.get(x, y - 1), image.get(x, y + 1));
            let gx = 0.5 * (r - l);
            let gy = 0.5 * (d - u);
            grad.push(gx.hypot(gy));
            lap.push(l + r + u + d - 4.0 * c);
        }
    }
    (grad, lap)
}

pub fn texture_stats(image: &GrayImage) -> TextureStats {
    let mut s = [0.0; TEXTURE_STATS_DIM];
    let (mean, std) = mean_std(image.data());
    s[0] = mean;
    s[1] = std;
    let (mut grad, lap) = gradient_and_laplacian(image);
    if !grad.is_empty() {
        s[2] = grad.iter().sum::<f64>() / grad.len() as f64;
        s[7] = mean_std(&lap).1.powi(2);
        for (k, level) in GRADIENT_LEVELS.iter().enumerate() {
            s[8 + k] = grad.iter().filter(|&&g| g > *level).count() as f64 / grad.len() as f64;
        }
        grad.sort_by(f64::total_cmp);
        for (k, p) in [0.25, 0.5, 0.75, 0.9].iter().enumerate() {
            s[3 + k] = quantile_sorted(&grad, *p);
        }
    }
    let n = image.data().len() as f64;
    for &v in image.data() {
        s[11 + histogram_bin(v)] += 1.0;
    }
    for h in &mut s[11..15] {
        *h /= n;
    }
    if image.width() >= 2 && image.height() >= 2 {
        s[15] = mean_std(image.downsample().data()).1;
    }
    TextureStats(s)
}
