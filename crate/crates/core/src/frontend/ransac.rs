//! Fundamental-matrix RANSAC with normalized 8-point hypotheses and Sampson residuals.

use nalgebra::{Matrix3, Point2, SMatrix, SymmetricEigen, Vector3};
use rand::Rng;

use crate::error::{Error, Result};

pub const MIN_CORRESPONDENCES: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RansacConfig {
    pub confidence: f64,
    pub max_hypotheses: usize,
}

impl Default for RansacConfig {
    fn default() -> Self {
        Self {
            confidence: 0.99,
            max_hypotheses: 200,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RansacResult {
    pub fundamental: Matrix3<f64>,
    pub inliers: Vec<bool>,
    pub hypotheses: usize,
}

impl RansacResult {
    pub fn inlier_count(&self) -> usize {
        self.inliers.iter().filter(|&&b| b).count()
    }
}

/// Similarity transform moving the centroid to the origin with mean distance sqrt(2).
fn normalizer(pts: &[Point2<f64>]) -> Option<Matrix3<f64>> {
    let n = pts.len() as f64;
    let cx = pts.iter().map(|p| p.x).sum::<f64>() / n;
    let cy = pts.iter().map(|p| p.y).sum::<f64>() / n;
    let mean_dist = pts
        .iter()
        .map(|p| ((p.x - cx).powi(2) + (p.y - cy).powi(2)).sqrt())
        .sum::<f64>()
        / n;
    if !(mean_dist > 1e-12) {
        return None;
    }
    let s = std::f64::consts::SQRT_2 / mean_dist;
    Some(Matrix3::new(
        s,
        0.0,
        -s * cx,
        0.0,
        s,
        -s * cy,
        0.0,
        0.0,
        1.0,
    ))
}

/// Normalized (Hartley) 8-point fit over all given correspondences, rank 2 enforced.
///
/// Returns `None` when the configuration does not determine a unique matrix.
pub fn fit_fundamental(prev: &[Point2<f64>], cur: &[Point2<f64>]) -> Option<Matrix3<f64>> {
    debug_assert_eq!(prev.len(), cur.len());
    if prev.len() < MIN_CORRESPONDENCES {
        return None;
    }
    let t1 = normalizer(prev)?;
    let t2 = normalizer(cur)?;
    let mut ata = SMatrix::<f64, 9, 9>::zeros();
    for (a, b) in prev.iter().zip(cur) {
        let p = t1 * Vector3::new(a.x, a.y, 1.0);
        let q = t2 * Vector3::new(b.x, b.y, 1.0);
        let row = nalgebra::SVector::<f64, 9>::from([
            q.x * p.x,
            q.x * p.y,
            q.x,
            q.y * p.x,
            q.y * p.y,
            q.y,
            p.x,
            p.y,
            1.0,
        ]);
        ata += row * row.transpose();
    }
    let eig = SymmetricEigen::new(ata);
    let mut order: Vec<usize> = (0..9).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let largest = eig.eigenvalues[order[8]];
    if !(largest > 0.0) || eig.eigenvalues[order[1]] <= 1e-10 * largest {
        return None;
    }
    let f = eig.eigenvectors.column(order[0]);
    let f_hat = Matrix3::new(f[0], f[1], f[2], f[3], f[4], f[5], f[6], f[7], f[8]);
    let svd = f_hat.svd(true, true);
    let (u, v_t) = (svd.u?, svd.v_t?);
    let mut sv = svd.singular_values;
    if !(sv[1] > 1e-12 * sv[0]) {
        return None;
    }
    sv[2] = 0.0;
    let f_rank2 = u * Matrix3::from_diagonal(&sv) * v_t;
    let full = t2.transpose() * f_rank2 * t1;
    let norm = full.norm();
    if !(norm.is_finite() && norm > 0.0) {
        return None;
    }
    Some(full / norm)
}

/// First-order geometric error of `cur^T F prev = 0`, in pixels.
pub fn sampson_distance(f: &Matrix3<f64>, prev: &Point2<f64>, cur: &Point2<f64>) -> f64 {
    let p = Vector3::new(prev.x, prev.y, 1.0);
    let q = Vector3::new(cur.x, cur.y, 1.0);
    let fp = f * p;
    let ftq = f.transpose() * q;
    let e = q.dot(&fp);
    let denom = fp.x * fp.x + fp.y * fp.y + ftq.x * ftq.x + ftq.y * ftq.y;
    if denom <= 0.0 {
        return if e == 0.0 { 0.0 } else { f64::INFINITY };
    }
    (e * e / denom).sqrt()
}

fn classify(
    f: &Matrix3<f64>,
    prev: &[Point2<f64>],
    cur: &[Point2<f64>],
    threshold: f64,
) -> (Vec<bool>, usize) {
    let mask: Vec<bool> = prev
        .iter()
        .zip(cur)
        .map(|(a, b)| sampson_distance(f, a, b) <= threshold)
        .collect();
    let count = mask.iter().filter(|&&b| b).count();
    (mask, count)
}

fn required_hypotheses(inlier_ratio: f64, confidence: f64) -> usize {
    if inlier_ratio >= 1.0 {
        return 0;
    }
    let p_good = inlier_ratio.powi(MIN_CORRESPONDENCES as i32);
    if p_good <= f64::MIN_POSITIVE {
        return usize::MAX;
    }
    let n = (1.0 - confidence).ln() / (1.0 - p_good).ln();
    if n.is_finite() {
        n.ceil().max(0.0) as usize
    } else {
        usize::MAX
    }
}

pub fn estimate_fundamental_ransac<R: Rng + ?Sized>(
    prev: &[Point2<f64>],
    cur: &[Point2<f64>],
    threshold: f64,
    config: &RansacConfig,
    rng: &mut R,
) -> Result<RansacResult> {
    if prev.len() != cur.len() {
        return Err(Error::LengthMismatch(format!(
            "{} previous vs {} current points",
            prev.len(),
            cur.len()
        )));
    }
    let n = prev.len();
    if n < MIN_CORRESPONDENCES {
        return Err(Error::InsufficientCorrespondences(n));
    }
    let mut best: Option<(Matrix3<f64>, Vec<bool>, usize)> = None;
    let mut hypotheses = 0;
    let mut needed = config.max_hypotheses;
    let mut sample_prev = [Point2::origin(); MIN_CORRESPONDENCES];
    let mut sample_cur = [Point2::origin(); MIN_CORRESPONDENCES];
    while hypotheses < config.max_hypotheses.min(needed) {
        hypotheses += 1;
        let idx = rand::seq::index::sample(rng, n, MIN_CORRESPONDENCES);
        for (k, i) in idx.iter().enumerate() {
            sample_prev[k] = prev[i];
            sample_cur[k] = cur[i];
        }
        let Some(f) = fit_fundamental(&sample_prev, &sample_cur) else {
            continue;
        };
        let (mask, count) = classify(&f, prev, cur, threshold);
        if best.as_ref().map_or(true, |b| count > b.2) {
            needed = required_hypotheses(count as f64 / n as f64, config.confidence);
            best = Some((f, mask, count));
        }
    }
    let (mut f, mut mask, mut count) = best.ok_or(Error::DegenerateConfiguration)?;

    if count >= MIN_CORRESPONDENCES {
        let (ip, ic): (Vec<_>, Vec<_>) = prev
            .iter()
            .zip(cur)
            .zip(&mask)
            .filter(|(_, &m)| m)
            .map(|((a, b), _)| (*a, *b))
            .unzip();
        if let Some(refit) = fit_fundamental(&ip, &ic) {
            let (rmask, rcount) = classify(&refit, prev, cur, threshold);
            if rcount >= count {
                f = refit;
                mask = rmask;
                count = rcount;
            }
        }
    }
    debug_assert_eq!(count, mask.iter().filter(|&&b| b).count());
    Ok(RansacResult {
        fundamental: f,
        inliers: mask,
        hypotheses,
    })
}
