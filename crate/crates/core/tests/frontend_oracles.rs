use advo_core::frontend::fast::CIRCLE;
use advo_core::frontend::tukey::quantile_sorted;
use advo_core::frontend::{
    detect_fast, estimate_fundamental_ransac, sampson_distance, track_klt, tukey_filter, FrontendParams, KltConfig,
    RansacConfig, TrackerConfig, TrackerState,
};
use advo_core::image::{GrayImage, ImagePyramid};
use advo_core::sim::apply_sensor_noise;
use advo_core::sim::AugmentConfig;
use nalgebra::{Matrix3, Point2, Vector3};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

// ---------- FAST ----------

fn diffs(pix: &[u8], w: usize, x: usize, y: usize) -> [i32; 16] {
    let c = i32::from(pix[y * w + x]);
    let mut d = [0; 16];
    for (k, (dx, dy)) in CIRCLE.iter().enumerate() {
        d[k] = i32::from(pix[(y as i32 + dy) as usize * w + (x as i32 + dx) as usize]) - c;
    }
    d
}

fn segment_test(d: &[i32; 16], t: i32) -> bool {
    (0..16).any(|s| (0..9).all(|k| d[(s + k) % 16] > t) || (0..9).all(|k| d[(s + k) % 16] < -t))
}

fn oracle_score(d: &[i32; 16]) -> i32 {
    // largest t in [0, 255] passing the test; the test is monotone in t
    let (mut lo, mut hi) = (-1, 255);
    while lo < hi {
        let mid = (lo + hi + 1) / 2;
        if segment_test(d, mid) {
            lo = mid;
        } else {
            hi = mid - 1;
        }
    }
    lo
}

fn oracle_fast(pix: &[u8], w: usize, h: usize, t: i32) -> Vec<(usize, usize, i32)> {
    let mut resp = vec![None; w * h];
    for y in 3..h - 3 {
        for x in 3..w - 3 {
            let d = diffs(pix, w, x, y);
            if segment_test(&d, t) {
                let pos: i32 = d.iter().filter(|&&v| v > 0).sum();
                let neg: i32 = -d.iter().filter(|&&v| v < 0).sum::<i32>();
                resp[y * w + x] = Some((oracle_score(&d), pos.max(neg)));
            }
        }
    }
    let key = |i: usize| resp[i].map(|(s, c)| (s, c, -(i as i64)));
    let mut out = Vec::new();
    for y in 3..h - 3 {
        for x in 3..w - 3 {
            let i = y * w + x;
            let Some(me) = key(i) else { continue };
            let mut is_max = true;
            for ny in y - 1..=y + 1 {
                for nx in x - 1..=x + 1 {
                    let j = ny * w + nx;
                    if j != i && key(j).is_some_and(|o| o > me) {
                        is_max = false;
                    }
                }
            }
            if is_max {
                out.push((x, y, me.0));
            }
        }
    }
    out.sort_by_key(|&(x, y, s)| (std::cmp::Reverse(s), std::cmp::Reverse(resp[y * w + x].unwrap().1), y * w + x));
    out
}

fn random_raster(rng: &mut ChaCha8Rng, w: usize, h: usize) -> Vec<u8> {
    // blocky structure plus pixel noise so both corners and flat areas occur
    let block = rng.gen_range(1..=6);
    let cells: Vec<u8> = (0..(w / block + 1) * (h / block + 1)).map(|_| rng.gen()).collect();
    let noise = rng.gen_range(0..40);
    (0..w * h)
        .map(|i| {
            let (x, y) = (i % w, i / w);
            let base = i32::from(cells[(y / block) * (w / block + 1) + x / block]);
            (base + rng.gen_range(-noise..=noise)).clamp(0, 255) as u8
        })
        .collect()
}

fn detected(img: &GrayImage, t: u32) -> Vec<(usize, usize, i32)> {
    detect_fast(img, t, &[], 0.0)
        .iter()
        .map(|k| (k.position.x as usize, k.position.y as usize, k.score))
        .collect()
}

#[test]
fn fast_matches_brute_force_oracle_on_200_images() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for _ in 0..200 {
        let pix = random_raster(&mut rng, 64, 64);
        let t = rng.gen_range(5..=60);
        let img = GrayImage::from_u8(64, 64, &pix).unwrap();
        assert_eq!(detected(&img, t as u32), oracle_fast(&pix, 64, 64, t));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn fast_oracle_property(seed in any::<u64>(), w in 8usize..48, h in 8usize..48, t in 5i32..=60) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pix = random_raster(&mut rng, w, h);
        let img = GrayImage::from_u8(w, h, &pix).unwrap();
        prop_assert_eq!(detected(&img, t as u32), oracle_fast(&pix, w, h, t));
    }

    #[test]
    fn fast_is_monotone_in_threshold(seed in any::<u64>(), t in 5u32..60, dt in 1u32..40) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pix = random_raster(&mut rng, 40, 40);
        let img = GrayImage::from_u8(40, 40, &pix).unwrap();
        let low: Vec<_> = detect_fast(&img, t, &[], 0.0).iter().map(|k| k.position).collect();
        for k in detect_fast(&img, t + dt, &[], 0.0) {
            prop_assert!(low.contains(&k.position));
        }
    }

    #[test]
    fn fast_exclusion_is_oracle_minus_disk(seed in any::<u64>(), ex in 0.0f64..40.0, ey in 0.0f64..40.0, r in 0.5f64..9.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pix = random_raster(&mut rng, 40, 40);
        let img = GrayImage::from_u8(40, 40, &pix).unwrap();
        let e = Point2::new(ex, ey);
        let expect: Vec<_> = detected(&img, 20)
            .into_iter()
            .filter(|&(x, y, _)| (Point2::new(x as f64, y as f64) - e).norm() >= r)
            .collect();
        let got: Vec<_> = detect_fast(&img, 20, &[e], r)
            .iter()
            .map(|k| (k.position.x as usize, k.position.y as usize, k.score))
            .collect();
        prop_assert_eq!(got, expect);
    }
}

// ---------- KLT ----------

fn smooth_texture(seed: u64, w: usize, h: usize) -> GrayImage {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let waves: Vec<(f64, f64, f64, f64)> = (0..12)
        .map(|_| (rng.gen_range(0.05..0.45), rng.gen_range(0.05..0.45), rng.gen_range(0.0..6.3), rng.gen_range(0.02..0.05)))
        .collect();
    GrayImage::from_fn(w, h, |x, y| {
        let v: f64 = waves.iter().map(|&(a, b, p, m)| m * (a * x as f64 + b * y as f64 + p).sin()).sum();
        (0.5 + v).clamp(0.0, 1.0)
    })
}

fn block_texture(seed: u64, w: usize, h: usize) -> GrayImage {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (bw, bh) = (w / 6 + 1, h / 6 + 1);
    let cells: Vec<f64> = (0..bw * bh).map(|_| rng.gen_range(0.1..0.9)).collect();
    let raw = GrayImage::from_fn(w, h, |x, y| cells[(y / 6) * bw + x / 6]);
    // 3x3 box blur keeps corners while giving KLT smooth gradients
    GrayImage::from_fn(w, h, |x, y| {
        let mut s = 0.0;
        for dy in 0..3 {
            for dx in 0..3 {
                s += raw.get((x + dx).saturating_sub(1).min(w - 1), (y + dy).saturating_sub(1).min(h - 1));
            }
        }
        s / 9.0
    })
}

fn shifted(img: &GrayImage, dx: usize, dy: usize, w: usize, h: usize) -> GrayImage {
    // pixel (x, y) of the result shows (x - dx, y - dy) of a larger canvas
    GrayImage::from_fn(w, h, |x, y| img.get(x + 10 - dx, y + 10 - dy))
}

fn grid_points(w: usize, h: usize, margin: usize, step: usize) -> Vec<Point2<f64>> {
    let mut pts = Vec::new();
    for y in (margin..h - margin).step_by(step) {
        for x in (margin..w - margin).step_by(step) {
            pts.push(Point2::new(x as f64, y as f64));
        }
    }
    pts
}

#[test]
fn klt_recovers_integer_shift_noise_free() {
    let canvas = smooth_texture(3, 140, 120);
    let prev = shifted(&canvas, 0, 0, 120, 100);
    let cur = shifted(&canvas, 3, 2, 120, 100);
    let (pp, cp) = (ImagePyramid::build(prev, 3).unwrap(), ImagePyramid::build(cur, 3).unwrap());
    let pts = grid_points(120, 100, 24, 12);
    let res = track_klt(&pp, &cp, &pts, 21, &KltConfig::default());
    for (p, r) in pts.iter().zip(&res) {
        assert!(r.converged);
        let d = r.position - p;
        assert!((d.x - 3.0).abs() < 0.1 && (d.y - 2.0).abs() < 0.1, "{d:?}");
    }
}

#[test]
fn klt_recovers_integer_shift_with_sensor_noise() {
    let canvas = block_texture(4, 140, 120);
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let cfg = AugmentConfig::default();
    let prev = apply_sensor_noise(&shifted(&canvas, 0, 0, 120, 100), &cfg, &mut rng);
    let cur = apply_sensor_noise(&shifted(&canvas, 3, 2, 120, 100), &cfg, &mut rng);
    let (pp, cp) = (ImagePyramid::build(prev, 3).unwrap(), ImagePyramid::build(cur, 3).unwrap());
    let pts = grid_points(120, 100, 24, 12);
    let res = track_klt(&pp, &cp, &pts, 21, &KltConfig::default());
    let mut errs: Vec<f64> = pts
        .iter()
        .zip(&res)
        .filter(|(_, r)| r.converged)
        .map(|(p, r)| ((r.position - p) - nalgebra::Vector2::new(3.0, 2.0)).norm())
        .collect();
    errs.sort_by(f64::total_cmp);
    assert!(errs.len() * 2 >= pts.len(), "only {} of {} converged", errs.len(), pts.len());
    let within = errs.iter().filter(|&&e| e < 0.5).count();
    assert!(errs[errs.len() / 2] < 0.5);
    assert!(within as f64 >= 0.9 * errs.len() as f64);
}

#[test]
fn klt_is_equivariant_to_integer_shifts() {
    let canvas = smooth_texture(5, 150, 130);
    let a = GrayImage::from_fn(120, 100, |x, y| canvas.get(x + 12, y + 12));
    let b = GrayImage::from_fn(120, 100, |x, y| canvas.get(x + 10, y + 11));
    // same pair moved by (+4, +3) inside the canvas
    let a2 = GrayImage::from_fn(120, 100, |x, y| canvas.get(x + 8, y + 9));
    let b2 = GrayImage::from_fn(120, 100, |x, y| canvas.get(x + 6, y + 8));
    let pts = grid_points(120, 100, 28, 10);
    let pts2: Vec<_> = pts.iter().map(|p| Point2::new(p.x + 4.0, p.y + 3.0)).collect();
    let cfg = KltConfig::default();
    let r1 = track_klt(&ImagePyramid::build(a, 3).unwrap(), &ImagePyramid::build(b, 3).unwrap(), &pts, 15, &cfg);
    let r2 = track_klt(&ImagePyramid::build(a2, 3).unwrap(), &ImagePyramid::build(b2, 3).unwrap(), &pts2, 15, &cfg);
    for (x, y) in r1.iter().zip(&r2) {
        assert_eq!(x.converged, y.converged);
        if x.converged {
            let d = y.position - x.position;
            assert!((d.x - 4.0).abs() < 0.05 && (d.y - 3.0).abs() < 0.05, "{d:?}");
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn klt_identical_frames_zero_displacement(seed in any::<u64>(), half in 1usize..10) {
        let img = smooth_texture(seed, 80, 64);
        let p = ImagePyramid::build(img, 3).unwrap();
        let pts = grid_points(80, 64, 16, 9);
        for (pt, r) in pts.iter().zip(track_klt(&p, &p, &pts, 2 * half + 1, &KltConfig::default())) {
            if r.converged {
                prop_assert_eq!(r.position, *pt);
                prop_assert!(r.iterations <= 3);
            }
        }
    }
}

// ---------- RANSAC ----------

fn synthetic_pair(rng: &mut ChaCha8Rng, n_in: usize, n_out: usize, sigma: f64) -> (Vec<Point2<f64>>, Vec<Point2<f64>>, Vec<bool>, Matrix3<f64>) {
    let k = Matrix3::new(300.0, 0.0, 320.0, 0.0, 300.0, 240.0, 0.0, 0.0, 1.0);
    let rot = nalgebra::Rotation3::from_euler_angles(0.02, -0.05, 0.01);
    let t = Vector3::new(0.6, 0.1, 0.2);
    let tx = Matrix3::new(0.0, -t.z, t.y, t.z, 0.0, -t.x, -t.y, t.x, 0.0);
    let kinv = k.try_inverse().unwrap();
    let f = kinv.transpose() * tx * rot.matrix() * kinv;
    let noise = Normal::new(0.0, sigma).unwrap();
    let (mut a, mut b, mut label) = (Vec::new(), Vec::new(), Vec::new());
    for _ in 0..n_in {
        let x = Vector3::new(rng.gen_range(-2.0..2.0), rng.gen_range(-1.5..1.5), rng.gen_range(4.0..10.0));
        let x2 = rot * x + t;
        let p1 = k * x;
        let p2 = k * x2;
        a.push(Point2::new(p1.x / p1.z + noise.sample(rng), p1.y / p1.z + noise.sample(rng)));
        b.push(Point2::new(p2.x / p2.z + noise.sample(rng), p2.y / p2.z + noise.sample(rng)));
        label.push(true);
    }
    for _ in 0..n_out {
        a.push(Point2::new(rng.gen_range(0.0..640.0), rng.gen_range(0.0..480.0)));
        b.push(Point2::new(rng.gen_range(0.0..640.0), rng.gen_range(0.0..480.0)));
        label.push(false);
    }
    (a, b, label, f)
}

#[test]
fn ransac_synthetic_pair_is_consistent_with_true_f() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (a, b, _, f) = synthetic_pair(&mut rng, 40, 0, 0.0);
    for (p, q) in a.iter().zip(&b) {
        assert!(sampson_distance(&f, p, q) < 1e-9);
    }
}

#[test]
fn ransac_inlier_recall_over_100_seeds() {
    let mut recall = 0.0;
    for seed in 0..100 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (a, b, label, _) = synthetic_pair(&mut rng, 80, 20, 0.3);
        let res = estimate_fundamental_ransac(&a, &b, 1.0, &RansacConfig::default(), &mut rng).unwrap();
        let hit = label.iter().zip(&res.inliers).filter(|(l, i)| **l && **i).count();
        recall += hit as f64 / 80.0;
        for (k, &inl) in res.inliers.iter().enumerate() {
            if inl {
                assert!(sampson_distance(&res.fundamental, &a[k], &b[k]) <= 1.0);
            }
        }
    }
    recall /= 100.0;
    assert!(recall >= 0.95, "recall {recall}");
}

// ---------- Tukey ----------

fn type7(sorted: &[f64], p: f64) -> f64 {
    // definition via the (n-1)p position between order statistics
    let pos = (sorted.len() - 1) as f64 * p;
    let i = pos as usize;
    if i + 1 >= sorted.len() {
        return sorted[sorted.len() - 1];
    }
    sorted[i] * (1.0 - (pos - i as f64)) + sorted[i + 1] * (pos - i as f64)
}

#[test]
fn tukey_hand_examples() {
    let keep = tukey_filter(&[1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 100.0]).unwrap();
    assert_eq!(keep.iter().filter(|k| !**k).count(), 1);
    assert!(!keep[8]);
    assert_eq!(tukey_filter(&[0.0, 0.0, 0.0, 50.0]).unwrap(), vec![true, true, true, false]);
    assert_eq!(quantile_sorted(&[0.0, 0.0, 0.0, 50.0], 0.75), 12.5);
    assert!(tukey_filter(&[4.0; 7]).unwrap().iter().all(|&k| k));
}

#[test]
fn tukey_matches_hand_quartiles_on_small_instances() {
    // every multiset of length <= 4 over [0, 20], plus seeded samples up to length 10
    let mut lists: Vec<Vec<u32>> = Vec::new();
    fn rec(cur: &mut Vec<u32>, start: u32, out: &mut Vec<Vec<u32>>) {
        if !cur.is_empty() {
            out.push(cur.clone());
        }
        if cur.len() == 4 {
            return;
        }
        for v in start..=20 {
            cur.push(v);
            rec(cur, v, out);
            cur.pop();
        }
    }
    rec(&mut Vec::new(), 0, &mut lists);
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    for _ in 0..20_000 {
        let n = rng.gen_range(5..=10);
        lists.push((0..n).map(|_| rng.gen_range(0..=20)).collect());
    }
    for list in lists {
        let vals: Vec<f64> = list.iter().map(|&v| f64::from(v)).collect();
        let mut sorted = vals.clone();
        sorted.sort_by(f64::total_cmp);
        let (q1, q3) = (type7(&sorted, 0.25), type7(&sorted, 0.75));
        let fence = q3 + 1.5 * (q3 - q1);
        let expect: Vec<bool> = vals.iter().map(|&v| v <= fence).collect();
        assert_eq!(tukey_filter(&vals).unwrap(), expect, "{list:?}");
    }
}

// ---------- tracker ----------

#[test]
fn tracker_follows_known_shift_and_respects_spacing() {
    let canvas = block_texture(8, 160, 130);
    let a = shifted(&canvas, 0, 0, 128, 96);
    let b = shifted(&canvas, 3, 2, 128, 96);
    let params = FrontendParams::default();
    let mut st = TrackerState::new(TrackerConfig::default());
    let first = st.step(&a, &params).unwrap();
    assert_eq!(first.stats.n_klt, 0);
    assert!(first.tracks.iter().all(|t| t.age == 1));
    let out = st.step(&b, &params).unwrap();
    let survivors: Vec<_> = out.tracks.iter().filter(|t| t.prev_position.is_some()).collect();
    assert!(!survivors.is_empty());
    for t in &survivors {
        let d = t.position - t.prev_position.unwrap();
        assert!((d.x - 3.0).abs() < 0.1 && (d.y - 2.0).abs() < 0.1);
        assert_eq!(t.age, 2);
    }
    let min_d = params.min_feature_distance();
    for n in out.tracks.iter().filter(|t| t.prev_position.is_none()) {
        for s in &survivors {
            assert!((n.position - s.position).norm() >= min_d);
        }
    }
    let levels = 3u64;
    let max_iters = u64::from(KltConfig::default().max_iters);
    assert!(out.stats.n_klt <= first.tracks.len() as u64 * levels * max_iters);
}
