use advo_core::camera::{PinholeCamera, Pose};
use advo_core::flow::FlowField;
use advo_core::image::GrayImage;
use advo_core::sim::{
    apply_motion_blur, apply_sensor_noise, generate_scene, gt_flow, random_trajectory, render_frame, AugmentConfig,
    MotionProfile, TextureSpec,
};
use nalgebra::{UnitQuaternion, Vector3};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

fn camera() -> PinholeCamera {
    PinholeCamera::centered(128, 96, 110.0)
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    v[v.len() / 2]
}

#[test]
fn flow_is_photometrically_consistent_on_20_scenes() {
    let cam = camera();
    let mut errs = Vec::new();
    for seed in 0..20u64 {
        let scene = generate_scene(seed, TextureSpec { seed, ..TextureSpec::default() }, 6);
        let traj = random_trajectory(seed, 8, 30.0, &MotionProfile::default());
        let (a, b) = (traj.poses[3], traj.poses[4]);
        let (i0, _) = render_frame(&scene, &a, &cam);
        let (i1, _) = render_frame(&scene, &b, &cam);
        let flow = gt_flow(&scene, &a, &b, &cam);
        let before = errs.len();
        for y in 0..cam.height {
            for x in 0..cam.width {
                if let Some((u, v)) = flow.at(x, y) {
                    if let Ok(s) = i1.bilinear_sample(x as f64 + u, y as f64 + v) {
                        errs.push((i0.get(x, y) - s).abs());
                    }
                }
            }
        }
        assert!(errs.len() - before > cam.width * cam.height / 2, "scene {seed}");
    }
    let m = median(errs);
    assert!(m < 0.02, "median {m}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn rotation_only_flow_is_the_homography(
        seed in 0u64..1000,
        rx in -0.03f64..0.03, ry in -0.03f64..0.03, rz in -0.03f64..0.03,
        tx in -0.3f64..0.3, ty in -0.3f64..0.3,
    ) {
        let cam = camera();
        let scene = generate_scene(seed, TextureSpec::default(), 5);
        let t = Vector3::new(tx, ty, 0.0);
        let r0 = UnitQuaternion::from_euler_angles(0.01, -0.02, 0.0);
        let r1 = r0 * UnitQuaternion::from_euler_angles(rx, ry, rz);
        let flow = gt_flow(&scene, &Pose::new(r0, t), &Pose::new(r1, t), &cam);
        let k = cam.matrix();
        let h = k * (r1.inverse() * r0).to_rotation_matrix().matrix() * k.try_inverse().unwrap();
        let mut checked = 0;
        for y in 0..cam.height {
            for x in 0..cam.width {
                let Some((u, v)) = flow.at(x, y) else { continue };
                let p = h * Vector3::new(x as f64, y as f64, 1.0);
                let (ex, ey) = (p.x / p.z - x as f64, p.y / p.z - y as f64);
                prop_assert!((u - ex).abs() < 1e-6 && (v - ey).abs() < 1e-6, "({u}, {v}) vs ({ex}, {ey})");
                checked += 1;
            }
        }
        prop_assert!(checked > 0);
    }
}

#[test]
fn sensor_noise_linear_variance_on_mid_gray() {
    let img = GrayImage::filled(400, 250, 0.5);
    let cfg = AugmentConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let out = apply_sensor_noise(&img, &cfg, &mut rng);
    let lin: Vec<f64> = out.data().iter().map(|v| v.powf(cfg.gamma)).collect();
    let n = lin.len() as f64;
    let mean = lin.iter().sum::<f64>() / n;
    let var = lin.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    assert!((0.009..=0.011).contains(&var), "variance {var}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn sensor_noise_matches_scalar_reference(seed in any::<u64>(), var in 0.0f64..0.05, gamma in 1.0f64..3.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let img = GrayImage::from_fn(17, 11, |_, _| rng.gen_range(0.0..=1.0));
        let cfg = AugmentConfig { noise_variance: var, gamma, ..AugmentConfig::default() };
        let out = apply_sensor_noise(&img, &cfg, &mut ChaCha8Rng::seed_from_u64(seed ^ 1));
        let mut draws = ChaCha8Rng::seed_from_u64(seed ^ 1);
        let normal = Normal::new(0.0, 1.0).unwrap();
        for (&v, &o) in img.data().iter().zip(out.data()) {
            let z: f64 = normal.sample(&mut draws);
            let lin = v.powf(gamma) + var.sqrt() * z;
            let expect = if lin <= 0.0 { 0.0 } else { lin.powf(1.0 / gamma).min(1.0) };
            prop_assert!((o - expect).abs() < 1e-12);
            prop_assert!((0.0..=1.0).contains(&o));
        }
    }

    #[test]
    fn blur_preserves_interior_mean_under_constant_flow(
        seed in any::<u64>(), fx in -6.0f32..6.0, fy in -6.0f32..6.0, e in 0.0f64..=1.0,
    ) {
        // texture periodic over the 64-px interior, so shifted windows see the same mean
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let waves: Vec<(f64, f64, f64)> = (0..6)
            .map(|_| (f64::from(rng.gen_range(1u8..5)), f64::from(rng.gen_range(1u8..5)), rng.gen_range(0.0..6.3)))
            .collect();
        let tau = std::f64::consts::TAU / 64.0;
        let img = GrayImage::from_fn(96, 96, |x, y| {
            let s: f64 = waves.iter().map(|&(a, b, p)| (a * tau * x as f64 + b * tau * y as f64 + p).sin()).sum();
            0.5 + 0.05 * s
        });
        let n = 96 * 96;
        let flow = FlowField::new(96, 96, vec![fx; n], vec![fy; n], vec![true; n]).unwrap();
        let out = apply_motion_blur(&img, &flow, e);
        let mean = |im: &GrayImage| {
            let mut s = 0.0;
            for y in 16..80 {
                for x in 16..80 {
                    s += im.get(x, y);
                }
            }
            s / 4096.0
        };
        prop_assert!((mean(&out) - mean(&img)).abs() < 1e-3);
    }
}
