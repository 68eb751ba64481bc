//! Textured planar scenes, ray-cast rendering and exact ground-truth flow.

use nalgebra::{Point2, Unit, UnitQuaternion, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::camera::{PinholeCamera, Pose};
use crate::flow::FlowField;
use crate::image::GrayImage;
use crate::sim::texture::TextureSpec;

/// Depth tolerance of the occlusion test, in meters.
pub const OCCLUSION_TOLERANCE: f64 = 0.01;

/// Round-off allowance when testing whether a reprojection stays in frame, pixels.
const BOUNDS_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct Plane {
    /// Unit normal; the plane is `normal . X = offset`.
    pub normal: Vector3<f64>,
    pub offset: f64,
    /// Texture origin and in-plane axes.
    pub origin: Vector3<f64>,
    pub axis_u: Vector3<f64>,
    pub axis_v: Vector3<f64>,
    /// Half extents along the in-plane axes; `None` for an unbounded plane.
    pub half_extent: Option<(f64, f64)>,
    pub texture: TextureSpec,
}

impl Plane {
    pub fn new(
        origin: Vector3<f64>,
        normal: Unit<Vector3<f64>>,
        half_extent: Option<(f64, f64)>,
        texture: TextureSpec,
    ) -> Self {
        let n = normal.into_inner();
        let helper = if n.x.abs() < 0.9 {
            Vector3::x()
        } else {
            Vector3::y()
        };
        let axis_u = (helper - n * n.dot(&helper)).normalize();
        let axis_v = n.cross(&axis_u);
        Self {
            normal: n,
            offset: n.dot(&origin),
            origin,
            axis_u,
            axis_v,
            half_extent,
            texture,
        }
    }

    /// Ray parameter of the hit, if the ray meets the (bounded) plane in front of its origin.
    #[inline]
    pub fn intersect(&self, origin: &Vector3<f64>, dir: &Vector3<f64>) -> Option<f64> {
        let denom = self.normal.dot(dir);
        if denom.abs() < 1e-12 {
            return None;
        }
        let s = (self.offset - self.normal.dot(origin)) / denom;
        if !(s > 1e-9) {
            return None;
        }
        if let Some((hu, hv)) = self.half_extent {
            let rel = origin + dir * s - self.origin;
            if rel.dot(&self.axis_u).abs() > hu || rel.dot(&self.axis_v).abs() > hv {
                return None;
            }
        }
        Some(s)
    }

    #[inline]
    pub fn shade(&self, point: &Vector3<f64>) -> f64 {
        let rel = point - self.origin;
        self.texture
            .intensity(rel.dot(&self.axis_u), rel.dot(&self.axis_v))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    /// Index 0 is the unbounded background plane.
    pub planes: Vec<Plane>,
    pub background_depth: f64,
    pub seed: u64,
}

/// Per-pixel depth along the optical axis; `f64::INFINITY` where nothing was hit.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthMap {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f64>,
}

impl DepthMap {
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }
}

pub const DEFAULT_BACKGROUND_DEPTH: f64 = 8.0;

/// One unbounded background plane plus `num_planes - 1` random foreground patches.
pub fn generate_scene(seed: u64, texture: TextureSpec, num_planes: usize) -> Scene {
    assert!(
        num_planes >= 1,
        "a scene needs at least the background plane"
    );
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let tex_for = |k: u64, rng: &mut ChaCha8Rng| TextureSpec {
        seed: texture.seed ^ seed.wrapping_mul(0x9E37_79B9).wrapping_add(k),
        base_frequency: texture.base_frequency * rng.gen_range(0.75..1.33),
        ..texture
    };
    let background_depth = DEFAULT_BACKGROUND_DEPTH;
    let mut planes = vec![Plane::new(
        Vector3::new(0.0, 0.0, background_depth),
        Vector3::z_axis(),
        None,
        tex_for(0, &mut rng),
    )];
    for k in 1..num_planes {
        let center = Vector3::new(
            rng.gen_range(-2.2..2.2),
            rng.gen_range(-1.6..1.6),
            rng.gen_range(2.5..5.5),
        );
        let tilt = UnitQuaternion::from_euler_angles(
            rng.gen_range(-0.5..0.5),
            rng.gen_range(-0.5..0.5),
            rng.gen_range(-3.14..3.14),
        );
        let normal = Unit::new_normalize(tilt * Vector3::z());
        let half = (rng.gen_range(0.4..1.2), rng.gen_range(0.4..1.2));
        planes.push(Plane::new(
            center,
            normal,
            Some(half),
            tex_for(k as u64, &mut rng),
        ));
    }
    Scene {
        planes,
        background_depth,
        seed,
    }
}

impl Scene {
    /// Nearest surface hit: `(ray parameter, plane index)`.
    #[inline]
    pub fn cast(&self, origin: &Vector3<f64>, dir: &Vector3<f64>) -> Option<(f64, usize)> {
        let mut best: Option<(f64, usize)> = None;
        for (i, plane) in self.planes.iter().enumerate() {
            if let Some(s) = plane.intersect(origin, dir) {
                if best.map_or(true, |b| s < b.0) {
                    best = Some((s, i));
                }
            }
        }
        best
    }

    /// Depth along the optical axis of the surface seen at subpixel `(u, v)`.
    pub fn depth_at(&self, pose: &Pose, camera: &PinholeCamera, u: f64, v: f64) -> Option<f64> {
        let dir = pose.rotation * camera.unproject_ray(u, v);
        self.cast(&pose.translation, &dir).map(|(s, _)| s)
    }
}

/// Ray-casts every pixel; intensity is the texture at the nearest hit.
pub fn render_frame(scene: &Scene, pose: &Pose, camera: &PinholeCamera) -> (GrayImage, DepthMap) {
    let (w, h) = (camera.width, camera.height);
    let mut depth = Vec::with_capacity(w * h);
    let img = GrayImage::from_fn(w, h, |x, y| {
        // ray direction has unit z in the camera frame, so the ray parameter is depth
        let dir = pose.rotation * camera.unproject_ray(x as f64, y as f64);
        match scene.cast(&pose.translation, &dir) {
            Some((s, i)) => {
                depth.push(s);
                scene.planes[i].shade(&(pose.translation + dir * s))
            }
            None => {
                depth.push(f64::INFINITY);
                0.5
            }
        }
    });
    (
        img,
        DepthMap {
            width: w,
            height: h,
            data: depth,
        },
    )
}

/// Where pixel `(u, v)` with camera depth `depth` at `pose_t` lands in `pose_t1`,
/// with its depth there.
pub fn reproject(
    pose_t: &Pose,
    pose_t1: &Pose,
    camera: &PinholeCamera,
    u: f64,
    v: f64,
    depth: f64,
) -> (Point2<f64>, f64) {
    let world = pose_t.cam_to_world(&(camera.unproject_ray(u, v) * depth));
    let cam1 = pose_t1.world_to_cam(&world);
    let uv = camera.project(&cam1);
    (Point2::new(uv.x, uv.y), cam1.z)
}

/// Exact forward flow from `pose_t` to `pose_t1`.
///
/// Invalid where the surface point leaves frame `t+1`, falls behind the camera,
/// or is hidden by a nearer surface (depth differs by more than 1 cm).
pub fn gt_flow(scene: &Scene, pose_t: &Pose, pose_t1: &Pose, camera: &PinholeCamera) -> FlowField {
    let (w, h) = (camera.width, camera.height);
    let n = w * h;
    let mut du = Vec::with_capacity(n);
    let mut dv = Vec::with_capacity(n);
    let mut valid = Vec::with_capacity(n);
    let (max_x, max_y) = ((w - 1) as f64, (h - 1) as f64);
    for y in 0..h {
        for x in 0..w {
            let (u, v) = (x as f64, y as f64);
            let Some(depth) = scene.depth_at(pose_t, camera, u, v) else {
                du.push(0.0);
                dv.push(0.0);
                valid.push(false);
                continue;
            };
            let (p1, z1) = reproject(pose_t, pose_t1, camera, u, v, depth);
            let (fu, fv) = (p1.x - u, p1.y - v);
            du.push(fu as f32);
            dv.push(fv as f32);
            let mut ok = z1 > 1e-6
                && fu.is_finite()
                && fv.is_finite()
                && (-BOUNDS_SLACK..=max_x + BOUNDS_SLACK).contains(&p1.x)
                && (-BOUNDS_SLACK..=max_y + BOUNDS_SLACK).contains(&p1.y);
            if ok {
                ok = scene
                    .depth_at(pose_t1, camera, p1.x, p1.y)
                    .is_some_and(|d1| (d1 - z1).abs() <= OCCLUSION_TOLERANCE);
            }
            valid.push(ok);
        }
    }
    FlowField::new(w, h, du, dv, valid).expect("buffers sized to the camera")
}
