//! Smooth camera trajectories from sparse waypoints.

use nalgebra::{UnitQuaternion, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::camera::Pose;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Waypoint {
    pub time: f64,
    pub pose: Pose,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub poses: Vec<Pose>,
    pub fps: f64,
}

impl Trajectory {
    pub fn timestamps(&self) -> Vec<f64> {
        (0..self.poses.len()).map(|k| k as f64 / self.fps).collect()
    }
}

/// Natural cubic spline through `(t_i, y_i)`.
#[derive(Debug, Clone)]
struct NaturalSpline {
    t: Vec<f64>,
    y: Vec<f64>,
    /// Second derivatives at the knots.
    m: Vec<f64>,
}

impl NaturalSpline {
    fn new(t: &[f64], y: &[f64]) -> Self {
        let n = t.len();
        let mut m = vec![0.0; n];
        if n > 2 {
            // Thomas algorithm on the interior knots.
            let k = n - 2;
            let mut diag = vec![0.0; k];
            let mut upper = vec![0.0; k];
            let mut rhs = vec![0.0; k];
            for i in 0..k {
                let h0 = t[i + 1] - t[i];
                let h1 = t[i + 2] - t[i + 1];
                diag[i] = 2.0 * (h0 + h1);
                upper[i] = h1;
                rhs[i] = 6.0 * ((y[i + 2] - y[i + 1]) / h1 - (y[i + 1] - y[i]) / h0);
            }
            for i in 1..k {
                let lower = t[i + 1] - t[i];
                let w = lower / diag[i - 1];
                diag[i] -= w * upper[i - 1];
                rhs[i] -= w * rhs[i - 1];
            }
            m[k] = rhs[k - 1] / diag[k - 1];
            for i in (0..k - 1).rev() {
                m[i + 1] = (rhs[i] - upper[i] * m[i + 2]) / diag[i];
            }
        }
        Self {
            t: t.to_vec(),
            y: y.to_vec(),
            m,
        }
    }

    fn eval(&self, x: f64) -> f64 {
        let i = segment(&self.t, x);
        let h = self.t[i + 1] - self.t[i];
        let a = (self.t[i + 1] - x) / h;
        let b = (x - self.t[i]) / h;
        a * self.y[i]
            + b * self.y[i + 1]
            + ((a * a * a - a) * self.m[i] + (b * b * b - b) * self.m[i + 1]) * h * h / 6.0
    }
}

fn segment(knots: &[f64], x: f64) -> usize {
    let last = knots.len() - 2;
    match knots.iter().rposition(|&k| k <= x) {
        Some(i) => i.min(last),
        None => 0,
    }
}

/// Continuous path: natural cubic spline in translation, eased slerp in rotation.
#[derive(Debug, Clone)]
pub struct SplinePath {
    times: Vec<f64>,
    axes: [NaturalSpline; 3],
    rotations: Vec<UnitQuaternion<f64>>,
}

impl SplinePath {
    pub fn new(waypoints: &[Waypoint]) -> Result<Self> {
        if waypoints.len() < 2 {
            return Err(Error::TooFewWaypoints(waypoints.len()));
        }
        let mut order: Vec<usize> = (0..waypoints.len()).collect();
        order.sort_by(|&a, &b| waypoints[a].time.total_cmp(&waypoints[b].time));
        for pair in order.windows(2) {
            if waypoints[pair[0]].time == waypoints[pair[1]].time {
                return Err(Error::DuplicateWaypointTimes(pair[0], pair[1]));
            }
        }
        let sorted: Vec<&Waypoint> = order.iter().map(|&i| &waypoints[i]).collect();
        let times: Vec<f64> = sorted.iter().map(|w| w.time).collect();
        let axis = |k: usize| {
            let ys: Vec<f64> = sorted.iter().map(|w| w.pose.translation[k]).collect();
            NaturalSpline::new(&times, &ys)
        };
        let mut rotations: Vec<UnitQuaternion<f64>> = Vec::with_capacity(sorted.len());
        for w in &sorted {
            let mut q = w.pose.rotation;
            // keep consecutive quaternions in the same hemisphere for shortest-arc slerp
            if let Some(prev) = rotations.last() {
                if prev.coords.dot(&q.coords) < 0.0 {
                    q = UnitQuaternion::new_unchecked(-q.into_inner());
                }
            }
            rotations.push(q);
        }
        Ok(Self {
            axes: [axis(0), axis(1), axis(2)],
            times,
            rotations,
        })
    }

    pub fn start(&self) -> f64 {
        self.times[0]
    }

    pub fn end(&self) -> f64 {
        *self.times.last().unwrap()
    }

    pub fn eval(&self, t: f64) -> Pose {
        let translation = Vector3::new(
            self.axes[0].eval(t),
            self.axes[1].eval(t),
            self.axes[2].eval(t),
        );
        let i = segment(&self.times, t);
        let s = ((t - self.times[i]) / (self.times[i + 1] - self.times[i])).clamp(0.0, 1.0);
        let eased = s * s * (3.0 - 2.0 * s);
        let (q0, q1) = (self.rotations[i], self.rotations[i + 1]);
        let rotation = if eased == 0.0 {
            q0
        } else if eased == 1.0 {
            q1
        } else {
            q0.try_slerp(&q1, eased, 1e-12).unwrap_or(q0)
        };
        Pose::new(rotation, translation)
    }
}

/// Samples `n_frames` poses evenly over the waypoint time span.
pub fn spline_trajectory(waypoints: &[Waypoint], n_frames: usize) -> Result<Trajectory> {
    let path = SplinePath::new(waypoints)?;
    let span = path.end() - path.start();
    let fps = if n_frames > 1 {
        (n_frames - 1) as f64 / span
    } else {
        1.0 / span
    };
    let poses = (0..n_frames)
        .map(|k| {
            let t = if n_frames > 1 {
                path.start() + span * k as f64 / (n_frames - 1) as f64
            } else {
                path.start()
            };
            path.eval(t)
        })
        .collect();
    Ok(Trajectory { poses, fps })
}

/// Random handheld-style motion with time-varying intensity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MotionProfile {
    /// Peak lateral speed in m/s at full intensity.
    pub max_speed: f64,
    /// Peak angular rate in rad/s at full intensity.
    pub max_angular_rate: f64,
    /// Bound on yaw/pitch/roll excursions, radians.
    pub max_angle: f64,
    /// Seconds between spline waypoints.
    pub waypoint_spacing: f64,
    /// Intensity is redrawn every `segment_seconds`.
    pub segment_seconds: f64,
    pub min_intensity: f64,
    pub max_intensity: f64,
}

impl Default for MotionProfile {
    fn default() -> Self {
        Self {
            max_speed: 1.5,
            max_angular_rate: 2.5,
            max_angle: 0.3,
            waypoint_spacing: 0.15,
            segment_seconds: 1.2,
            min_intensity: 0.05,
            max_intensity: 1.0,
        }
    }
}

/// Random smooth trajectory of `n_frames` frames at `fps`.
pub fn random_trajectory(
    seed: u64,
    n_frames: usize,
    fps: f64,
    motion: &MotionProfile,
) -> Trajectory {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let duration = (n_frames.max(2) - 1) as f64 / fps;
    let n_way = ((duration / motion.waypoint_spacing).ceil() as usize).max(1) + 1;
    let dt = duration / (n_way - 1) as f64;

    let mut pos = Vector3::new(
        rng.gen_range(-0.3..0.3),
        rng.gen_range(-0.2..0.2),
        rng.gen_range(-0.3..0.3),
    );
    let mut ang = [0.0f64; 3];
    let mut vel_dir = Vector3::new(
        rng.gen_range(-1.0..1.0),
        rng.gen_range(-1.0..1.0),
        rng.gen_range(-0.3..0.3),
    );
    let mut phases = [
        rng.gen_range(0.0..6.28),
        rng.gen_range(0.0..6.28),
        rng.gen_range(0.0..6.28),
    ];
    let freqs = [
        rng.gen_range(0.8..2.0),
        rng.gen_range(0.8..2.0),
        rng.gen_range(0.5..1.2),
    ];
    let mut intensity = rng.gen_range(motion.min_intensity..=motion.max_intensity);
    let mut next_switch = motion.segment_seconds * rng.gen_range(0.5..1.5);

    let mut waypoints = Vec::with_capacity(n_way);
    for k in 0..n_way {
        let t = k as f64 * dt;
        if t >= next_switch {
            intensity = rng.gen_range(motion.min_intensity..=motion.max_intensity);
            next_switch += motion.segment_seconds * rng.gen_range(0.5..1.5);
        }
        let rotation = UnitQuaternion::from_euler_angles(ang[2], ang[0], ang[1]);
        waypoints.push(Waypoint {
            time: t,
            pose: Pose::new(rotation, pos),
        });
        // lateral drift with mean reversion toward the origin
        vel_dir += Vector3::new(
            rng.gen_range(-0.6..0.6),
            rng.gen_range(-0.6..0.6),
            rng.gen_range(-0.2..0.2),
        );
        vel_dir -= pos * 0.8;
        let speed = motion.max_speed * intensity;
        if vel_dir.norm() > 1e-9 {
            pos += vel_dir.normalize() * speed * dt;
        }
        pos.x = pos.x.clamp(-1.2, 1.2);
        pos.y = pos.y.clamp(-0.8, 0.8);
        pos.z = pos.z.clamp(-0.6, 0.6);
        for a in 0..3 {
            phases[a] += 2.0 * std::f64::consts::PI * freqs[a] * dt;
            let rate = motion.max_angular_rate
                * intensity
                * phases[a].sin()
                * if a == 2 { 0.3 } else { 1.0 };
            ang[a] =
                (ang[a] + rate * dt - 0.5 * ang[a] * dt).clamp(-motion.max_angle, motion.max_angle);
        }
    }
    let mut traj =
        spline_trajectory(&waypoints, n_frames.max(2)).expect("waypoint times are distinct");
    traj.poses.truncate(n_frames);
    traj.fps = fps;
    traj
}
