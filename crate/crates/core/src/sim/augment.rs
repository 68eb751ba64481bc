//! Flow-directed motion blur and gamma-space sensor noise.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::FlowField;
use crate::image::GrayImage;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AugmentConfig {
    /// Exposure time in seconds.
    pub exposure_s: f64,
    /// Variance of the additive Gaussian in linear intensity.
    pub noise_variance: f64,
    pub gamma: f64,
    pub enable_blur: bool,
    pub enable_noise: bool,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self {
            exposure_s: 0.0125,
            noise_variance: 0.01,
            gamma: 2.2,
            enable_blur: true,
            enable_noise: true,
        }
    }
}

impl AugmentConfig {
    pub fn disabled() -> Self {
        Self {
            enable_blur: false,
            enable_noise: false,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.exposure_s >= 0.0) {
            return Err(Error::InvalidConfig(format!(
                "exposure {} must be >= 0",
                self.exposure_s
            )));
        }
        if !(self.noise_variance >= 0.0) {
            return Err(Error::InvalidConfig(format!(
                "noise variance {} must be >= 0",
                self.noise_variance
            )));
        }
        if !(self.gamma > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "gamma {} must be > 0",
                self.gamma
            )));
        }
        Ok(())
    }

    /// Fraction of the frame interval the shutter is open, capped at 1.
    pub fn exposure_fraction(&self, fps: f64) -> f64 {
        (self.exposure_s * fps).clamp(0.0, 1.0)
    }
}

/// Averages bilinear samples along `x - s * flow(x) * exposure_fraction`, `s` in `[0, 1]`.
pub fn apply_motion_blur(image: &GrayImage, flow: &FlowField, exposure_fraction: f64) -> GrayImage {
    assert_eq!(
        (image.width(), image.height()),
        (flow.width(), flow.height()),
        "flow and image sizes differ"
    );
    let e = exposure_fraction.clamp(0.0, 1.0);
    if e == 0.0 {
        return image.clone();
    }
    let w = image.width();
    let (du, dv) = (flow.du(), flow.dv());
    GrayImage::from_fn(w, image.height(), |x, y| {
        let i = y * w + x;
        let (fx, fy) = (f64::from(du[i]) * e, f64::from(dv[i]) * e);
        let len = fx.hypot(fy);
        if len == 0.0 {
            return image.get(x, y);
        }
        let k = ((len.ceil() as usize) + 1).max(2);
        let mut acc = 0.0;
        for j in 0..k {
            let s = j as f64 / (k - 1) as f64;
            acc += image.sample_clamped(x as f64 - s * fx, y as f64 - s * fy);
        }
        acc / k as f64
    })
}

/// Noise model for one pixel given a standard-normal draw `z`.
#[inline]
pub fn noisy_intensity(value: f64, z: f64, sigma: f64, gamma: f64) -> f64 {
    let linear = value.powf(gamma) + sigma * z;
    // a negative linear value has no real gamma root; it saturates to black
    linear.max(0.0).powf(1.0 / gamma).clamp(0.0, 1.0)
}

/// `clip((I^gamma + N(0, variance))^(1/gamma), 0, 1)` per pixel, draws in raster order.
pub fn apply_sensor_noise<R: Rng + ?Sized>(
    image: &GrayImage,
    config: &AugmentConfig,
    rng: &mut R,
) -> GrayImage {
    let sigma = config.noise_variance.sqrt();
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let data = image
        .data()
        .iter()
        .map(|&v| noisy_intensity(v, normal.sample(rng), sigma, config.gamma))
        .collect();
    GrayImage::new(image.width(), image.height(), data).expect("intensities clipped to [0,1]")
}
