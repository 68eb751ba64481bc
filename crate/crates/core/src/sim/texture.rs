//! Multi-octave value noise used to texture scene planes.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TextureSpec {
    pub octaves: u32,
    /// Lowest-octave frequency in cycles per meter.
    pub base_frequency: f64,
    /// Amplitude of the texture around mid gray, in `[0, 1]`.
    pub contrast: f64,
    pub seed: u64,
}

impl Default for TextureSpec {
    fn default() -> Self {
        Self {
            octaves: 4,
            base_frequency: 3.0,
            contrast: 0.8,
            seed: 0,
        }
    }
}

impl TextureSpec {
    pub fn validate(&self) -> Result<()> {
        if self.octaves == 0 {
            return Err(Error::InvalidConfig(
                "texture needs at least one octave".into(),
            ));
        }
        if !(0.0..=1.0).contains(&self.contrast) {
            return Err(Error::InvalidConfig(format!(
                "texture contrast {} outside [0,1]",
                self.contrast
            )));
        }
        if !(self.base_frequency > 0.0) {
            return Err(Error::InvalidConfig(
                "texture frequency must be positive".into(),
            ));
        }
        Ok(())
    }

    /// Intensity at plane coordinates `(u, v)` in meters.
    pub fn intensity(&self, u: f64, v: f64) -> f64 {
        if self.contrast == 0.0 {
            return 0.5;
        }
        let mut total = 0.0;
        let mut norm = 0.0;
        let mut amp = 1.0;
        let mut freq = self.base_frequency;
        for octave in 0..self.octaves {
            total += amp * (value_noise(u * freq, v * freq, self.seed, octave) - 0.5);
            norm += amp;
            amp *= 0.5;
            freq *= 2.0;
        }
        (0.5 + 2.0 * self.contrast * total / norm).clamp(0.0, 1.0)
    }
}

#[inline]
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[inline]
fn lattice(ix: i64, iy: i64, seed: u64, octave: u32) -> f64 {
    let h = splitmix64(
        seed ^ splitmix64(u64::from(octave) ^ splitmix64((ix as u64) ^ splitmix64(iy as u64))),
    );
    (h >> 11) as f64 / (1u64 << 53) as f64
}

#[inline]
fn fade(t: f64) -> f64 {
    t * t * t * (t * (t * 6.0 - 15.0) + 10.0)
}

/// Smoothly interpolated lattice noise in `[0, 1)`.
pub fn value_noise(x: f64, y: f64, seed: u64, octave: u32) -> f64 {
    let x0 = x.floor();
    let y0 = y.floor();
    let (ix, iy) = (x0 as i64, y0 as i64);
    let sx = fade(x - x0);
    let sy = fade(y - y0);
    let a = lattice(ix, iy, seed, octave);
    let b = lattice(ix + 1, iy, seed, octave);
    let c = lattice(ix, iy + 1, seed, octave);
    let d = lattice(ix + 1, iy + 1, seed, octave);
    let top = a + sx * (b - a);
    let bottom = c + sx * (d - c);
    top + sy * (bottom - top)
}
