//! Grayscale rasters and image pyramids.

use crate::error::{Error, Result};

/// Row-major grayscale image with intensities normalized to `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidImage(format!(
                "zero-sized image {width}x{height}"
            )));
        }
        if data.len() != width * height {
            return Err(Error::InvalidImage(format!(
                "{} samples for a {width}x{height} image",
                data.len()
            )));
        }
        if let Some(bad) = data.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::InvalidImage(format!(
                "intensity {bad} outside [0,1]"
            )));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn filled(width: usize, height: usize, value: f64) -> Self {
        assert!(
            (0.0..=1.0).contains(&value),
            "intensity {value} outside [0,1]"
        );
        Self {
            width,
            height,
            data: vec![value; width * height],
        }
    }

    /// Builds an image from a per-pixel function; results are clamped to `[0, 1]`.
    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y).clamp(0.0, 1.0));
            }
        }
        Self {
            width,
            height,
            data,
        }
    }

    /// Converts 8-bit samples by dividing by 255.
    pub fn from_u8(width: usize, height: usize, bytes: &[u8]) -> Result<Self> {
        Self::new(
            width,
            height,
            bytes.iter().map(|&b| f64::from(b) / 255.0).collect(),
        )
    }

    /// Quantizes to 8 bits with round-to-nearest.
    pub fn to_u8(&self) -> Vec<u8> {
        self.data
            .iter()
            .map(|&v| (v * 255.0).round().clamp(0.0, 255.0) as u8)
            .collect()
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, value: f64) {
        self.data[y * self.width + x] = value.clamp(0.0, 1.0);
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().sum::<f64>() / self.data.len() as f64
    }

    /// Bilinear interpolation at a subpixel location.
    ///
    /// Valid for `0 <= x < width - 1` and `0 <= y < height - 1`.
    pub fn bilinear_sample(&self, x: f64, y: f64) -> Result<f64> {
        let max_x = (self.width - 1) as f64;
        let max_y = (self.height - 1) as f64;
        if !(x >= 0.0 && x < max_x && y >= 0.0 && y < max_y) {
            return Err(Error::OutOfBounds { x, y });
        }
        Ok(self.bilinear_unchecked(x, y))
    }

    /// Bilinear interpolation with coordinates clamped to the image border.
    #[inline]
    pub fn sample_clamped(&self, x: f64, y: f64) -> f64 {
        let x = x.clamp(0.0, (self.width - 1) as f64);
        let y = y.clamp(0.0, (self.height - 1) as f64);
        self.bilinear_unchecked(x, y)
    }

    #[inline]
    fn bilinear_unchecked(&self, x: f64, y: f64) -> f64 {
        // callers pass non-negative coordinates, so truncation is floor
        let x0 = (x as usize).min(self.width - 1);
        let y0 = (y as usize).min(self.height - 1);
        let x1 = (x0 + 1).min(self.width - 1);
        let y1 = (y0 + 1).min(self.height - 1);
        let fx = x - x0 as f64;
        let fy = y - y0 as f64;
        let row0 = y0 * self.width;
        let row1 = y1 * self.width;
        (1.0 - fx) * (1.0 - fy) * self.data[row0 + x0]
            + fx * (1.0 - fy) * self.data[row0 + x1]
            + (1.0 - fx) * fy * self.data[row1 + x0]
            + fx * fy * self.data[row1 + x1]
    }

    /// 2x2 box filter followed by 2x decimation; odd trailing rows/columns are dropped.
    pub fn downsample(&self) -> GrayImage {
        let w = self.width / 2;
        let h = self.height / 2;
        let mut data = Vec::with_capacity(w * h);
        for y in 0..h {
            let r0 = 2 * y * self.width;
            let r1 = r0 + self.width;
            for x in 0..w {
                let a = self.data[r0 + 2 * x];
                let b = self.data[r0 + 2 * x + 1];
                let c = self.data[r1 + 2 * x];
                let d = self.data[r1 + 2 * x + 1];
                data.push(((a + b) + (c + d)) * 0.25);
            }
        }
        GrayImage {
            width: w,
            height: h,
            data,
        }
    }

    /// Area-average resize to `size x size` (used for encoder thumbnails).
    pub fn resize_area(&self, out_w: usize, out_h: usize) -> GrayImage {
        let sx = self.width as f64 / out_w as f64;
        let sy = self.height as f64 / out_h as f64;
        let mut data = Vec::with_capacity(out_w * out_h);
        for oy in 0..out_h {
            let y_lo = oy as f64 * sy;
            let y_hi = y_lo + sy;
            for ox in 0..out_w {
                let x_lo = ox as f64 * sx;
                let x_hi = x_lo + sx;
                let mut acc = 0.0;
                let mut area = 0.0;
                let mut y = y_lo.floor() as usize;
                while (y as f64) < y_hi && y < self.height {
                    let wy = (y_hi.min(y as f64 + 1.0) - y_lo.max(y as f64)).max(0.0);
                    let mut x = x_lo.floor() as usize;
                    while (x as f64) < x_hi && x < self.width {
                        let wx = (x_hi.min(x as f64 + 1.0) - x_lo.max(x as f64)).max(0.0);
                        acc += wx * wy * self.get(x, y);
                        area += wx * wy;
                        x += 1;
                    }
                    y += 1;
                }
                data.push(if area > 0.0 {
                    (acc / area).clamp(0.0, 1.0)
                } else {
                    0.0
                });
            }
        }
        GrayImage {
            width: out_w,
            height: out_h,
            data,
        }
    }
}

/// Coarse-to-fine stack; level 0 is full resolution.
#[derive(Debug, Clone, PartialEq)]
pub struct ImagePyramid {
    levels: Vec<GrayImage>,
}

pub const DEFAULT_PYRAMID_LEVELS: usize = 3;
const MIN_LEVEL_DIM: usize = 8;

impl ImagePyramid {
    pub fn build(image: GrayImage, num_levels: usize) -> Result<Self> {
        if num_levels == 0 {
            return Err(Error::InvalidConfig(
                "pyramid needs at least one level".into(),
            ));
        }
        let mut levels = Vec::with_capacity(num_levels);
        levels.push(image);
        for level in 1..num_levels {
            let next = levels[level - 1].downsample();
            levels.push(next);
        }
        for (level, img) in levels.iter().enumerate() {
            if img.width() < MIN_LEVEL_DIM || img.height() < MIN_LEVEL_DIM {
                return Err(Error::ImageTooSmall {
                    level,
                    width: img.width(),
                    height: img.height(),
                });
            }
        }
        Ok(Self { levels })
    }

    pub fn levels(&self) -> &[GrayImage] {
        &self.levels
    }

    pub fn num_levels(&self) -> usize {
        self.levels.len()
    }

    pub fn level(&self, k: usize) -> &GrayImage {
        &self.levels[k]
    }

    pub fn base(&self) -> &GrayImage {
        &self.levels[0]
    }
}
