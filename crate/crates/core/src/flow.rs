//! Dense optical flow fields.

use crate::error::{Error, Result};

/// Per-pixel displacement from one frame to the next, with a validity mask.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowField {
    width: usize,
    height: usize,
    du: Vec<f32>,
    dv: Vec<f32>,
    valid: Vec<bool>,
}

impl FlowField {
    pub fn new(
        width: usize,
        height: usize,
        du: Vec<f32>,
        dv: Vec<f32>,
        valid: Vec<bool>,
    ) -> Result<Self> {
        let n = width * height;
        if du.len() != n || dv.len() != n || valid.len() != n {
            return Err(Error::LengthMismatch(format!(
                "flow buffers ({}, {}, {}) for {width}x{height}",
                du.len(),
                dv.len(),
                valid.len()
            )));
        }
        Ok(Self {
            width,
            height,
            du,
            dv,
            valid,
        })
    }

    pub fn zeros(width: usize, height: usize) -> Self {
        let n = width * height;
        Self {
            width,
            height,
            du: vec![0.0; n],
            dv: vec![0.0; n],
            valid: vec![true; n],
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn du(&self) -> &[f32] {
        &self.du
    }

    pub fn dv(&self) -> &[f32] {
        &self.dv
    }

    pub fn valid(&self) -> &[bool] {
        &self.valid
    }

    #[inline]
    pub fn at(&self, x: usize, y: usize) -> Option<(f64, f64)> {
        let i = y * self.width + x;
        self.valid[i].then(|| (f64::from(self.du[i]), f64::from(self.dv[i])))
    }

    /// Bilinearly interpolated displacement; `None` when any contributing pixel is
    /// invalid or the position lies outside the field.
    pub fn sample(&self, x: f64, y: f64) -> Option<(f64, f64)> {
        if !(x >= 0.0 && y >= 0.0) {
            return None;
        }
        let max_x = (self.width - 1) as f64;
        let max_y = (self.height - 1) as f64;
        if x > max_x || y > max_y {
            return None;
        }
        let x0 = (x.floor() as usize).min(self.width - 1);
        let y0 = (y.floor() as usize).min(self.height - 1);
        let x1 = (x0 + 1).min(self.width - 1);
        let y1 = (y0 + 1).min(self.height - 1);
        let fx = x - x0 as f64;
        let fy = y - y0 as f64;
        let taps = [
            (x0, y0, (1.0 - fx) * (1.0 - fy)),
            (x1, y0, fx * (1.0 - fy)),
            (x0, y1, (1.0 - fx) * fy),
            (x1, y1, fx * fy),
        ];
        let mut u = 0.0;
        let mut v = 0.0;
        for (tx, ty, w) in taps {
            if w == 0.0 {
                continue;
            }
            let (du, dv) = self.at(tx, ty)?;
            u += w * du;
            v += w * dv;
        }
        Some((u, v))
    }
}
