//! Small strided CNN that compresses a 64x64 thumbnail into a latent vector.

use ndarray::{Array1, Array2, Array3, Array4, Axis};
use rand::Rng;
use rand_distr::{Distribution, Uniform};
use serde::{Deserialize, Serialize};

use crate::image::GrayImage;
use crate::policy::nn::Linear;

pub const THUMBNAIL_SIZE: usize = 64;
pub const LATENT_DIM: usize = 32;
pub const CONV_CHANNELS: [usize; 3] = [8, 16, 16];

/// 3x3 convolution with stride 2 and zero padding 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Conv2d {
    /// `(out, in, 3, 3)`
    pub weight: Array4<f64>,
    pub bias: Array1<f64>,
}

impl Conv2d {
    pub fn zeros(input: usize, output: usize) -> Self {
        Self {
            weight: Array4::zeros((output, input, 3, 3)),
            bias: Array1::zeros(output),
        }
    }

    pub fn random<R: Rng + ?Sized>(input: usize, output: usize, rng: &mut R) -> Self {
        let bound = 1.0 / ((input * 9) as f64).sqrt();
        let dist = Uniform::new_inclusive(-bound, bound);
        Self {
            weight: Array4::from_shape_fn((output, input, 3, 3), |_| dist.sample(rng)),
            bias: Array1::zeros(output),
        }
    }

    fn output_size(n: usize) -> usize {
        n.div_ceil(2)
    }

    /// Pre-activation output for input `(c, h, w)`.
    pub fn forward(&self, input: &Array3<f64>) -> Array3<f64> {
        let (ci, h, w) = input.dim();
        let co = self.weight.dim().0;
        let (oh, ow) = (Self::output_size(h), Self::output_size(w));
        let mut out = Array3::zeros((co, oh, ow));
        for o in 0..co {
            for y in 0..oh {
                for x in 0..ow {
                    let mut acc = self.bias[o];
                    for i in 0..ci {
                        for ky in 0..3 {
                            let iy = (2 * y + ky) as isize - 1;
                            if iy < 0 || iy >= h as isize {
                                continue;
                            }
                            for kx in 0..3 {
                                let ix = (2 * x + kx) as isize - 1;
                                if ix < 0 || ix >= w as isize {
                                    continue;
                                }
                                acc += self.weight[[o, i, ky, kx]] * input[[i, iy as usize, ix as usize]];
                            }
                        }
                    }
                    out[[o, y, x]] = acc;
                }
            }
        }
        out
    }

    /// Accumulates parameter gradients into `grad` and returns `dL/d(input)`.
    pub fn backward(&self, input: &Array3<f64>, d_out: &Array3<f64>, grad: &mut Conv2d) -> Array3<f64> {
        let (ci, h, w) = input.dim();
        let (co, oh, ow) = d_out.dim();
        let mut d_in = Array3::zeros((ci, h, w));
        for o in 0..co {
            for y in 0..oh {
                for x in 0..ow {
                    let g = d_out[[o, y, x]];
                    if g == 0.0 {
                        continue;
                    }
                    grad.bias[o] += g;
                    for i in 0..ci {
                        for ky in 0..3 {
                            let iy = (2 * y + ky) as isize - 1;
                            if iy < 0 || iy >= h as isize {
                                continue;
                            }
                            for kx in 0..3 {
                                let ix = (2 * x + kx) as isize - 1;
                                if ix < 0 || ix >= w as isize {
                                    continue;
                                }
                                let (iy, ix) = (iy as usize, ix as usize);
                                grad.weight[[o, i, ky, kx]] += g * input[[i, iy, ix]];
                                d_in[[i, iy, ix]] += g * self.weight[[o, i, ky, kx]];
                            }
                        }
                    }
                }
            }
        }
        d_in
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvEncoder {
    pub convs: Vec<Conv2d>,
    pub projection: Linear,
}

/// Intermediate tanh outputs kept for the backward pass.
#[derive(Debug, Clone)]
pub struct EncoderCache {
    /// Thumbnail followed by each convolution's activation.
    pub maps: Vec<Array3<f64>>,
    pub latent: Array1<f64>,
}

fn flat_dim() -> usize {
    let mut n = THUMBNAIL_SIZE;
    for _ in CONV_CHANNELS {
        n = n.div_ceil(2);
    }
    CONV_CHANNELS[CONV_CHANNELS.len() - 1] * n * n
}

/// Area-resampled `THUMBNAIL_SIZE` square thumbnail as a one-channel tensor.
pub fn thumbnail(image: &GrayImage) -> Array3<f64> {
    let t = image.resize_area(THUMBNAIL_SIZE, THUMBNAIL_SIZE);
    Array3::from_shape_vec((1, THUMBNAIL_SIZE, THUMBNAIL_SIZE), t.data().to_vec())
        .expect("thumbnail buffer size")
}

impl ConvEncoder {
    pub fn new<R: Rng + ?Sized>(rng: &mut R) -> Self {
        let mut convs = Vec::new();
        let mut c_in = 1;
        for &c in &CONV_CHANNELS {
            convs.push(Conv2d::random(c_in, c, rng));
            c_in = c;
        }
        Self {
            convs,
            projection: Linear::random(flat_dim(), LATENT_DIM, 1.0, rng),
        }
    }

    pub fn zeros() -> Self {
        let mut convs = Vec::new();
        let mut c_in = 1;
        for &c in &CONV_CHANNELS {
            convs.push(Conv2d::zeros(c_in, c));
            c_in = c;
        }
        Self {
            convs,
            projection: Linear::zeros(flat_dim(), LATENT_DIM),
        }
    }

    pub fn latent_dim(&self) -> usize {
        self.projection.output_dim()
    }

    pub fn forward_cached(&self, thumb: Array3<f64>) -> EncoderCache {
        let mut maps = vec![thumb];
        for conv in &self.convs {
            let mut z = conv.forward(maps.last().unwrap());
            z.mapv_inplace(f64::tanh);
            maps.push(z);
        }
        let flat = maps.last().unwrap().iter().copied().collect::<Array1<f64>>();
        let mut latent = self.projection.weight.dot(&flat);
        latent += &self.projection.bias;
        latent.mapv_inplace(f64::tanh);
        EncoderCache { maps, latent }
    }

    pub fn encode(&self, image: &GrayImage) -> Array1<f64> {
        self.forward_cached(thumbnail(image)).latent
    }

    /// Accumulates parameter gradients for `d_latent = dL/d(latent)` into `grad`.
    pub fn backward(&self, cache: &EncoderCache, d_latent: &Array1<f64>, grad: &mut ConvEncoder) {
        let dz = d_latent * &cache.latent.mapv(|a| 1.0 - a * a);
        let last = cache.maps.last().unwrap();
        let flat = last.iter().copied().collect::<Array1<f64>>();
        let dz2 = dz.view().insert_axis(Axis(1));
        grad.projection.weight += &dz2.dot(&flat.view().insert_axis(Axis(0)));
        grad.projection.bias += &dz;
        let d_flat = self.projection.weight.t().dot(&dz);
        let mut d_map = Array3::from_shape_vec(last.dim(), d_flat.to_vec()).expect("flat size");
        for (k, conv) in self.convs.iter().enumerate().rev() {
            let out = &cache.maps[k + 1];
            ndarray::Zip::from(&mut d_map).and(out).for_each(|d, &a| *d *= 1.0 - a * a);
            d_map = conv.backward(&cache.maps[k], &d_map, &mut grad.convs[k]);
        }
    }

    pub fn params_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = Vec::new();
        for c in &mut self.convs {
            out.push(c.weight.as_slice_mut().expect("standard layout"));
            out.push(c.bias.as_slice_mut().expect("standard layout"));
        }
        out.push(self.projection.weight.as_slice_mut().expect("standard layout"));
        out.push(self.projection.bias.as_slice_mut().expect("standard layout"));
        out
    }

    pub fn params(&self) -> Vec<&[f64]> {
        let mut out = Vec::new();
        for c in &self.convs {
            out.push(c.weight.as_slice().expect("standard layout"));
            out.push(c.bias.as_slice().expect("standard layout"));
        }
        out.push(self.projection.weight.as_slice().expect("standard layout"));
        out.push(self.projection.bias.as_slice().expect("standard layout"));
        out
    }
}

/// Reference 2-D correlation of a single channel, used to cross-check `Conv2d`.
pub fn direct_conv_single(input: &Array2<f64>, kernel: &[[f64; 3]; 3], bias: f64) -> Array2<f64> {
    let (h, w) = input.dim();
    let (oh, ow) = (h.div_ceil(2), w.div_ceil(2));
    Array2::from_shape_fn((oh, ow), |(y, x)| {
        let mut acc = bias;
        for (ky, row) in kernel.iter().enumerate() {
            for (kx, &k) in row.iter().enumerate() {
                let iy = (2 * y + ky) as isize - 1;
                let ix = (2 * x + kx) as isize - 1;
                if iy >= 0 && ix >= 0 && (iy as usize) < h && (ix as usize) < w {
                    acc += k * input[[iy as usize, ix as usize]];
                }
            }
        }
        acc
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_encoder_gives_zero_latent() {
        let img = GrayImage::from_fn(80, 60, |x, y| ((x + y) % 7) as f64 / 6.0);
        let z = ConvEncoder::zeros().encode(&img);
        assert_eq!(z.len(), LATENT_DIM);
        assert!(z.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn deterministic_latent() {
        let enc = ConvEncoder::new(&mut ChaCha8Rng::seed_from_u64(3));
        let img = GrayImage::from_fn(64, 64, |x, y| ((x * y) % 11) as f64 / 10.0);
        assert_eq!(enc.encode(&img), enc.encode(&img));
    }

    #[test]
    fn conv_gradient_matches_finite_difference() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let conv = Conv2d::random(2, 3, &mut rng);
        let input = Array3::from_shape_fn((2, 7, 6), |_| rng.gen_range(-1.0..1.0));
        let d_out = Array3::from_shape_fn((3, 4, 3), |_| rng.gen_range(-1.0..1.0));
        let mut grad = Conv2d::zeros(2, 3);
        let d_in = conv.backward(&input, &d_out, &mut grad);
        let loss = |c: &Conv2d, x: &Array3<f64>| (c.forward(x) * &d_out).sum();
        let h = 1e-6;
        let mut c2 = conv.clone();
        c2.weight[[1, 0, 2, 1]] += h;
        let num = (loss(&c2, &input) - loss(&conv, &input)) / h;
        assert!((num - grad.weight[[1, 0, 2, 1]]).abs() < 1e-5);
        let mut x2 = input.clone();
        x2[[1, 3, 2]] += h;
        let num = (loss(&conv, &x2) - loss(&conv, &input)) / h;
        assert!((num - d_in[[1, 3, 2]]).abs() < 1e-5);
    }
}
