//! Fully connected networks with reverse-mode gradients.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::Rng;
use rand_distr::{Distribution, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Activation {
    Tanh,
    Identity,
}

impl Activation {
    #[inline]
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Tanh => z.tanh(),
            Activation::Identity => z,
        }
    }

    /// Derivative expressed through the activation output `a`.
    #[inline]
    fn derivative_from_output(self, a: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - a * a,
            Activation::Identity => 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Linear {
    /// `(out, in)`
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Linear {
    pub fn zeros(input: usize, output: usize) -> Self {
        Self {
            weight: Array2::zeros((output, input)),
            bias: Array1::zeros(output),
        }
    }

    /// Uniform in `+-gain / sqrt(input)`, zero bias.
    pub fn random<R: Rng + ?Sized>(input: usize, output: usize, gain: f64, rng: &mut R) -> Self {
        let bound = gain / (input.max(1) as f64).sqrt();
        let dist = Uniform::new_inclusive(-bound, bound);
        Self {
            weight: Array2::from_shape_fn((output, input), |_| dist.sample(rng)),
            bias: Array1::zeros(output),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.weight.ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.weight.nrows()
    }
}

/// Multilayer perceptron; the activation follows every layer but the last.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpNet {
    pub layers: Vec<Linear>,
    pub hidden_activation: Activation,
}

/// Gradients with the same layout as the network.
pub type MlpGrads = Vec<Linear>;

/// Layer outputs kept for the backward pass.
#[derive(Debug, Clone)]
pub struct MlpCache {
    /// `activations[0]` is the input, `activations[l + 1]` the output of layer `l`.
    pub activations: Vec<Array2<f64>>,
}

impl MlpCache {
    pub fn output(&self) -> &Array2<f64> {
        self.activations.last().expect("cache holds the input")
    }
}

impl MlpNet {
    /// Random network with `sizes = [input, hidden.., output]`; the last layer is
    /// scaled by `output_gain`.
    pub fn new<R: Rng + ?Sized>(sizes: &[usize], output_gain: f64, rng: &mut R) -> Self {
        assert!(sizes.len() >= 2, "need at least input and output sizes");
        let n = sizes.len() - 1;
        let layers = (0..n)
            .map(|l| {
                let gain = if l + 1 == n { output_gain } else { 1.0 };
                Linear::random(sizes[l], sizes[l + 1], gain, rng)
            })
            .collect();
        Self {
            layers,
            hidden_activation: Activation::Tanh,
        }
    }

    pub fn zeros(sizes: &[usize]) -> Self {
        Self {
            layers: sizes.windows(2).map(|s| Linear::zeros(s[0], s[1])).collect(),
            hidden_activation: Activation::Tanh,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].input_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().unwrap().output_dim()
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(|l| l.weight.len() + l.bias.len()).sum()
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut s = vec![self.input_dim()];
        s.extend(self.layers.iter().map(Linear::output_dim));
        s
    }

    fn check_input(&self, cols: usize) -> Result<()> {
        if cols != self.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim(),
                got: cols,
            });
        }
        Ok(())
    }

    /// Batched forward pass; rows are samples.
    pub fn forward_cached(&self, input: ArrayView2<f64>) -> Result<MlpCache> {
        self.check_input(input.ncols())?;
        let mut activations = Vec::with_capacity(self.layers.len() + 1);
        activations.push(input.to_owned());
        let last = self.layers.len() - 1;
        for (l, layer) in self.layers.iter().enumerate() {
            let mut z = activations[l].dot(&layer.weight.t());
            z += &layer.bias;
            if l < last {
                let act = self.hidden_activation;
                z.mapv_inplace(|v| act.apply(v));
            }
            activations.push(z);
        }
        Ok(MlpCache { activations })
    }

    pub fn forward(&self, input: ArrayView2<f64>) -> Result<Array2<f64>> {
        Ok(self.forward_cached(input)?.activations.pop().unwrap())
    }

    /// Forward pass of a single sample.
    pub fn forward_one(&self, input: ArrayView1<f64>) -> Result<Array1<f64>> {
        let x = input.insert_axis(Axis(0));
        Ok(self.forward(x)?.row(0).to_owned())
    }

    /// Parameter gradients and input gradient for `upstream = dL/d(output)`.
    pub fn backward(&self, cache: &MlpCache, upstream: ArrayView2<f64>) -> Result<(MlpGrads, Array2<f64>)> {
        let out = cache.output();
        if upstream.dim() != out.dim() {
            return Err(Error::DimensionMismatch {
                expected: out.ncols(),
                got: upstream.ncols(),
            });
        }
        let mut grads: Vec<Linear> = Vec::with_capacity(self.layers.len());
        let mut delta = upstream.to_owned();
        for l in (0..self.layers.len()).rev() {
            let layer = &self.layers[l];
            let a_in = &cache.activations[l];
            grads.push(Linear {
                weight: delta.t().dot(a_in).as_standard_layout().into_owned(),
                bias: delta.sum_axis(Axis(0)),
            });
            let mut d_in = delta.dot(&layer.weight);
            if l > 0 {
                let act = self.hidden_activation;
                ndarray::Zip::from(&mut d_in)
                    .and(a_in)
                    .for_each(|d, &a| *d *= act.derivative_from_output(a));
            }
            delta = d_in;
        }
        grads.reverse();
        // `delta` is now dL/d(input) since no activation precedes layer 0
        Ok((grads, delta))
    }

    pub fn zero_grads(&self) -> MlpGrads {
        self.layers
            .iter()
            .map(|l| Linear::zeros(l.input_dim(), l.output_dim()))
            .collect()
    }

    /// Mutable views of every parameter tensor, in declaration order.
    pub fn params_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = Vec::with_capacity(2 * self.layers.len());
        for l in &mut self.layers {
            out.push(l.weight.as_slice_mut().expect("standard layout"));
            out.push(l.bias.as_slice_mut().expect("standard layout"));
        }
        out
    }

    pub fn params(&self) -> Vec<&[f64]> {
        grads_slices(&self.layers)
    }
}

/// Read-only views of gradient tensors, matching `MlpNet::params_mut`.
pub fn grads_slices(grads: &[Linear]) -> Vec<&[f64]> {
    let mut out = Vec::with_capacity(2 * grads.len());
    for l in grads {
        out.push(l.weight.as_slice().expect("standard layout"));
        out.push(l.bias.as_slice().expect("standard layout"));
    }
    out
}

pub const LOG_STD_MIN: f64 = -5.0;
pub const LOG_STD_MAX: f64 = 1.0;
/// `ln(2 pi) / 2`
pub const HALF_LN_TWO_PI: f64 = 0.918_938_533_204_672_8;

/// Diagonal Gaussian over raw actions with a tanh-squashed mean and a learned,
/// state-independent log standard deviation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianPolicyHead {
    pub log_std: Array1<f64>,
}

impl GaussianPolicyHead {
    pub fn new(dim: usize, log_std: f64) -> Self {
        Self {
            log_std: Array1::from_elem(dim, log_std.clamp(LOG_STD_MIN, LOG_STD_MAX)),
        }
    }

    pub fn clamped_log_std(&self) -> Array1<f64> {
        self.log_std.mapv(|v| v.clamp(LOG_STD_MIN, LOG_STD_MAX))
    }

    pub fn std(&self) -> Array1<f64> {
        self.clamped_log_std().mapv(f64::exp)
    }

    /// Log-density of `action` given `mean`.
    pub fn log_prob(&self, mean: ArrayView1<f64>, action: ArrayView1<f64>) -> f64 {
        let ls = self.clamped_log_std();
        let mut lp = 0.0;
        for i in 0..mean.len() {
            let z = (action[i] - mean[i]) / ls[i].exp();
            lp += -0.5 * z * z - ls[i] - HALF_LN_TWO_PI;
        }
        lp
    }
}
