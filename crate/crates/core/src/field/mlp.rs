//! Fully connected network with Leaky ReLU and one input skip connection.
//!
//! Layer `l` maps `h_l · W_l + b_l`; weights are stored `(fan_in, fan_out)`.
//! At layer `⌊N/2⌋` the encoded input is concatenated after the hidden
//! state, so that layer's weight matrix has `M + D` rows with the hidden
//! rows first. The last layer is linear with two outputs `(Δε_re, Δε_im)`.

use ndarray::linalg::general_mat_mul;
use ndarray::{s, Array2, ArrayView2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::optim::Params;

/// Rows per independently evaluated chunk. Fixed so results do not depend
/// on the thread count.
pub const CHUNK: usize = 1024;

pub const OUTPUTS: usize = 2;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MlpConfig {
    /// Number of fully connected layers `N`.
    pub layers: usize,
    /// Hidden width `M`.
    pub width: usize,
    #[serde(default = "default_slope")]
    pub leaky_slope: f64,
    /// Multiplier on the initial output-layer weights.
    #[serde(default = "default_output_scale")]
    pub output_scale: f64,
    #[serde(default)]
    pub seed: u64,
}

fn default_slope() -> f64 {
    0.01
}

fn default_output_scale() -> f64 {
    1e-3
}

impl Default for MlpConfig {
    fn default() -> Self {
        Self {
            layers: 6,
            width: 64,
            leaky_slope: default_slope(),
            output_scale: default_output_scale(),
            seed: 0,
        }
    }
}

impl MlpConfig {
    pub fn validate(&self) -> Result<()> {
        if self.layers < 3 {
            return Err(Error::InvalidParameter(format!("need at least 3 layers, got {}", self.layers)));
        }
        if self.width == 0 {
            return Err(Error::InvalidParameter("hidden width must be positive".into()));
        }
        if !(self.leaky_slope >= 0.0 && self.leaky_slope < 1.0) {
            return Err(Error::InvalidParameter(format!("leaky slope {} outside [0, 1)", self.leaky_slope)));
        }
        Ok(())
    }

    pub fn skip_layer(&self) -> usize {
        self.layers / 2
    }

    /// `(fan_in, fan_out)` of every layer for encoding width `d`.
    pub fn layer_shapes(&self, d: usize) -> Vec<(usize, usize)> {
        (0..self.layers)
            .map(|l| {
                let base = if l == 0 { d } else { self.width };
                let fan_in = if l == self.skip_layer() { base + d } else { base };
                let fan_out = if l + 1 == self.layers { OUTPUTS } else { self.width };
                (fan_in, fan_out)
            })
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Mlp {
    config: MlpConfig,
    input_dim: usize,
    pub params: Params,
}

/// Hidden activations kept by [`Mlp::forward_cached`] for the backward pass.
#[derive(Clone, Debug)]
pub struct Cache {
    /// Layer inputs excluding the skip features; `inputs[0]` is the encoding.
    inputs: Vec<Array2<f64>>,
}

impl Mlp {
    /// He-initialized network: `W ~ N(0, 2 / ((1 + a²) fan_in))`, zero biases,
    /// output layer scaled by `output_scale`.
    pub fn new(config: MlpConfig, input_dim: usize) -> Result<Self> {
        config.validate()?;
        if input_dim == 0 {
            return Err(Error::InvalidParameter("input dimension must be positive".into()));
        }
        let shapes = config.layer_shapes(input_dim);
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut params = Params::zeros(&shapes);
        let gain = 2.0 / (1.0 + config.leaky_slope * config.leaky_slope);
        for (l, w) in params.weights.iter_mut().enumerate() {
            let std = (gain / shapes[l].0 as f64).sqrt();
            let dist = Normal::new(0.0, std).expect("finite std");
            let scale = if l + 1 == shapes.len() { config.output_scale } else { 1.0 };
            w.iter_mut().for_each(|v| *v = scale * dist.sample(&mut rng));
        }
        Ok(Self {
            config,
            input_dim,
            params,
        })
    }

    pub fn from_params(config: MlpConfig, input_dim: usize, params: Params) -> Result<Self> {
        config.validate()?;
        let want = config.layer_shapes(input_dim);
        if params.shapes() != want || params.biases.iter().zip(&want).any(|(b, s)| b.len() != s.1) {
            return Err(Error::InvalidParameter("parameter shapes do not match network config".into()));
        }
        Ok(Self {
            config,
            input_dim,
            params,
        })
    }

    pub fn config(&self) -> &MlpConfig {
        &self.config
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    fn leaky(&self, v: f64) -> f64 {
        if v > 0.0 {
            v
        } else {
            self.config.leaky_slope * v
        }
    }

    /// Pre-activation of layer `l` for hidden state `h` and features `x`.
    fn affine(&self, l: usize, h: &ArrayView2<f64>, x: &ArrayView2<f64>) -> Array2<f64> {
        let w = &self.params.weights[l];
        let b = &self.params.biases[l];
        let mut z = Array2::from_shape_fn((h.nrows(), w.ncols()), |(_, j)| b[j]);
        if l == self.config.skip_layer() {
            let rows = h.ncols();
            general_mat_mul(1.0, h, &w.slice(s![..rows, ..]), 1.0, &mut z);
            general_mat_mul(1.0, x, &w.slice(s![rows.., ..]), 1.0, &mut z);
        } else {
            general_mat_mul(1.0, h, w, 1.0, &mut z);
        }
        z
    }

    fn forward_chunk(&self, x: ArrayView2<f64>, mut cache: Option<&mut Cache>) -> Array2<f64> {
        let n = self.config.layers;
        let mut h = x.to_owned();
        for l in 0..n {
            let mut z = self.affine(l, &h.view(), &x);
            if l + 1 < n {
                z.mapv_inplace(|v| self.leaky(v));
            }
            let prev = std::mem::replace(&mut h, z);
            if let Some(c) = cache.as_deref_mut() {
                c.inputs.push(prev);
            }
        }
        h
    }

    fn check_input(&self, x: &ArrayView2<f64>) -> Result<()> {
        if x.ncols() != self.input_dim {
            return Err(Error::shape(&[x.nrows(), self.input_dim], x.shape()));
        }
        Ok(())
    }

    /// Outputs `(n, 2)` for encoded inputs `(n, D)`.
    pub fn forward(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        self.check_input(&x)?;
        let parts: Vec<Array2<f64>> = x
            .axis_chunks_iter(Axis(0), CHUNK)
            .into_par_iter()
            .map(|c| self.forward_chunk(c, None))
            .collect();
        Ok(concat_rows(&parts, OUTPUTS))
    }

    /// Forward pass keeping the activations needed by [`Self::backward`].
    pub fn forward_cached(&self, x: ArrayView2<f64>) -> Result<(Array2<f64>, Vec<Cache>)> {
        self.check_input(&x)?;
        let parts: Vec<(Array2<f64>, Cache)> = x
            .axis_chunks_iter(Axis(0), CHUNK)
            .into_par_iter()
            .map(|c| {
                let mut cache = Cache { inputs: Vec::new() };
                let out = self.forward_chunk(c, Some(&mut cache));
                (out, cache)
            })
            .collect();
        let outs: Vec<Array2<f64>> = parts.iter().map(|p| p.0.clone()).collect();
        Ok((concat_rows(&outs, OUTPUTS), parts.into_iter().map(|p| p.1).collect()))
    }

    fn backward_chunk(&self, cache: &Cache, grad_out: ArrayView2<f64>) -> Params {
        let n = self.config.layers;
        let skip = self.config.skip_layer();
        let mut grads = self.params.zeros_like();
        let mut delta = grad_out.to_owned();
        for l in (0..n).rev() {
            let h = &cache.inputs[l];
            let rows = h.ncols();
            let gw = &mut grads.weights[l];
            general_mat_mul(1.0, &h.t(), &delta, 0.0, &mut gw.slice_mut(s![..rows, ..]));
            if l == skip {
                let x = &cache.inputs[0];
                general_mat_mul(1.0, &x.t(), &delta, 0.0, &mut gw.slice_mut(s![rows.., ..]));
            }
            grads.biases[l] = delta.sum_axis(Axis(0));
            if l == 0 {
                break;
            }
            let w = self.params.weights[l].slice(s![..rows, ..]);
            let mut next = Array2::zeros((delta.nrows(), rows));
            general_mat_mul(1.0, &delta, &w.t(), 0.0, &mut next);
            let slope = self.config.leaky_slope;
            next.zip_mut_with(h, |d, &a| {
                if a <= 0.0 {
                    *d *= slope;
                }
            });
            delta = next;
        }
        grads
    }

    /// Parameter gradient of `Σ grad_out ⊙ output` given the caches of the
    /// matching [`Self::forward_cached`] call.
    pub fn backward(&self, caches: &[Cache], grad_out: ArrayView2<f64>) -> Result<Params> {
        let rows: usize = caches.iter().map(|c| c.inputs[0].nrows()).sum();
        if grad_out.dim() != (rows, OUTPUTS) {
            return Err(Error::shape(&[rows, OUTPUTS], grad_out.shape()));
        }
        let parts: Vec<Params> = caches
            .par_iter()
            .zip(grad_out.axis_chunks_iter(Axis(0), CHUNK).into_par_iter())
            .map(|(c, g)| self.backward_chunk(c, g))
            .collect();
        let mut total = self.params.zeros_like();
        for p in &parts {
            total.add_assign(p);
        }
        Ok(total)
    }
}

fn concat_rows(parts: &[Array2<f64>], cols: usize) -> Array2<f64> {
    let n: usize = parts.iter().map(|p| p.nrows()).sum();
    let mut out = Array2::zeros((n, cols));
    let mut start = 0;
    for p in parts {
        out.slice_mut(s![start..start + p.nrows(), ..]).assign(p);
        start += p.nrows();
    }
    out
}
