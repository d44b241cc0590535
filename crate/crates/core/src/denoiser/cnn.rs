//! DnCNN-lite: a small residual CNN that predicts the noise in an image.
//!
//! `layers` 3×3 convolutions, ReLU after all but the last, reflect padding
//! at every layer. Convolutions run as im2col followed by one GEMM.
//! Weights of layer `l` are stored `(c_out, c_in · 9)` with the tap index
//! `3·di + dj` fastest.

use ndarray::linalg::general_mat_mul;
use ndarray::{Array2, Array3, ArrayView2, ArrayView3, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::texture::TextureDataset;
use crate::error::{Error, Result};
use crate::optim::{Adam, LrSchedule, Params};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DncnnConfig {
    #[serde(default = "default_layers")]
    pub layers: usize,
    #[serde(default = "default_channels")]
    pub channels: usize,
    #[serde(default)]
    pub seed: u64,
}

fn default_layers() -> usize {
    10
}

fn default_channels() -> usize {
    16
}

impl Default for DncnnConfig {
    fn default() -> Self {
        Self {
            layers: default_layers(),
            channels: default_channels(),
            seed: 0,
        }
    }
}

impl DncnnConfig {
    pub fn validate(&self) -> Result<()> {
        if self.layers < 2 || self.channels == 0 {
            return Err(Error::InvalidParameter(format!(
                "DnCNN needs >= 2 layers and >= 1 channel, got {} / {}",
                self.layers, self.channels
            )));
        }
        Ok(())
    }

    /// Width in pixels of the region that influences one output pixel.
    pub fn receptive_field(&self) -> usize {
        1 + 2 * self.layers
    }

    pub fn layer_shapes(&self) -> Vec<(usize, usize)> {
        (0..self.layers)
            .map(|l| {
                let cin = if l == 0 { 1 } else { self.channels };
                let cout = if l + 1 == self.layers { 1 } else { self.channels };
                (cout, cin * 9)
            })
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dncnn {
    config: DncnnConfig,
    pub params: Params,
}

/// Index reflection without edge repetition: `-1 → 1`, `n → n - 2`.
fn reflect(i: isize, n: usize) -> usize {
    let n = n as isize;
    let j = if i < 0 {
        -i
    } else if i >= n {
        2 * (n - 1) - i
    } else {
        i
    };
    j as usize
}

/// `(c, h, w)` → `(c · 9, h · w)` patch matrix.
fn im2col(x: &ArrayView3<f64>) -> Array2<f64> {
    let (c, h, w) = x.dim();
    let mut cols = Array2::zeros((c * 9, h * w));
    for ch in 0..c {
        for di in 0..3 {
            for dj in 0..3 {
                let mut row = cols.row_mut(ch * 9 + di * 3 + dj);
                let row = row.as_slice_mut().expect("contiguous row");
                for i in 0..h {
                    let si = reflect(i as isize + di as isize - 1, h);
                    for j in 0..w {
                        let sj = reflect(j as isize + dj as isize - 1, w);
                        row[i * w + j] = x[[ch, si, sj]];
                    }
                }
            }
        }
    }
    cols
}

/// Transpose of [`im2col`].
fn col2im(cols: &Array2<f64>, c: usize, h: usize, w: usize) -> Array3<f64> {
    let mut x = Array3::zeros((c, h, w));
    for ch in 0..c {
        for di in 0..3 {
            for dj in 0..3 {
                let row = cols.row(ch * 9 + di * 3 + dj);
                for i in 0..h {
                    let si = reflect(i as isize + di as isize - 1, h);
                    for j in 0..w {
                        let sj = reflect(j as isize + dj as isize - 1, w);
                        x[[ch, si, sj]] += row[i * w + j];
                    }
                }
            }
        }
    }
    x
}

struct Trace {
    cols: Vec<Array2<f64>>,
    acts: Vec<Array2<f64>>,
}

impl Dncnn {
    /// He-initialized network with zero biases.
    pub fn new(config: DncnnConfig) -> Result<Self> {
        config.validate()?;
        let shapes = config.layer_shapes();
        let mut params = Params {
            weights: shapes.iter().map(|&s| Array2::zeros(s)).collect(),
            biases: shapes.iter().map(|&(o, _)| ndarray::Array1::zeros(o)).collect(),
        };
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        for w in params.weights.iter_mut() {
            let dist = Normal::new(0.0, (2.0 / w.ncols() as f64).sqrt()).expect("finite std");
            w.iter_mut().for_each(|v| *v = dist.sample(&mut rng));
        }
        Ok(Self { config, params })
    }

    pub fn from_params(config: DncnnConfig, params: Params) -> Result<Self> {
        config.validate()?;
        let shapes = config.layer_shapes();
        let biases_ok = params.biases.len() == shapes.len() && params.biases.iter().zip(&shapes).all(|(b, s)| b.len() == s.0);
        if params.shapes() != shapes || !biases_ok {
            return Err(Error::InvalidParameter("parameter shapes do not match DnCNN config".into()));
        }
        Ok(Self { config, params })
    }

    pub fn config(&self) -> &DncnnConfig {
        &self.config
    }

    fn check(&self, image: &ArrayView2<f64>) -> Result<()> {
        let rf = self.config.receptive_field();
        let (h, w) = image.dim();
        if h < rf || w < rf {
            return Err(Error::InvalidParameter(format!(
                "image {h}x{w} smaller than the {rf}x{rf} receptive field"
            )));
        }
        Ok(())
    }

    fn run(&self, image: &ArrayView2<f64>, mut trace: Option<&mut Trace>) -> Array2<f64> {
        let (h, w) = image.dim();
        let n = self.config.layers;
        let mut x = image.to_owned().into_shape_with_order((1, h, w)).expect("reshape");
        for l in 0..n {
            let cols = im2col(&x.view());
            let wt = &self.params.weights[l];
            let b = &self.params.biases[l];
            let mut out = Array2::from_shape_fn((wt.nrows(), h * w), |(o, _)| b[o]);
            general_mat_mul(1.0, wt, &cols, 1.0, &mut out);
            if l + 1 < n {
                out.mapv_inplace(|v| v.max(0.0));
            }
            if let Some(t) = trace.as_deref_mut() {
                t.cols.push(cols);
                t.acts.push(out.clone());
            }
            x = out.into_shape_with_order((wt.nrows(), h, w)).expect("reshape");
        }
        x.index_axis_move(Axis(0), 0)
    }

    /// Predicted noise `R(image)`.
    pub fn residual(&self, image: &ArrayView2<f64>) -> Result<Array2<f64>> {
        self.check(image)?;
        Ok(self.run(image, None))
    }

    /// Loss `mean(e² + |e|)` with `e = R(noisy) − noise`, and its gradient.
    pub fn loss_and_grad(&self, noisy: &ArrayView2<f64>, noise: &ArrayView2<f64>) -> Result<(f64, Params)> {
        self.check(noisy)?;
        if noisy.dim() != noise.dim() {
            return Err(Error::shape(noisy.shape(), noise.shape()));
        }
        let (h, w) = noisy.dim();
        let npix = (h * w) as f64;
        let mut trace = Trace {
            cols: Vec::new(),
            acts: Vec::new(),
        };
        let r = self.run(noisy, Some(&mut trace));
        let mut loss = 0.0;
        let mut delta = Array2::zeros((1, h * w));
        for ((d, &rv), &nv) in delta.iter_mut().zip(r.iter()).zip(noise.iter()) {
            let e = rv - nv;
            loss += e * e + e.abs();
            *d = (2.0 * e + sign(e)) / npix;
        }
        loss /= npix;

        let n = self.config.layers;
        let mut grads = self.params.zeros_like();
        for l in (0..n).rev() {
            general_mat_mul(1.0, &delta, &trace.cols[l].t(), 0.0, &mut grads.weights[l]);
            grads.biases[l] = delta.sum_axis(Axis(1));
            if l == 0 {
                break;
            }
            let wt = &self.params.weights[l];
            let mut dcols = Array2::zeros((wt.ncols(), h * w));
            general_mat_mul(1.0, &wt.t(), &delta, 0.0, &mut dcols);
            let cin = wt.ncols() / 9;
            let dx = col2im(&dcols, cin, h, w);
            let mut next = dx.into_shape_with_order((cin, h * w)).expect("reshape");
            next.zip_mut_with(&trace.acts[l - 1], |d, &a| {
                if a <= 0.0 {
                    *d = 0.0;
                }
            });
            delta = next;
        }
        Ok((loss, grads))
    }
}

fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DncnnTraining {
    pub epochs: usize,
    pub batch: usize,
    pub schedule: LrSchedule,
    #[serde(default)]
    pub seed: u64,
}

impl Default for DncnnTraining {
    fn default() -> Self {
        Self {
            epochs: 30,
            batch: 8,
            schedule: LrSchedule {
                lr0: 2e-3,
                decay: 0.1,
                period: 600.0,
            },
            seed: 0,
        }
    }
}

/// Trains a residual network on `dataset`; returns it with the mean
/// training loss of every epoch.
pub fn train_dncnn(config: &DncnnConfig, dataset: &TextureDataset, training: &DncnnTraining) -> Result<(Dncnn, Vec<f64>)> {
    if dataset.pairs.is_empty() {
        return Err(Error::InvalidParameter("empty training dataset".into()));
    }
    if training.batch == 0 {
        return Err(Error::InvalidParameter("batch size must be positive".into()));
    }
    training.schedule.validate()?;
    let mut net = Dncnn::new(config.clone())?;
    let mut adam = Adam::new(&net.params);
    let mut rng = ChaCha8Rng::seed_from_u64(training.seed);
    let mut order: Vec<usize> = (0..dataset.pairs.len()).collect();
    let noisy: Vec<Array2<f64>> = dataset.pairs.iter().map(|p| p.noisy()).collect();
    let mut history = Vec::with_capacity(training.epochs);
    for epoch in 0..training.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(training.batch) {
            let results: Vec<(f64, Params)> = batch
                .par_iter()
                .map(|&i| net.loss_and_grad(&noisy[i].view(), &dataset.pairs[i].noise.view()))
                .collect::<Result<_>>()?;
            let mut grads = net.params.zeros_like();
            for (loss, g) in &results {
                epoch_loss += loss;
                grads.add_assign(g);
            }
            let scale = 1.0 / batch.len() as f64;
            grads.iter_mut().for_each(|v| *v *= scale);
            adam.update(&mut net.params, &grads, &training.schedule);
        }
        let mean = epoch_loss / dataset.pairs.len() as f64;
        if !mean.is_finite() {
            return Err(Error::Divergence {
                iteration: epoch,
                detail: "denoiser training loss is not finite".into(),
            });
        }
        history.push(mean);
    }
    Ok((net, history))
}
