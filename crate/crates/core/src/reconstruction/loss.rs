//! The regularized objective and its gradient.
//!
//! ```text
//! L(x) = Σ c(A x − y) + α Σ_slices ‖x − D(x)‖² + β Σ_j c(x_j − x_{j−1})
//! ```
//!
//! `c(r) = sqrt(r² + ε²)` is the Charbonnier-smoothed absolute value, so a
//! perfect fit still carries a floor of `ε` per element. Both channels of
//! `x = (Δε_re, Δε_im)` are regularized. The denoiser term is a
//! stop-gradient prior: its gradient is taken as `2α(x − D(x))`.

use ndarray::{Array3, Axis, Zip};
use serde::{Deserialize, Serialize};

use super::blocks::{BlockPartition, Rect};
use crate::denoiser::DenoiserHandle;
use crate::error::{Error, Result};
use crate::field::{merge_outputs, split_outputs, NeuralField};
use crate::optics::{IdtOperator, MeasurementSet, TransferFunctionStack};
use crate::optim::Params;
use crate::volume::{grid_coords, Grid3D, PermittivityVolume};

pub const DEFAULT_CHARBONNIER_EPS: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LossWeights {
    pub alpha: f64,
    pub beta: f64,
    #[serde(default = "default_eps")]
    pub charbonnier_eps: f64,
}

fn default_eps() -> f64 {
    DEFAULT_CHARBONNIER_EPS
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            alpha: 0.05,
            beta: 0.1,
            charbonnier_eps: DEFAULT_CHARBONNIER_EPS,
        }
    }
}

impl LossWeights {
    pub fn unregularized() -> Self {
        Self {
            alpha: 0.0,
            beta: 0.0,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha >= 0.0 && self.beta >= 0.0 && self.charbonnier_eps > 0.0) {
            return Err(Error::InvalidParameter(format!("bad loss weights {self:?}")));
        }
        Ok(())
    }
}

/// Unweighted terms; `total = term1 + α·term2 + β·term3`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossTerms {
    pub term1: f64,
    pub term2: f64,
    pub term3: f64,
    pub total: f64,
}

pub fn charbonnier(r: f64, eps: f64) -> f64 {
    (r * r + eps * eps).sqrt()
}

fn charbonnier_grad(r: f64, eps: f64) -> f64 {
    r / charbonnier(r, eps)
}

/// Data term over the `view` pixels of every measurement and its derivative
/// with respect to the prediction (zero outside the view).
fn data_term(pred: &MeasurementSet, target: &MeasurementSet, view: Rect, eps: f64) -> (f64, MeasurementSet) {
    let mut deriv = MeasurementSet::zeros(pred.count(), pred.lateral_shape().0, pred.lateral_shape().1);
    let mut sum = 0.0;
    for ((p, t), mut d) in pred
        .images
        .axis_iter(Axis(0))
        .zip(target.images.axis_iter(Axis(0)))
        .zip(deriv.images.axis_iter_mut(Axis(0)))
    {
        for i in view.x0..view.x1 {
            for j in view.y0..view.y1 {
                let r = p[[i, j]] - t[[i, j]];
                sum += charbonnier(r, eps);
                d[[i, j]] = charbonnier_grad(r, eps);
            }
        }
    }
    (sum, deriv)
}

/// `Σ ‖x − D(x)‖²` over slices, and the stop-gradient `2α(x − D(x))` added
/// into `grad` when `alpha > 0`.
fn denoiser_term(x: &Array3<f64>, denoiser: &DenoiserHandle, alpha: f64, grad: &mut Array3<f64>) -> Result<f64> {
    if denoiser.is_identity() {
        return Ok(0.0);
    }
    let r = denoiser.residual_volume(x)?;
    if alpha > 0.0 {
        grad.zip_mut_with(&r, |g, &v| *g += 2.0 * alpha * v);
    }
    Ok(r.iter().map(|v| v * v).sum())
}

/// `Σ_j c(x_j − x_{j−1})` along z, with `β c'` added into `grad` when `beta > 0`.
fn axial_term(x: &Array3<f64>, eps: f64, beta: f64, grad: &mut Array3<f64>) -> f64 {
    let nz = x.dim().0;
    let mut sum = 0.0;
    for q in 1..nz {
        let (cur, prev) = (x.index_axis(Axis(0), q), x.index_axis(Axis(0), q - 1));
        let diffs = &cur - &prev;
        sum += diffs.iter().map(|&v| charbonnier(v, eps)).sum::<f64>();
        if beta > 0.0 {
            let g = diffs.mapv(|v| beta * charbonnier_grad(v, eps));
            let mut gq = grad.index_axis_mut(Axis(0), q);
            gq += &g;
            let mut gp = grad.index_axis_mut(Axis(0), q - 1);
            gp -= &g;
        }
    }
    sum
}

/// Loss of block `i` whose rendered padded volume is `(re, im)`, with the
/// gradient with respect to that block volume.
pub(crate) fn block_objective(
    op: &IdtOperator<'_>,
    partition: &BlockPartition,
    i: usize,
    re: &Array3<f64>,
    im: &Array3<f64>,
    target: &MeasurementSet,
    weights: &LossWeights,
    denoiser: &DenoiserHandle,
) -> Result<(LossTerms, Array3<f64>, Array3<f64>)> {
    let view = partition.block(i)?.view;
    let full_re = partition.embed(i, re)?;
    let full_im = partition.embed(i, im)?;
    let pred = op.apply(&full_re, &full_im)?;
    let (term1, deriv) = data_term(&pred, target, view, weights.charbonnier_eps);
    let (g_re, g_im) = op.apply_adjoint(&deriv)?;
    let mut g_re = partition.embed_adjoint(i, &g_re)?;
    let mut g_im = partition.embed_adjoint(i, &g_im)?;

    let term2 = denoiser_term(re, denoiser, weights.alpha, &mut g_re)? + denoiser_term(im, denoiser, weights.alpha, &mut g_im)?;
    let term3 = axial_term(re, weights.charbonnier_eps, weights.beta, &mut g_re)
        + axial_term(im, weights.charbonnier_eps, weights.beta, &mut g_im);
    let total = term1 + weights.alpha * term2 + weights.beta * term3;
    Ok((
        LossTerms {
            term1,
            term2,
            term3,
            total,
        },
        g_re,
        g_im,
    ))
}

fn check_target(stack: &TransferFunctionStack, grid: &Grid3D, target: &MeasurementSet) -> Result<()> {
    let g = stack.grid;
    if (g.nx, g.ny, g.nz) != (grid.nx, grid.ny, grid.nz) {
        return Err(Error::shape(&[g.nz, g.nx, g.ny], &[grid.nz, grid.nx, grid.ny]));
    }
    let want = [stack.measurement_count(), g.nx, g.ny];
    if target.images.shape() != want {
        return Err(Error::shape(&want, target.images.shape()));
    }
    Ok(())
}

/// Objective and volume gradient for an explicit volume on the full grid.
pub fn volume_loss(
    stack: &TransferFunctionStack,
    vol: &PermittivityVolume,
    target: &MeasurementSet,
    weights: &LossWeights,
    denoiser: &DenoiserHandle,
) -> Result<(LossTerms, PermittivityVolume)> {
    weights.validate()?;
    check_target(stack, &vol.grid, target)?;
    let partition = super::blocks::partition_blocks(&vol.grid, 1, 0, 0)?;
    let op = IdtOperator::new(stack);
    let (terms, g_re, g_im) = block_objective(&op, &partition, 0, &vol.re, &vol.im, target, weights, denoiser)?;
    Ok((terms, PermittivityVolume::new(vol.grid, g_re, g_im)?))
}

/// Objective of the field rendered on `grid`.
pub fn total_loss(
    field: &NeuralField,
    grid: &Grid3D,
    stack: &TransferFunctionStack,
    target: &MeasurementSet,
    weights: &LossWeights,
    denoiser: &DenoiserHandle,
) -> Result<LossTerms> {
    let vol = field.render_grid(grid)?;
    Ok(volume_loss(stack, &vol, target, weights, denoiser)?.0)
}

/// Objective of the field and its gradient with respect to the MLP weights.
pub fn loss_gradient(
    field: &NeuralField,
    grid: &Grid3D,
    stack: &TransferFunctionStack,
    target: &MeasurementSet,
    weights: &LossWeights,
    denoiser: &DenoiserHandle,
) -> Result<(LossTerms, Params)> {
    weights.validate()?;
    check_target(stack, grid, target)?;
    let features = field.encoder.encode_batch(&grid_coords(grid));
    let (out, caches) = field.mlp.forward_cached(features.view())?;
    let (re, im) = split_outputs(&out, grid)?;
    let partition = super::blocks::partition_blocks(grid, 1, 0, 0)?;
    let op = IdtOperator::new(stack);
    let (terms, g_re, g_im) = block_objective(&op, &partition, 0, &re, &im, target, weights, denoiser)?;
    let grads = field.mlp.backward(&caches, merge_outputs(&g_re, &g_im).view())?;
    Ok((terms, grads))
}

/// Mean absolute difference between two measurement sets.
pub fn measurement_mae(a: &MeasurementSet, b: &MeasurementSet) -> f64 {
    let n = a.images.len().max(1) as f64;
    Zip::from(&a.images).and(&b.images).fold(0.0, |acc, x, y| acc + (x - y).abs()) / n
}
