//! Block-wise Adam.
//!
//! Each iteration picks a block uniformly at random, separates its partial
//! measurement from the current estimates of the other blocks, takes one
//! Adam step on the block loss, re-renders the block with the new weights
//! and stores its forward prediction.
//!
//! The stored predictions of the other blocks are stale by construction,
//! since every step changes the shared weights. At each logging iteration
//! the trainer records that staleness, then re-synchronizes all stored
//! predictions with the current field and records the remaining mismatch
//! against the forward model of a direct full-grid render.

use std::path::Path;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::blocks::BlockPartition;
use super::loss::{block_objective, measurement_mae, volume_loss, LossTerms, LossWeights};
use crate::denoiser::DenoiserHandle;
use crate::error::{Error, Result};
use crate::field::{merge_outputs, split_outputs, NeuralField};
use crate::optics::{IdtOperator, MeasurementSet, TransferFunctionStack};
use crate::optim::{Adam, LrSchedule};
use crate::volume::{normalize_coords, Grid3D, PermittivityVolume};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub iterations: usize,
    #[serde(default = "default_log_every")]
    pub log_every: usize,
    #[serde(default)]
    pub schedule: LrSchedule,
    #[serde(default)]
    pub seed: u64,
}

fn default_log_every() -> usize {
    100
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            iterations: 2000,
            log_every: default_log_every(),
            schedule: LrSchedule::default(),
            seed: 0,
        }
    }
}

/// One row of the training log.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogEntry {
    pub iter: usize,
    pub term1: f64,
    pub term2: f64,
    pub term3: f64,
    pub total: f64,
    /// Mean absolute error between predicted and target measurements.
    pub mae: f64,
    pub lr: f64,
    /// Relative mismatch of the stored block predictions before re-sync.
    pub psi_stale: Option<f64>,
    /// Relative mismatch after re-sync.
    pub psi_residual: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct TrainState {
    pub field: NeuralField,
    pub adam: Adam,
    pub schedule: LrSchedule,
    pub history: Vec<LogEntry>,
    pub rng: ChaCha8Rng,
    pub seed: u64,
}

impl TrainState {
    pub fn new(field: NeuralField, schedule: LrSchedule, seed: u64) -> Result<Self> {
        schedule.validate()?;
        let adam = Adam::new(&field.mlp.params);
        Ok(Self {
            field,
            adam,
            schedule,
            history: Vec::new(),
            rng: ChaCha8Rng::seed_from_u64(seed),
            seed,
        })
    }

    pub fn step(&self) -> u64 {
        self.adam.step
    }
}

/// Dictionary of per-block forward predictions `y_i`, kept over the full
/// lateral grid.
#[derive(Clone, Debug, PartialEq)]
pub struct PartialMeasurements {
    pub psi: Vec<MeasurementSet>,
}

impl PartialMeasurements {
    pub fn zeros(blocks: usize, count: usize, nx: usize, ny: usize) -> Self {
        Self {
            psi: vec![MeasurementSet::zeros(count, nx, ny); blocks],
        }
    }

    pub fn assembled(&self) -> Option<MeasurementSet> {
        let mut it = self.psi.iter();
        let mut acc = it.next()?.clone();
        for m in it {
            acc.images += &m.images;
        }
        Some(acc)
    }
}

/// `y_i = y − Σ_{j≠i} y_j`; only block `i`'s view enters its loss.
pub fn measurement_separation(psi: &PartialMeasurements, target: &MeasurementSet, i: usize) -> Result<MeasurementSet> {
    if i >= psi.psi.len() {
        return Err(Error::UnknownBlock(i));
    }
    let mut y = target.clone();
    for (j, m) in psi.psi.iter().enumerate() {
        if j != i {
            if m.images.dim() != y.images.dim() {
                return Err(Error::shape(y.images.shape(), m.images.shape()));
            }
            y.images -= &m.images;
        }
    }
    Ok(y)
}

fn block_features(field: &NeuralField, grid: &Grid3D, partition: &BlockPartition, i: usize) -> Result<Array2<f64>> {
    let r = partition.block(i)?.padded;
    let mut coords = Vec::with_capacity(grid.nz * r.len());
    for iz in 0..grid.nz {
        for ix in r.x0..r.x1 {
            for iy in r.y0..r.y1 {
                coords.push(normalize_coords(grid, [ix, iy, iz])?);
            }
        }
    }
    Ok(field.encoder.encode_batch(&coords))
}

fn block_grid(grid: &Grid3D, partition: &BlockPartition, i: usize) -> Result<Grid3D> {
    let r = partition.block(i)?.padded;
    Ok(Grid3D {
        nx: r.width(),
        ny: r.height(),
        ..*grid
    })
}

fn relative(a: &MeasurementSet, b: &MeasurementSet) -> f64 {
    let mut diff = a.images.clone();
    diff -= &b.images;
    let den = b.norm();
    let num = diff.iter().map(|v| v * v).sum::<f64>().sqrt();
    if den == 0.0 {
        num
    } else {
        num / den
    }
}

fn divergence(iteration: usize, what: &str) -> Error {
    Error::Divergence {
        iteration,
        detail: format!("{what} became non-finite; lower the learning rate or check the inputs"),
    }
}

#[allow(clippy::too_many_arguments)]
fn log_entry(
    state: &TrainState,
    iter: usize,
    grid: &Grid3D,
    partition: &BlockPartition,
    op: &IdtOperator<'_>,
    stack: &TransferFunctionStack,
    target: &MeasurementSet,
    weights: &LossWeights,
    denoiser: &DenoiserHandle,
    psi: &mut PartialMeasurements,
) -> Result<LogEntry> {
    let vol = state.field.render_grid(grid)?;
    let (terms, _) = volume_loss(stack, &vol, target, weights, denoiser)?;
    let pred = op.forward(&vol)?;
    let mae = measurement_mae(&pred, target);
    let (mut psi_stale, mut psi_residual) = (None, None);
    if partition.len() > 1 {
        psi_stale = psi.assembled().map(|a| relative(&a, &pred));
        for i in 0..partition.len() {
            let re = partition.crop(i, &vol.re)?;
            let im = partition.crop(i, &vol.im)?;
            psi.psi[i] = op.apply(&partition.embed(i, &re)?, &partition.embed(i, &im)?)?;
        }
        psi_residual = psi.assembled().map(|a| relative(&a, &pred));
    }
    if !terms.total.is_finite() || !mae.is_finite() {
        return Err(divergence(iter, "loss"));
    }
    Ok(LogEntry {
        iter,
        term1: terms.term1,
        term2: terms.term2,
        term3: terms.term3,
        total: terms.total,
        mae,
        lr: state.schedule.rate(state.adam.step),
        psi_stale,
        psi_residual,
    })
}

/// Runs `config.iterations` block-wise Adam iterations on `state`.
///
/// Log entries are taken before iterations `0, log_every, 2·log_every, …`
/// and once after the last iteration; their loss terms are those of the
/// full objective on the whole grid.
#[allow(clippy::too_many_arguments)]
pub fn blockwise_adam_train(
    mut state: TrainState,
    grid: &Grid3D,
    partition: &BlockPartition,
    stack: &TransferFunctionStack,
    target: &MeasurementSet,
    weights: &LossWeights,
    denoiser: &DenoiserHandle,
    config: &TrainConfig,
) -> Result<TrainState> {
    weights.validate()?;
    if (partition.nx, partition.ny) != (grid.nx, grid.ny) {
        return Err(Error::shape(&[grid.nx, grid.ny], &[partition.nx, partition.ny]));
    }
    let want = [stack.measurement_count(), grid.nx, grid.ny];
    if target.images.shape() != want {
        return Err(Error::shape(&want, target.images.shape()));
    }
    let log_every = config.log_every.max(1);
    let op = IdtOperator::new(stack);
    let nb = partition.len();
    let features: Vec<Array2<f64>> = (0..nb)
        .map(|i| block_features(&state.field, grid, partition, i))
        .collect::<Result<_>>()?;
    let grids: Vec<Grid3D> = (0..nb).map(|i| block_grid(grid, partition, i)).collect::<Result<_>>()?;
    let mut psi = PartialMeasurements::zeros(nb, stack.measurement_count(), grid.nx, grid.ny);

    for it in 0..config.iterations {
        if it % log_every == 0 {
            let e = log_entry(&state, it, grid, partition, &op, stack, target, weights, denoiser, &mut psi)?;
            state.history.push(e);
        }
        let i = state.rng.random_range(0..nb);
        let y_i = measurement_separation(&psi, target, i)?;
        let (out, caches) = state.field.mlp.forward_cached(features[i].view())?;
        let (re, im) = split_outputs(&out, &grids[i])?;
        let (terms, g_re, g_im): (LossTerms, _, _) =
            block_objective(&op, partition, i, &re, &im, &y_i, weights, denoiser)?;
        if !terms.total.is_finite() {
            return Err(divergence(it, "loss"));
        }
        let grads = state.field.mlp.backward(&caches, merge_outputs(&g_re, &g_im).view())?;
        if !grads.all_finite() {
            return Err(divergence(it, "gradient"));
        }
        let (params, adam) = (&mut state.field.mlp.params, &mut state.adam);
        adam.update(params, &grads, &state.schedule);
        if nb > 1 {
            let out = state.field.mlp.forward(features[i].view())?;
            let (re, im) = split_outputs(&out, &grids[i])?;
            psi.psi[i] = op.apply(&partition.embed(i, &re)?, &partition.embed(i, &im)?)?;
        }
    }
    let e = log_entry(
        &state,
        config.iterations,
        grid,
        partition,
        &op,
        stack,
        target,
        weights,
        denoiser,
        &mut psi,
    )?;
    state.history.push(e);
    Ok(state)
}

/// Writes the training log as CSV.
pub fn write_log_csv(path: &Path, history: &[LogEntry]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::Format {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })?;
    for e in history {
        w.serialize(e).map_err(|e| Error::Format {
            path: path.to_path_buf(),
            reason: e.to_string(),
        })?;
    }
    w.flush()?;
    Ok(())
}

/// Renders the trained field on its training grid.
pub fn reconstruct_volume(state: &TrainState, grid: &Grid3D) -> Result<PermittivityVolume> {
    state.field.render_grid(grid)
}
