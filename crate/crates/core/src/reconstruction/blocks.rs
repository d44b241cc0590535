//! Lateral block partition with padding, view enlargement and feathering.
//!
//! The lateral grid is cut into a `bx × by` array of near-equal core tiles.
//! Each core is padded by `p` voxels (clipped to the grid) for rendering,
//! and enlarged by a further `margin` voxels for the measurement view.
//! Overlapping padded blocks are blended with linear ramps of width `2p`
//! centred on every internal tile boundary; the ramps of all blocks sum to
//! one at every voxel.

use ndarray::{Array2, Array3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::volume::Grid3D;

/// Half-open lateral index rectangle `[x0, x1) × [y0, y1)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rect {
    pub x0: usize,
    pub x1: usize,
    pub y0: usize,
    pub y1: usize,
}

impl Rect {
    pub fn full(nx: usize, ny: usize) -> Self {
        Self { x0: 0, x1: nx, y0: 0, y1: ny }
    }

    pub fn width(&self) -> usize {
        self.x1 - self.x0
    }

    pub fn height(&self) -> usize {
        self.y1 - self.y0
    }

    pub fn len(&self) -> usize {
        self.width() * self.height()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn contains(&self, ix: usize, iy: usize) -> bool {
        (self.x0..self.x1).contains(&ix) && (self.y0..self.y1).contains(&iy)
    }

    /// Grows by `m` on every side, clipped to `nx × ny`.
    pub fn expand(&self, m: usize, nx: usize, ny: usize) -> Self {
        Self {
            x0: self.x0.saturating_sub(m),
            x1: (self.x1 + m).min(nx),
            y0: self.y0.saturating_sub(m),
            y1: (self.y1 + m).min(ny),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Block {
    pub core: Rect,
    pub padded: Rect,
    pub view: Rect,
    /// Feathering weights over `padded`.
    pub weights: Array2<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BlockPartition {
    pub nx: usize,
    pub ny: usize,
    pub padding: usize,
    pub margin: usize,
    pub blocks: Vec<Block>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PartitionConfig {
    pub blocks: usize,
    #[serde(default = "default_padding")]
    pub padding: usize,
    #[serde(default = "default_padding")]
    pub margin: usize,
}

fn default_padding() -> usize {
    4
}

impl Default for PartitionConfig {
    fn default() -> Self {
        Self {
            blocks: 1,
            padding: default_padding(),
            margin: default_padding(),
        }
    }
}

/// Most square factorization `b = bx · by` with `bx ≤ by`.
fn factor(b: usize) -> (usize, usize) {
    let mut bx = (b as f64).sqrt().floor() as usize;
    while bx > 1 && b % bx != 0 {
        bx -= 1;
    }
    (bx.max(1), b / bx.max(1))
}

fn bounds(n: usize, parts: usize) -> Vec<usize> {
    (0..=parts).map(|k| (k * n + parts / 2) / parts).collect()
}

/// Weight along one axis for the tile `[lo, hi)` whose neighbours exist on
/// the sides flagged `left` / `right`.
fn ramp(i: usize, lo: usize, hi: usize, p: usize, left: bool, right: bool) -> f64 {
    let rise = |b: usize| {
        if p == 0 {
            return if i >= b { 1.0 } else { 0.0 };
        }
        ((i as f64 - b as f64 + p as f64 + 0.5) / (2 * p) as f64).clamp(0.0, 1.0)
    };
    let l = if left { rise(lo) } else { 1.0 };
    let r = if right { 1.0 - rise(hi) } else { 1.0 };
    l * r
}

pub fn partition_blocks(grid: &Grid3D, b: usize, padding: usize, margin: usize) -> Result<BlockPartition> {
    let (nx, ny) = (grid.nx, grid.ny);
    if b == 0 {
        return Err(Error::InvalidParameter("block count must be >= 1".into()));
    }
    let (bx, by) = if nx >= ny { (factor(b).1, factor(b).0) } else { factor(b) };
    if bx > nx || by > ny {
        return Err(Error::InvalidParameter(format!(
            "{b} blocks do not fit a {nx}x{ny} lateral grid"
        )));
    }
    let xs = bounds(nx, bx);
    let ys = bounds(ny, by);
    let min_core = xs.windows(2).chain(ys.windows(2)).map(|w| w[1] - w[0]).min().unwrap_or(0);
    if b > 1 && 2 * padding > min_core {
        return Err(Error::InvalidParameter(format!(
            "padding {padding} too wide for {min_core}-voxel tiles (need 2p <= tile size)"
        )));
    }
    let mut blocks = Vec::with_capacity(b);
    for kx in 0..bx {
        for ky in 0..by {
            let core = Rect {
                x0: xs[kx],
                x1: xs[kx + 1],
                y0: ys[ky],
                y1: ys[ky + 1],
            };
            let padded = if b == 1 { core } else { core.expand(padding, nx, ny) };
            let view = if b == 1 { core } else { padded.expand(margin, nx, ny) };
            let weights = Array2::from_shape_fn((padded.width(), padded.height()), |(i, j)| {
                let wx = ramp(padded.x0 + i, core.x0, core.x1, padding, kx > 0, kx + 1 < bx);
                let wy = ramp(padded.y0 + j, core.y0, core.y1, padding, ky > 0, ky + 1 < by);
                wx * wy
            });
            blocks.push(Block {
                core,
                padded,
                view,
                weights,
            });
        }
    }
    Ok(BlockPartition {
        nx,
        ny,
        padding,
        margin,
        blocks,
    })
}

impl BlockPartition {
    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    pub fn block(&self, i: usize) -> Result<&Block> {
        self.blocks.get(i).ok_or(Error::UnknownBlock(i))
    }

    /// Places the feathered block volume `w ⊙ v` into a zero full-size volume.
    pub fn embed(&self, i: usize, v: &Array3<f64>) -> Result<Array3<f64>> {
        let blk = self.block(i)?;
        let nz = v.dim().0;
        if v.dim() != (nz, blk.padded.width(), blk.padded.height()) {
            return Err(Error::shape(&[nz, blk.padded.width(), blk.padded.height()], v.shape()));
        }
        let mut out = Array3::zeros((nz, self.nx, self.ny));
        for z in 0..nz {
            for i in 0..blk.padded.width() {
                for j in 0..blk.padded.height() {
                    out[[z, blk.padded.x0 + i, blk.padded.y0 + j]] = blk.weights[[i, j]] * v[[z, i, j]];
                }
            }
        }
        Ok(out)
    }

    /// Transpose of [`Self::embed`]: crops to the padded rectangle and
    /// multiplies by the feathering weights.
    pub fn embed_adjoint(&self, i: usize, full: &Array3<f64>) -> Result<Array3<f64>> {
        let blk = self.block(i)?;
        let nz = full.dim().0;
        Ok(Array3::from_shape_fn((nz, blk.padded.width(), blk.padded.height()), |(z, i, j)| {
            blk.weights[[i, j]] * full[[z, blk.padded.x0 + i, blk.padded.y0 + j]]
        }))
    }

    /// Crops a full-size volume to block `i`'s padded rectangle.
    pub fn crop(&self, i: usize, full: &Array3<f64>) -> Result<Array3<f64>> {
        let blk = self.block(i)?;
        let r = blk.padded;
        Ok(full.slice(ndarray::s![.., r.x0..r.x1, r.y0..r.y1]).to_owned())
    }

    /// Feathered assembly of per-block volumes into the full grid.
    pub fn assemble(&self, parts: &[Array3<f64>]) -> Result<Array3<f64>> {
        if parts.len() != self.len() {
            return Err(Error::shape(&[self.len()], &[parts.len()]));
        }
        let nz = parts.first().map(|p| p.dim().0).unwrap_or(0);
        let mut out = Array3::zeros((nz, self.nx, self.ny));
        for (i, p) in parts.iter().enumerate() {
            out += &self.embed(i, p)?;
        }
        Ok(out)
    }
}
