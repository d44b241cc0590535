//! Coordinate-based neural representation of the permittivity contrast.

mod encoding;
mod mlp;

pub use encoding::{
    gaussian_encode, gaussian_matrix, positional_encode, positional_encode_into, radial_encode, Encoder,
    EncodingConfig, EncodingKind,
};
pub use mlp::{Cache, Mlp, MlpConfig, CHUNK, OUTPUTS};

use ndarray::{Array2, Array3};
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::volume::{grid_coords, Grid3D, PermittivityVolume};

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldConfig {
    #[serde(default)]
    pub encoding: EncodingConfig,
    #[serde(default)]
    pub mlp: MlpConfig,
}

/// Encoder followed by the MLP: `[-1, 1]³ → (Δε_re, Δε_im)`.
#[derive(Clone, Debug, PartialEq)]
pub struct NeuralField {
    pub encoder: Encoder,
    pub mlp: Mlp,
}

/// Network outputs for a batch of coordinates.
#[derive(Clone, Debug, PartialEq)]
pub struct Rendering {
    /// `(n, 2)` rows of `(Δε_re, Δε_im)`.
    pub values: Array2<f64>,
    /// Number of queries outside `[-1, 1]³`. They are evaluated anyway but
    /// the network was never trained there.
    pub extrapolated: usize,
}

impl NeuralField {
    pub fn new(config: &FieldConfig) -> Result<Self> {
        let encoder = Encoder::new(config.encoding.clone())?;
        let mlp = Mlp::new(config.mlp.clone(), encoder.width())?;
        Ok(Self { encoder, mlp })
    }

    pub fn config(&self) -> FieldConfig {
        FieldConfig {
            encoding: self.encoder.config().clone(),
            mlp: self.mlp.config().clone(),
        }
    }

    pub fn render(&self, coords: &[[f64; 3]]) -> Result<Rendering> {
        let extrapolated = coords
            .iter()
            .filter(|c| c.iter().any(|v| !(-1.0..=1.0).contains(v)))
            .count();
        let features = self.encoder.encode_batch(coords);
        Ok(Rendering {
            values: self.mlp.forward(features.view())?,
            extrapolated,
        })
    }

    /// Evaluates the field on every voxel of `grid`.
    pub fn render_grid(&self, grid: &Grid3D) -> Result<PermittivityVolume> {
        grid.validate()?;
        let r = self.render(&grid_coords(grid))?;
        let (re, im) = split_outputs(&r.values, grid)?;
        PermittivityVolume::new(*grid, re, im)
    }
}

/// Reshapes `(n, 2)` network outputs in storage order into `(re, im)` volumes.
pub fn split_outputs(values: &Array2<f64>, grid: &Grid3D) -> Result<(Array3<f64>, Array3<f64>)> {
    let shape = grid.shape();
    if values.dim() != (grid.voxel_count(), OUTPUTS) {
        return Err(crate::error::Error::shape(&[grid.voxel_count(), OUTPUTS], values.shape()));
    }
    let re = Array3::from_shape_vec(shape, values.column(0).to_vec()).expect("voxel count checked");
    let im = Array3::from_shape_vec(shape, values.column(1).to_vec()).expect("voxel count checked");
    Ok((re, im))
}

/// Inverse of [`split_outputs`].
pub fn merge_outputs(re: &Array3<f64>, im: &Array3<f64>) -> Array2<f64> {
    let n = re.len();
    let mut out = Array2::zeros((n, OUTPUTS));
    for (row, (a, b)) in out.rows_mut().into_iter().zip(re.iter().zip(im.iter())) {
        let mut row = row;
        row[0] = *a;
        row[1] = *b;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> NeuralField {
        NeuralField::new(&FieldConfig {
            encoding: EncodingConfig::radial(3, 2, 3),
            mlp: MlpConfig {
                layers: 4,
                width: 12,
                output_scale: 1.0,
                seed: 5,
                ..Default::default()
            },
        })
        .unwrap()
    }

    #[test]
    fn upsampled_render_agrees_on_shared_voxels() {
        let f = small();
        let g = Grid3D::centered(9, 7, 3, 0.2, 0.2, 0.5).unwrap();
        let base = f.render_grid(&g).unwrap();
        let fine = f.render_grid(&g.upsampled(2, 3, 2).unwrap()).unwrap();
        for q in 0..3 {
            for i in 0..9 {
                for j in 0..7 {
                    assert_eq!(base.re[[q, i, j]], fine.re[[2 * q, 2 * i, 3 * j]]);
                    assert_eq!(base.im[[q, i, j]], fine.im[[2 * q, 2 * i, 3 * j]]);
                }
            }
        }
    }

    #[test]
    fn extrapolation_is_flagged() {
        let f = small();
        let r = f.render(&[[0.0, 0.0, 0.0], [1.2, 0.0, 0.0], [0.0, -1.0, 1.0]]).unwrap();
        assert_eq!(r.extrapolated, 1);
        assert!(r.values.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn split_merge_round_trip() {
        let g = Grid3D::centered(3, 2, 2, 1.0, 1.0, 1.0).unwrap();
        let v = Array2::from_shape_fn((12, 2), |(i, j)| (i * 2 + j) as f64);
        let (re, im) = split_outputs(&v, &g).unwrap();
        assert_eq!(re[[1, 0, 1]], 14.0);
        assert_eq!(merge_outputs(&re, &im), v);
    }
}
