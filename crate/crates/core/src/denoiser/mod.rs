//! Plug-in 2D denoisers `D = I − R` for the in-plane regularizer.

mod classical;
mod cnn;
mod texture;

pub use classical::{gaussian_blur, gaussian_kernel, symmetric_index};
pub use cnn::{train_dncnn, Dncnn, DncnnConfig, DncnnTraining};
pub use texture::{make_texture, make_texture_dataset, TextureDataset, TexturePair};

use ndarray::{Array2, Array3, ArrayView2, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Selectable noise strengths, in units of a `[0, 1]` image range.
pub const NOISE_LEVELS: [f64; 5] = [0.02, 0.04, 0.06, 0.08, 0.10];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DenoiserKind {
    Identity,
    GaussianResidual,
    Cnn,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DenoiserHandle {
    pub kind: DenoiserKind,
    /// Noise strength. For the Gaussian residual it is also the blur
    /// standard deviation in pixels.
    pub sigma: f64,
    pub cnn: Option<Dncnn>,
}

impl DenoiserHandle {
    pub fn identity() -> Self {
        Self {
            kind: DenoiserKind::Identity,
            sigma: 0.0,
            cnn: None,
        }
    }

    pub fn gaussian(sigma: f64) -> Result<Self> {
        check_sigma(sigma)?;
        Ok(Self {
            kind: DenoiserKind::GaussianResidual,
            sigma,
            cnn: None,
        })
    }

    pub fn cnn(net: Dncnn, sigma: f64) -> Result<Self> {
        check_sigma(sigma)?;
        Ok(Self {
            kind: DenoiserKind::Cnn,
            sigma,
            cnn: Some(net),
        })
    }

    pub fn is_identity(&self) -> bool {
        self.kind == DenoiserKind::Identity
    }

    /// Residual `R(image)`; zero for the identity.
    pub fn residual(&self, image: &ArrayView2<f64>) -> Result<Array2<f64>> {
        if image.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("image contains non-finite values".into()));
        }
        match self.kind {
            DenoiserKind::Identity => Ok(Array2::zeros(image.dim())),
            DenoiserKind::GaussianResidual => Ok(image - &gaussian_blur(image, self.sigma)),
            DenoiserKind::Cnn => self
                .cnn
                .as_ref()
                .ok_or_else(|| Error::InvalidParameter("cnn denoiser without weights".into()))?
                .residual(image),
        }
    }

    /// `D(image) = image − R(image)`.
    pub fn denoise(&self, image: &ArrayView2<f64>) -> Result<Array2<f64>> {
        if self.is_identity() {
            return Ok(image.to_owned());
        }
        Ok(image - &self.residual(image)?)
    }

    /// Residual of every z slice of a `[z, x, y]` volume.
    pub fn residual_volume(&self, vol: &Array3<f64>) -> Result<Array3<f64>> {
        let slices: Vec<Array2<f64>> = vol
            .axis_iter(Axis(0))
            .into_par_iter()
            .map(|s| self.residual(&s))
            .collect::<Result<_>>()?;
        let mut out = Array3::zeros(vol.dim());
        for (q, s) in slices.into_iter().enumerate() {
            out.index_axis_mut(Axis(0), q).assign(&s);
        }
        Ok(out)
    }
}

fn check_sigma(sigma: f64) -> Result<()> {
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::InvalidParameter(format!("denoiser strength must be > 0, got {sigma}")));
    }
    Ok(())
}
