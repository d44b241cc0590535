//! Neural-field reconstruction for intensity diffraction tomography.
//!
//! The crate models a weakly scattering sample as a permittivity contrast
//! on a z-sliced grid, simulates background-removed intensity images with
//! the linearized (first Born) forward model, and reconstructs the sample
//! either with a closed-form Tikhonov solver or by fitting a coordinate MLP
//! through the forward model with block-wise Adam.

pub mod config;
pub mod denoiser;
pub mod error;
pub mod fft;
pub mod field;
pub mod io;
pub mod optics;
pub mod optim;
pub mod pipeline;
pub mod reconstruction;
pub mod simulate;
pub mod tikhonov;
pub mod volume;

pub use error::{Error, Result};
