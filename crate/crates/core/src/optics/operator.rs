//! The linear measurement operator `A` and its adjoint.
//!
//! `forward` computes, per measurement `p`,
//! `y_p = Re F⁻¹ Σ_q (H_ph[p,q] · F Δε_re,q + H_ab[p,q] · F Δε_im,q)`.
//! The real part is taken because the transfer functions need not be
//! Hermitian; `adjoint` is the exact transpose of that real-valued map.

use ndarray::{Array2, Array3, Axis, Zip};
use num_complex::Complex64;
use rayon::prelude::*;

use super::transfer::TransferFunctionStack;
use crate::error::{Error, Result};
use crate::fft::Fft2;
use crate::volume::PermittivityVolume;

/// Background-removed intensity images indexed `[measurement, x, y]`.
#[derive(Clone, Debug, PartialEq)]
pub struct MeasurementSet {
    pub images: Array3<f64>,
}

impl MeasurementSet {
    pub fn zeros(count: usize, nx: usize, ny: usize) -> Self {
        Self {
            images: Array3::zeros((count, nx, ny)),
        }
    }

    pub fn count(&self) -> usize {
        self.images.len_of(Axis(0))
    }

    pub fn lateral_shape(&self) -> (usize, usize) {
        let (_, nx, ny) = self.images.dim();
        (nx, ny)
    }

    pub fn dot(&self, other: &Self) -> f64 {
        Zip::from(&self.images).and(&other.images).fold(0.0, |acc, a, b| acc + a * b)
    }

    pub fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }
}

/// Applies `A` and `Aᵀ` for one transfer-function stack, reusing FFT plans.
#[derive(Clone, Debug)]
pub struct IdtOperator<'a> {
    stack: &'a TransferFunctionStack,
    fft: Fft2,
}

impl<'a> IdtOperator<'a> {
    pub fn new(stack: &'a TransferFunctionStack) -> Self {
        let (nx, ny) = stack.lateral_shape();
        Self {
            stack,
            fft: Fft2::new(nx, ny),
        }
    }

    pub fn stack(&self) -> &TransferFunctionStack {
        self.stack
    }

    fn check_volume(&self, re: &Array3<f64>, im: &Array3<f64>) -> Result<()> {
        let g = &self.stack.grid;
        let want = [g.nz, g.nx, g.ny];
        for a in [re, im] {
            if a.shape() != want {
                return Err(Error::shape(&want, a.shape()));
            }
        }
        Ok(())
    }

    fn check_measurements(&self, meas: &MeasurementSet) -> Result<()> {
        let g = &self.stack.grid;
        let want = [self.stack.measurement_count(), g.nx, g.ny];
        if meas.images.shape() != want {
            return Err(Error::shape(&want, meas.images.shape()));
        }
        Ok(())
    }

    fn slice_spectra(&self, vol: &Array3<f64>) -> Vec<Array2<Complex64>> {
        vol.axis_iter(Axis(0))
            .into_par_iter()
            .map(|s| self.fft.forward_real(&s))
            .collect()
    }

    /// Forward model on raw `(re, im)` arrays shaped like the stack grid.
    pub fn apply(&self, re: &Array3<f64>, im: &Array3<f64>) -> Result<MeasurementSet> {
        self.check_volume(re, im)?;
        let re_hat = self.slice_spectra(re);
        let im_hat = self.slice_spectra(im);
        let (nx, ny) = self.stack.lateral_shape();
        let images: Vec<Array2<f64>> = (0..self.stack.measurement_count())
            .into_par_iter()
            .map(|p| {
                let mut acc = Array2::<Complex64>::zeros((nx, ny));
                let hp = self.stack.phase.index_axis(Axis(0), p);
                let ha = self.stack.absorption.index_axis(Axis(0), p);
                for q in 0..re_hat.len() {
                    Zip::from(&mut acc)
                        .and(&hp.index_axis(Axis(0), q))
                        .and(&re_hat[q])
                        .and(&ha.index_axis(Axis(0), q))
                        .and(&im_hat[q])
                        .for_each(|a, &h1, &x1, &h2, &x2| *a += h1 * x1 + h2 * x2);
                }
                self.fft.inverse_real(acc)
            })
            .collect();
        Ok(MeasurementSet {
            images: stack_images(&images, nx, ny),
        })
    }

    pub fn forward(&self, vol: &PermittivityVolume) -> Result<MeasurementSet> {
        self.apply(&vol.re, &vol.im)
    }

    /// Transpose of [`Self::apply`], returning `(re, im)` arrays.
    pub fn apply_adjoint(&self, meas: &MeasurementSet) -> Result<(Array3<f64>, Array3<f64>)> {
        self.check_measurements(meas)?;
        let y_hat: Vec<Array2<Complex64>> = meas
            .images
            .axis_iter(Axis(0))
            .into_par_iter()
            .map(|img| self.fft.forward_real(&img))
            .collect();
        let (nx, ny) = self.stack.lateral_shape();
        let nz = self.stack.slices();
        let slices: Vec<(Array2<f64>, Array2<f64>)> = (0..nz)
            .into_par_iter()
            .map(|q| {
                let mut acc_re = Array2::<Complex64>::zeros((nx, ny));
                let mut acc_im = Array2::<Complex64>::zeros((nx, ny));
                for (p, yp) in y_hat.iter().enumerate() {
                    let hp = self.stack.phase.index_axis(Axis(0), p);
                    let ha = self.stack.absorption.index_axis(Axis(0), p);
                    Zip::from(&mut acc_re)
                        .and(&mut acc_im)
                        .and(&hp.index_axis(Axis(0), q))
                        .and(&ha.index_axis(Axis(0), q))
                        .and(yp)
                        .for_each(|r, i, &h1, &h2, &y| {
                            *r += h1.conj() * y;
                            *i += h2.conj() * y;
                        });
                }
                (self.fft.inverse_real(acc_re), self.fft.inverse_real(acc_im))
            })
            .collect();
        let mut re = Array3::zeros((nz, nx, ny));
        let mut im = Array3::zeros((nz, nx, ny));
        for (q, (r, i)) in slices.into_iter().enumerate() {
            re.index_axis_mut(Axis(0), q).assign(&r);
            im.index_axis_mut(Axis(0), q).assign(&i);
        }
        Ok((re, im))
    }

    pub fn adjoint(&self, meas: &MeasurementSet) -> Result<PermittivityVolume> {
        let (re, im) = self.apply_adjoint(meas)?;
        Ok(PermittivityVolume {
            grid: self.stack.grid,
            re,
            im,
        })
    }
}

fn stack_images(images: &[Array2<f64>], nx: usize, ny: usize) -> Array3<f64> {
    let mut out = Array3::zeros((images.len(), nx, ny));
    for (p, img) in images.iter().enumerate() {
        out.index_axis_mut(Axis(0), p).assign(img);
    }
    out
}

/// Forward model `A x`.
pub fn forward(stack: &TransferFunctionStack, vol: &PermittivityVolume) -> Result<MeasurementSet> {
    vol.check_grid(&stack.grid)?;
    IdtOperator::new(stack).forward(vol)
}

/// Adjoint `Aᵀ y`.
pub fn adjoint(stack: &TransferFunctionStack, meas: &MeasurementSet) -> Result<PermittivityVolume> {
    IdtOperator::new(stack).adjoint(meas)
}

/// Magnitude of the imaginary residue `Im F⁻¹ ŷ_p` relative to the real
/// signal, before it is discarded by the forward model.
pub fn imaginary_residue(stack: &TransferFunctionStack, vol: &PermittivityVolume) -> Result<f64> {
    let op = IdtOperator::new(stack);
    op.check_volume(&vol.re, &vol.im)?;
    let (nx, ny) = stack.lateral_shape();
    let spectra: Vec<(Array2<Complex64>, Array2<Complex64>)> = vol
        .re
        .axis_iter(Axis(0))
        .zip(vol.im.axis_iter(Axis(0)))
        .map(|(r, i)| (op.fft.forward_real(&r), op.fft.forward_real(&i)))
        .collect();
    let (mut re_sq, mut im_sq) = (0.0, 0.0);
    for p in 0..stack.measurement_count() {
        let mut acc = Array2::<Complex64>::zeros((nx, ny));
        for (q, (xr, xi)) in spectra.iter().enumerate() {
            let hp = stack.phase.slice(ndarray::s![p, q, .., ..]);
            let ha = stack.absorption.slice(ndarray::s![p, q, .., ..]);
            Zip::from(&mut acc)
                .and(&hp)
                .and(xr)
                .and(&ha)
                .and(xi)
                .for_each(|a, &h1, &x1, &h2, &x2| *a += h1 * x1 + h2 * x2);
        }
        op.fft.inverse_in_place(&mut acc);
        for v in acc.iter() {
            re_sq += v.re * v.re;
            im_sq += v.im * v.im;
        }
    }
    Ok(if re_sq == 0.0 { im_sq.sqrt() } else { (im_sq / re_sq).sqrt() })
}
