//! Closed-form Tikhonov reconstruction.
//!
//! Minimizes `‖A x − y‖² + τ‖x‖²` over both permittivity channels. Taking
//! the real part of the inverse FFT makes the forward model act per
//! frequency through the Hermitian part `H_eff(u) = (H(u) + conj H(−u))/2`
//! of each transfer function, so the normal equations decouple into one
//! `2Q × 2Q` Hermitian system per lateral frequency, solved by Cholesky.
//! A matrix-free conjugate-gradient solver on the real-space normal
//! equations is provided as a cross-check.

use nalgebra::{DMatrix, DVector};
use ndarray::{Array2, Array3, Axis};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fft::{mirror_index, Fft2};
use crate::optics::{IdtOperator, MeasurementSet, TransferFunctionStack};
use crate::volume::{Grid3D, PermittivityVolume};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TikhonovSolver {
    #[default]
    Direct,
    Cg,
}

/// Default τ sweep: one value per decade from 1e-8 to 1e4.
pub fn default_taus() -> Vec<f64> {
    (-8..=4).map(|e| 10f64.powi(e)).collect()
}

/// Per-frequency normal equations, built once and solved for any τ.
#[derive(Clone, Debug)]
pub struct TikhonovSystem {
    grid: Grid3D,
    /// `A^H A` per frequency, row-major `2Q × 2Q`.
    gram: Vec<DMatrix<Complex64>>,
    /// `A^H Y` per frequency.
    rhs: Vec<DVector<Complex64>>,
}

fn check_target(stack: &TransferFunctionStack, meas: &MeasurementSet) -> Result<()> {
    let g = &stack.grid;
    let want = [stack.measurement_count(), g.nx, g.ny];
    if meas.images.shape() != want {
        return Err(Error::shape(&want, meas.images.shape()));
    }
    Ok(())
}

fn check_tau(tau: f64) -> Result<()> {
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(Error::InvalidParameter(format!("tau must be positive, got {tau}")));
    }
    Ok(())
}

impl TikhonovSystem {
    pub fn new(stack: &TransferFunctionStack, meas: &MeasurementSet) -> Result<Self> {
        check_target(stack, meas)?;
        let grid = stack.grid;
        let (nx, ny, nq) = (grid.nx, grid.ny, grid.nz);
        let np = stack.measurement_count();
        let fft = Fft2::new(nx, ny);
        let y_hat: Vec<Array2<Complex64>> = meas
            .images
            .axis_iter(Axis(0))
            .into_par_iter()
            .map(|img| fft.forward_real(&img))
            .collect();
        let (gram, rhs) = (0..nx * ny)
            .into_par_iter()
            .map(|k| {
                let (i, j) = (k / ny, k % ny);
                let (mi, mj) = (mirror_index(i, nx), mirror_index(j, ny));
                let a = DMatrix::from_fn(np, 2 * nq, |p, c| {
                    let h = if c < nq {
                        &stack.phase
                    } else {
                        &stack.absorption
                    };
                    let q = c % nq;
                    0.5 * (h[[p, q, i, j]] + h[[p, q, mi, mj]].conj())
                });
                let y = DVector::from_fn(np, |p, _| y_hat[p][[i, j]]);
                let ah = a.adjoint();
                (&ah * &a, &ah * y)
            })
            .unzip();
        Ok(Self { grid, gram, rhs })
    }

    pub fn grid(&self) -> Grid3D {
        self.grid
    }

    /// Direct solution for one τ.
    pub fn solve(&self, tau: f64) -> Result<PermittivityVolume> {
        check_tau(tau)?;
        let n = self.gram.first().map(|g| g.nrows()).unwrap_or(0);
        let sols: Vec<DVector<Complex64>> = self
            .gram
            .par_iter()
            .zip(self.rhs.par_iter())
            .map(|(g, b)| {
                let mut m = g.clone();
                for d in 0..n {
                    m[(d, d)] += Complex64::new(tau, 0.0);
                }
                m.cholesky()
                    .map(|c| c.solve(b))
                    .ok_or_else(|| Error::InvalidParameter(format!("normal matrix not positive definite at tau {tau}")))
            })
            .collect::<Result<_>>()?;
        self.to_volume(&sols)
    }

    fn to_volume(&self, sols: &[DVector<Complex64>]) -> Result<PermittivityVolume> {
        let g = self.grid;
        let (nx, ny, nq) = (g.nx, g.ny, g.nz);
        let fft = Fft2::new(nx, ny);
        let slices: Vec<Array2<f64>> = (0..2 * nq)
            .into_par_iter()
            .map(|c| {
                let spec = Array2::from_shape_fn((nx, ny), |(i, j)| sols[i * ny + j][c]);
                fft.inverse_real(spec)
            })
            .collect();
        let mut re = Array3::zeros(g.shape());
        let mut im = Array3::zeros(g.shape());
        for q in 0..nq {
            re.index_axis_mut(Axis(0), q).assign(&slices[q]);
            im.index_axis_mut(Axis(0), q).assign(&slices[nq + q]);
        }
        PermittivityVolume::new(g, re, im)
    }
}

/// One-shot direct Tikhonov solve.
pub fn tikhonov_solve(stack: &TransferFunctionStack, meas: &MeasurementSet, tau: f64) -> Result<PermittivityVolume> {
    TikhonovSystem::new(stack, meas)?.solve(tau)
}

/// Conjugate gradients on `(AᵀA + τI) x = Aᵀy`, stopping once the residual
/// norm drops below `tol · ‖Aᵀy‖` or after `max_iter` iterations.
pub fn tikhonov_cg(
    stack: &TransferFunctionStack,
    meas: &MeasurementSet,
    tau: f64,
    tol: f64,
    max_iter: usize,
) -> Result<PermittivityVolume> {
    check_tau(tau)?;
    check_target(stack, meas)?;
    let op = IdtOperator::new(stack);
    let normal = |v: &PermittivityVolume| -> Result<PermittivityVolume> {
        let mut out = op.adjoint(&op.forward(v)?)?;
        out.add_scaled(tau, v);
        Ok(out)
    };
    let b = op.adjoint(meas)?;
    let bnorm = b.norm();
    let mut x = PermittivityVolume::zeros(stack.grid);
    if bnorm == 0.0 {
        return Ok(x);
    }
    let mut r = b.clone();
    let mut p = r.clone();
    let mut rr = r.dot(&r);
    for _ in 0..max_iter {
        if rr.sqrt() <= tol * bnorm {
            break;
        }
        let ap = normal(&p)?;
        let alpha = rr / p.dot(&ap);
        x.add_scaled(alpha, &p);
        r.add_scaled(-alpha, &ap);
        let rr_new = r.dot(&r);
        p = {
            let mut next = r.clone();
            next.add_scaled(rr_new / rr, &p);
            next
        };
        rr = rr_new;
    }
    Ok(x)
}

/// Relative normal-equation residual `‖Aᵀ(Ax − y) + τx‖ / ‖Aᵀy‖`.
pub fn normal_residual(
    stack: &TransferFunctionStack,
    meas: &MeasurementSet,
    x: &PermittivityVolume,
    tau: f64,
) -> Result<f64> {
    let op = IdtOperator::new(stack);
    let mut resid = op.forward(x)?;
    resid.images -= &meas.images;
    let mut g = op.adjoint(&resid)?;
    g.add_scaled(tau, x);
    let den = op.adjoint(meas)?.norm();
    Ok(if den == 0.0 { g.norm() } else { g.norm() / den })
}

/// Outcome of a τ sweep.
#[derive(Clone, Debug)]
pub struct TauSweep {
    /// `(τ, score)` for every τ, in input order.
    pub scores: Vec<(f64, f64)>,
    pub best_tau: f64,
    pub best_score: f64,
    pub best: PermittivityVolume,
}

/// Solves for each τ and keeps the one maximizing `score` (e.g. PSNR
/// against a reference).
pub fn tau_sweep(
    system: &TikhonovSystem,
    taus: &[f64],
    mut score: impl FnMut(&PermittivityVolume) -> Result<f64>,
) -> Result<TauSweep> {
    let mut scores = Vec::with_capacity(taus.len());
    let mut best: Option<(f64, f64, PermittivityVolume)> = None;
    for &tau in taus {
        let vol = system.solve(tau)?;
        let s = score(&vol)?;
        scores.push((tau, s));
        if best.as_ref().is_none_or(|b| s > b.1) {
            best = Some((tau, s, vol));
        }
    }
    let (best_tau, best_score, best) =
        best.ok_or_else(|| Error::InvalidParameter("tau sweep needs at least one value".into()))?;
    Ok(TauSweep {
        scores,
        best_tau,
        best_score,
        best,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn taus_cover_decades() {
        let t = default_taus();
        assert_eq!(t.len(), 13);
        assert_eq!(t[0], 1e-8);
        assert_eq!(t[12], 1e4);
    }
}
