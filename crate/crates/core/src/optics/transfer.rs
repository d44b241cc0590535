//! Phase and absorption transfer functions of the linearized IDT model.
//!
//! For a plane wave with lateral wave vector `u_p` and slice depth `z_q`,
//!
//! ```text
//! H_ph(u) =  j k0²/2 S(u_p) [ P(u)  P(u-u_p) e^{-j(η(u-u_p)-η_p) z_q} / η(u-u_p)
//!                            - P(-u_p) P(u+u_p) e^{+j(η(u+u_p)-η_p) z_q} / η(u+u_p) ]
//! H_ab(u) = -k0²/2 S(u_p) [ P(u_p) P(u-u_p) e^{...} / η(u-u_p)
//!                            ∓ P(-u_p) P(u+u_p) e^{...} / η(u+u_p) ]
//! ```
//!
//! with `η(u) = sqrt(k0² - |u|²)` and `η_p = η(u_p)`. Both expressions are
//! normalized by the incident intensity, which is 1 for simulated sources.
//! [`TfConvention`] selects the pupil factor of the first phase term and
//! the sign between the two absorption terms.

use ndarray::{Array2, Array4, Axis};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::setup::{IlluminationSource, OpticalSetup};
use crate::error::{Error, Result};
use crate::fft::angular_frequencies;
use crate::volume::Grid3D;

/// Pupil factor multiplying the first (`u - u_p`) term of the phase TF.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PhasePupil {
    /// `P*(u)`.
    #[default]
    AtFrequency,
    /// `P*(u_p)`, matching the absorption TF.
    AtIllumination,
}

/// Sign joining the two absorption-TF terms.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AbsorptionSign {
    #[default]
    Difference,
    Sum,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TfConvention {
    pub phase_pupil: PhasePupil,
    pub absorption_sign: AbsorptionSign,
}

impl TfConvention {
    /// Convention under which both transfer functions are Hermitian, so the
    /// forward model maps real volumes to real images without projection.
    pub fn hermitian() -> Self {
        Self {
            phase_pupil: PhasePupil::AtIllumination,
            absorption_sign: AbsorptionSign::Sum,
        }
    }
}

/// Ideal binary circular pupil of radius `NA·2π/λ`.
pub fn pupil(u: [f64; 2], na: f64, wavelength: f64) -> f64 {
    let cut = na * 2.0 * std::f64::consts::PI / wavelength;
    if u[0] * u[0] + u[1] * u[1] <= cut * cut {
        1.0
    } else {
        0.0
    }
}

/// Axial wave vector `sqrt(k0² - |u|²)`.
pub fn axial_wavevector(u: [f64; 2], k0: f64) -> Result<f64> {
    let m2 = u[0] * u[0] + u[1] * u[1];
    if m2 > k0 * k0 {
        return Err(Error::Evanescent {
            magnitude: m2.sqrt(),
            k0,
        });
    }
    Ok((k0 * k0 - m2).sqrt())
}

/// Per-frequency factors shared by the phase and absorption TFs.
struct Terms {
    /// `P(u-u_p) e^{-j(η-η_p)z} / η(u-u_p)`, zero off support.
    minus: Complex64,
    /// `P(u+u_p) e^{+j(η-η_p)z} / η(u+u_p)`, zero off support.
    plus: Complex64,
}

struct SourceContext {
    k0: f64,
    cut2: f64,
    eta_p: f64,
    up: [f64; 2],
    z: f64,
}

impl SourceContext {
    fn new(source: &IlluminationSource, z: f64, setup: &OpticalSetup) -> Result<Self> {
        let k0 = setup.k0();
        let eta_p = axial_wavevector(source.u, k0)?;
        Ok(Self {
            k0,
            cut2: setup.cutoff().powi(2),
            eta_p,
            up: source.u,
            z,
        })
    }

    fn in_pupil(&self, u: [f64; 2]) -> bool {
        let m2 = u[0] * u[0] + u[1] * u[1];
        // the strict k0 bound keeps η away from zero when NA·k0 ≥ k0
        m2 <= self.cut2 && m2 < self.k0 * self.k0
    }

    fn propagator(&self, v: [f64; 2], sign: f64) -> Complex64 {
        if !self.in_pupil(v) {
            return Complex64::new(0.0, 0.0);
        }
        let eta = (self.k0 * self.k0 - v[0] * v[0] - v[1] * v[1]).sqrt();
        Complex64::from_polar(1.0 / eta, sign * (eta - self.eta_p) * self.z)
    }

    fn terms(&self, u: [f64; 2]) -> Terms {
        Terms {
            minus: self.propagator([u[0] - self.up[0], u[1] - self.up[1]], -1.0),
            plus: self.propagator([u[0] + self.up[0], u[1] + self.up[1]], 1.0),
        }
    }

    fn pupil_at(&self, u: [f64; 2]) -> f64 {
        if self.in_pupil(u) {
            1.0
        } else {
            0.0
        }
    }
}

fn evaluate_tf(
    source: &IlluminationSource,
    q: usize,
    grid: &Grid3D,
    setup: &OpticalSetup,
    mut value: impl FnMut(&SourceContext, [f64; 2], &Terms) -> Complex64,
) -> Result<Array2<Complex64>> {
    if q >= grid.nz {
        return Err(Error::OutOfBounds { index: q, len: grid.nz });
    }
    let ctx = SourceContext::new(source, grid.slice_z(q), setup)?;
    let ux = angular_frequencies(grid.nx, grid.dx);
    let uy = angular_frequencies(grid.ny, grid.dy);
    Ok(Array2::from_shape_fn((grid.nx, grid.ny), |(i, j)| {
        let u = [ux[i], uy[j]];
        let t = ctx.terms(u);
        value(&ctx, u, &t)
    }))
}

/// Phase transfer function of `source` for slice `q` on the lateral
/// frequency grid of `grid`.
pub fn phase_tf(
    source: &IlluminationSource,
    q: usize,
    grid: &Grid3D,
    setup: &OpticalSetup,
    convention: TfConvention,
) -> Result<Array2<Complex64>> {
    let scale = Complex64::new(0.0, 0.5 * setup.k0().powi(2) * source.weight);
    evaluate_tf(source, q, grid, setup, |ctx, u, t| {
        let first = match convention.phase_pupil {
            PhasePupil::AtFrequency => ctx.pupil_at(u),
            PhasePupil::AtIllumination => ctx.pupil_at(ctx.up),
        };
        let back = ctx.pupil_at([-ctx.up[0], -ctx.up[1]]);
        scale * (t.minus * first - t.plus * back)
    })
}

/// Absorption transfer function of `source` for slice `q`.
pub fn absorption_tf(
    source: &IlluminationSource,
    q: usize,
    grid: &Grid3D,
    setup: &OpticalSetup,
    convention: TfConvention,
) -> Result<Array2<Complex64>> {
    let scale = -0.5 * setup.k0().powi(2) * source.weight;
    let sign = match convention.absorption_sign {
        AbsorptionSign::Difference => -1.0,
        AbsorptionSign::Sum => 1.0,
    };
    evaluate_tf(source, q, grid, setup, |ctx, _u, t| {
        let first = ctx.pupil_at(ctx.up);
        let back = ctx.pupil_at([-ctx.up[0], -ctx.up[1]]);
        (t.minus * first + t.plus * (sign * back)) * scale
    })
}

/// Transfer functions for every measurement and slice, indexed
/// `[measurement, slice, x, y]`.
#[derive(Clone, Debug, PartialEq)]
pub struct TransferFunctionStack {
    pub grid: Grid3D,
    pub phase: Array4<Complex64>,
    pub absorption: Array4<Complex64>,
}

impl TransferFunctionStack {
    pub fn measurement_count(&self) -> usize {
        self.phase.len_of(Axis(0))
    }

    pub fn slices(&self) -> usize {
        self.phase.len_of(Axis(1))
    }

    pub fn lateral_shape(&self) -> (usize, usize) {
        (self.grid.nx, self.grid.ny)
    }
}

/// Builds the stack for `setup` on `grid`. Multiplexed patterns sum their
/// member sources' transfer functions in source order.
pub fn build_tf_stack(setup: &OpticalSetup, grid: &Grid3D, convention: TfConvention) -> Result<TransferFunctionStack> {
    setup.validate()?;
    grid.validate()?;
    let groups = setup.measurement_groups();
    let shape = (groups.len(), grid.nz, grid.nx, grid.ny);
    let mut phase = Array4::<Complex64>::zeros(shape);
    let mut absorption = Array4::<Complex64>::zeros(shape);
    for (p, members) in groups.iter().enumerate() {
        for &s in members {
            let src = &setup.sources[s];
            for q in 0..grid.nz {
                let ph = phase_tf(src, q, grid, setup, convention)?;
                let ab = absorption_tf(src, q, grid, setup, convention)?;
                let mut dst = phase.index_axis_mut(Axis(0), p);
                let mut dst = dst.index_axis_mut(Axis(0), q);
                dst += &ph;
                let mut dst = absorption.index_axis_mut(Axis(0), p);
                let mut dst = dst.index_axis_mut(Axis(0), q);
                dst += &ab;
            }
        }
    }
    Ok(TransferFunctionStack {
        grid: *grid,
        phase,
        absorption,
    })
}
