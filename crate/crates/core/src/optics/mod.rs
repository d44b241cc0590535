//! Fourier-optics model of intensity diffraction tomography: illumination
//! setups, per-slice transfer functions, and the linear forward operator.

mod operator;
mod setup;
mod transfer;

pub use operator::{adjoint, forward, imaginary_residue, IdtOperator, MeasurementSet};
pub use setup::{resolution_limits, wavenumber, IlluminationSource, Modality, OpticalSetup};
pub use transfer::{
    absorption_tf, axial_wavevector, build_tf_stack, phase_tf, pupil, AbsorptionSign, PhasePupil, TfConvention,
    TransferFunctionStack,
};
