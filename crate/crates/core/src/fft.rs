//! Two-dimensional FFTs over lateral slices.
//!
//! Forward transforms are unnormalized; inverse transforms carry the `1/N`
//! factor, so `inverse(forward(x)) == x`.

use std::sync::Arc;

use ndarray::{Array2, ArrayView2};
use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

#[derive(Clone)]
pub struct Fft2 {
    nx: usize,
    ny: usize,
    fwd_x: Arc<dyn Fft<f64>>,
    fwd_y: Arc<dyn Fft<f64>>,
    inv_x: Arc<dyn Fft<f64>>,
    inv_y: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for Fft2 {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Fft2({}x{})", self.nx, self.ny)
    }
}

impl Fft2 {
    pub fn new(nx: usize, ny: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            nx,
            ny,
            fwd_x: planner.plan_fft_forward(nx),
            fwd_y: planner.plan_fft_forward(ny),
            inv_x: planner.plan_fft_inverse(nx),
            inv_y: planner.plan_fft_inverse(ny),
        }
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.nx, self.ny)
    }

    fn apply(&self, data: &mut Array2<Complex64>, along_y: &Arc<dyn Fft<f64>>, along_x: &Arc<dyn Fft<f64>>) {
        debug_assert_eq!(data.dim(), (self.nx, self.ny));
        // rows are contiguous in standard layout
        let slice = data.as_slice_mut().expect("standard layout");
        along_y.process(slice);
        let mut col = vec![Complex64::new(0.0, 0.0); self.nx];
        for j in 0..self.ny {
            for i in 0..self.nx {
                col[i] = slice[i * self.ny + j];
            }
            along_x.process(&mut col);
            for i in 0..self.nx {
                slice[i * self.ny + j] = col[i];
            }
        }
    }

    pub fn forward_in_place(&self, data: &mut Array2<Complex64>) {
        self.apply(data, &self.fwd_y, &self.fwd_x);
    }

    pub fn inverse_in_place(&self, data: &mut Array2<Complex64>) {
        self.apply(data, &self.inv_y, &self.inv_x);
        let scale = 1.0 / (self.nx * self.ny) as f64;
        data.mapv_inplace(|v| v * scale);
    }

    pub fn forward_real(&self, data: &ArrayView2<f64>) -> Array2<Complex64> {
        let mut c = data.mapv(|v| Complex64::new(v, 0.0));
        if !c.is_standard_layout() {
            c = c.as_standard_layout().to_owned();
        }
        self.forward_in_place(&mut c);
        c
    }

    /// Inverse transform, returning the real part.
    pub fn inverse_real(&self, mut spec: Array2<Complex64>) -> Array2<f64> {
        self.inverse_in_place(&mut spec);
        spec.mapv(|v| v.re)
    }
}

/// Angular DFT frequencies `2π·fftfreq(n, d)` in rad/µm, DC at index 0.
pub fn angular_frequencies(n: usize, d: f64) -> Vec<f64> {
    let step = 2.0 * std::f64::consts::PI / (n as f64 * d);
    (0..n)
        .map(|i| {
            let k = if i < n.div_ceil(2) { i as isize } else { i as isize - n as isize };
            k as f64 * step
        })
        .collect()
}

/// Index of the frequency `-u` for the DFT bin `i` of an `n`-point transform.
pub fn mirror_index(i: usize, n: usize) -> usize {
    (n - i) % n
}
