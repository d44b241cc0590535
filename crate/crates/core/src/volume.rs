//! Voxel grids, permittivity and refractive-index volumes, and the
//! image-quality metrics used to score reconstructions.
//!
//! Volumes are stored slice-major: arrays are indexed `[z, x, y]` with `y`
//! varying fastest, so a z-slice is one contiguous `nx * ny` block.

use ndarray::{Array3, ArrayView3, Zip};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Regular voxel grid. Pitches are in micrometers; `z0` is the axial
/// position of the first slice relative to the focal plane.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Grid3D {
    pub nx: usize,
    pub ny: usize,
    pub nz: usize,
    pub dx: f64,
    pub dy: f64,
    pub dz: f64,
    #[serde(default)]
    pub z0: f64,
}

impl Grid3D {
    pub fn new(nx: usize, ny: usize, nz: usize, dx: f64, dy: f64, dz: f64, z0: f64) -> Result<Self> {
        let g = Self { nx, ny, nz, dx, dy, dz, z0 };
        g.validate()?;
        Ok(g)
    }

    /// Grid whose slices are centred on the focal plane.
    pub fn centered(nx: usize, ny: usize, nz: usize, dx: f64, dy: f64, dz: f64) -> Result<Self> {
        let z0 = -0.5 * (nz.saturating_sub(1)) as f64 * dz;
        Self::new(nx, ny, nz, dx, dy, dz, z0)
    }

    pub fn validate(&self) -> Result<()> {
        if self.nx == 0 || self.ny == 0 || self.nz == 0 {
            return Err(Error::InvalidParameter(format!(
                "grid dimensions must be positive, got {}x{}x{}",
                self.nx, self.ny, self.nz
            )));
        }
        let pitches = [self.dx, self.dy, self.dz];
        if pitches.iter().any(|d| !(d.is_finite() && *d > 0.0)) || !self.z0.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "voxel pitch must be finite and positive, got {pitches:?}"
            )));
        }
        Ok(())
    }

    /// Array shape in storage order `[nz, nx, ny]`.
    pub fn shape(&self) -> (usize, usize, usize) {
        (self.nz, self.nx, self.ny)
    }

    pub fn voxel_count(&self) -> usize {
        self.nx * self.ny * self.nz
    }

    pub fn lateral_len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn extent(&self) -> (f64, f64, f64) {
        (
            self.nx as f64 * self.dx,
            self.ny as f64 * self.dy,
            self.nz as f64 * self.dz,
        )
    }

    /// Axial position of slice `q` in micrometers.
    pub fn slice_z(&self, q: usize) -> f64 {
        self.z0 + q as f64 * self.dz
    }

    /// Physical lateral position of column `i` along x, centred on the optical axis.
    pub fn x_at(&self, i: usize) -> f64 {
        (i as f64 - 0.5 * (self.nx - 1) as f64) * self.dx
    }

    pub fn y_at(&self, j: usize) -> f64 {
        (j as f64 - 0.5 * (self.ny - 1) as f64) * self.dy
    }

    /// Denser grid covering the same physical extent: every original voxel
    /// centre is retained and `factor - 1` points are inserted between
    /// neighbours along each axis.
    pub fn upsampled(&self, fx: usize, fy: usize, fz: usize) -> Result<Self> {
        if fx == 0 || fy == 0 || fz == 0 {
            return Err(Error::InvalidParameter("upsampling factors must be >= 1".into()));
        }
        let up = |n: usize, f: usize| if n == 1 { 1 } else { (n - 1) * f + 1 };
        Self::new(
            up(self.nx, fx),
            up(self.ny, fy),
            up(self.nz, fz),
            self.dx / fx as f64,
            self.dy / fy as f64,
            self.dz / fz as f64,
            self.z0,
        )
    }
}

fn normalize_axis(index: usize, len: usize) -> Result<f64> {
    if index >= len {
        return Err(Error::OutOfBounds { index, len });
    }
    if len == 1 {
        return Ok(0.0);
    }
    Ok(-1.0 + 2.0 * index as f64 / (len - 1) as f64)
}

/// Maps a voxel index `(ix, iy, iz)` onto the cube `[-1, 1]^3`, each axis
/// independently. A single-voxel axis maps to 0.
pub fn normalize_coords(grid: &Grid3D, index: [usize; 3]) -> Result<[f64; 3]> {
    Ok([
        normalize_axis(index[0], grid.nx)?,
        normalize_axis(index[1], grid.ny)?,
        normalize_axis(index[2], grid.nz)?,
    ])
}

/// Normalized coordinates of every voxel, in storage order (z outermost).
pub fn grid_coords(grid: &Grid3D) -> Vec<[f64; 3]> {
    let mut out = Vec::with_capacity(grid.voxel_count());
    for iz in 0..grid.nz {
        for ix in 0..grid.nx {
            for iy in 0..grid.ny {
                // indices are in range by construction
                out.push(normalize_coords(grid, [ix, iy, iz]).unwrap());
            }
        }
    }
    out
}

/// Complex permittivity contrast on a z-sliced grid.
#[derive(Clone, Debug, PartialEq)]
pub struct PermittivityVolume {
    pub grid: Grid3D,
    pub re: Array3<f64>,
    pub im: Array3<f64>,
}

impl PermittivityVolume {
    pub fn zeros(grid: Grid3D) -> Self {
        Self {
            grid,
            re: Array3::zeros(grid.shape()),
            im: Array3::zeros(grid.shape()),
        }
    }

    pub fn new(grid: Grid3D, re: Array3<f64>, im: Array3<f64>) -> Result<Self> {
        let expected = grid.shape();
        for a in [&re, &im] {
            if a.dim() != expected {
                return Err(Error::shape(&[expected.0, expected.1, expected.2], a.shape()));
            }
            if a.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidParameter("volume contains non-finite values".into()));
            }
        }
        Ok(Self { grid, re, im })
    }

    pub fn check_grid(&self, grid: &Grid3D) -> Result<()> {
        if self.grid.shape() != grid.shape() {
            let (a, b) = (grid.shape(), self.grid.shape());
            return Err(Error::shape(&[a.0, a.1, a.2], &[b.0, b.1, b.2]));
        }
        Ok(())
    }

    /// Euclidean inner product treating `(re, im)` as independent real unknowns.
    pub fn dot(&self, other: &Self) -> f64 {
        dot3(&self.re.view(), &other.re.view()) + dot3(&self.im.view(), &other.im.view())
    }

    pub fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self {
            grid: self.grid,
            re: &self.re * s,
            im: &self.im * s,
        }
    }

    pub fn add_scaled(&mut self, s: f64, other: &Self) {
        self.re.scaled_add(s, &other.re);
        self.im.scaled_add(s, &other.im);
    }
}

pub(crate) fn dot3(a: &ArrayView3<f64>, b: &ArrayView3<f64>) -> f64 {
    Zip::from(a).and(b).fold(0.0, |acc, x, y| acc + x * y)
}

/// Complex refractive index derived from a permittivity volume.
#[derive(Clone, Debug, PartialEq)]
pub struct RIVolume {
    pub grid: Grid3D,
    pub n_re: Array3<f64>,
    pub n_im: Array3<f64>,
    pub n0: f64,
}

impl RIVolume {
    /// `true` when any voxel carries negative absorption (gain).
    pub fn has_negative_absorption(&self) -> bool {
        self.n_im.iter().any(|&v| v < 0.0)
    }

    /// Real refractive-index contrast `n_re - n0`.
    pub fn contrast(&self) -> Array3<f64> {
        self.n_re.mapv(|v| v - self.n0)
    }
}

/// Element-wise conversion from permittivity contrast to refractive index.
pub fn permittivity_to_ri(vol: &PermittivityVolume, n0: f64) -> Result<RIVolume> {
    if !(n0 > 0.0 && n0.is_finite()) {
        return Err(Error::InvalidParameter(format!("background index must be positive, got {n0}")));
    }
    let n0_sq = n0 * n0;
    let mut n_re = Array3::zeros(vol.re.dim());
    let mut n_im = Array3::zeros(vol.re.dim());
    for ((idx, &de_re), &de_im) in vol.re.indexed_iter().zip(vol.im.iter()) {
        let a = n0_sq + de_re;
        let nr = (0.5 * (a + (a * a + de_im * de_im).sqrt())).sqrt();
        if nr == 0.0 {
            return Err(Error::ZeroRefractiveIndex([idx.1, idx.2, idx.0]));
        }
        n_re[idx] = nr;
        n_im[idx] = de_im / (2.0 * nr);
    }
    Ok(RIVolume {
        grid: vol.grid,
        n_re,
        n_im,
        n0,
    })
}

/// Inverse of [`permittivity_to_ri`] for a lossless medium: `Δε = n² - n0²`.
pub fn ri_contrast_to_permittivity(delta_n: f64, n0: f64) -> f64 {
    (n0 + delta_n).powi(2) - n0 * n0
}

/// Which peak term enters the PSNR numerator.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PsnrConvention {
    /// `10 log10(max² / mse)`.
    #[default]
    SquaredPeak,
    /// `10 log10(max / mse)`, the un-squared form.
    LinearPeak,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub psnr_db: f64,
    pub mse: f64,
    pub mae: f64,
}

fn check_same_shape<S, D>(a: &ndarray::ArrayBase<S, D>, b: &ndarray::ArrayBase<S, D>) -> Result<()>
where
    S: ndarray::Data<Elem = f64>,
    D: ndarray::Dimension,
{
    if a.shape() != b.shape() {
        return Err(Error::shape(a.shape(), b.shape()));
    }
    Ok(())
}

pub fn mse<S, D>(a: &ndarray::ArrayBase<S, D>, b: &ndarray::ArrayBase<S, D>) -> Result<f64>
where
    S: ndarray::Data<Elem = f64>,
    D: ndarray::Dimension,
{
    check_same_shape(a, b)?;
    let n = a.len().max(1) as f64;
    Ok(Zip::from(a).and(b).fold(0.0, |acc, x, y| acc + (x - y) * (x - y)) / n)
}

pub fn mae<S, D>(a: &ndarray::ArrayBase<S, D>, b: &ndarray::ArrayBase<S, D>) -> Result<f64>
where
    S: ndarray::Data<Elem = f64>,
    D: ndarray::Dimension,
{
    check_same_shape(a, b)?;
    let n = a.len().max(1) as f64;
    Ok(Zip::from(a).and(b).fold(0.0, |acc, x, y| acc + (x - y).abs()) / n)
}

/// PSNR from a peak value and an MSE.
pub fn psnr_from_mse(peak: f64, mse: f64, convention: PsnrConvention) -> Result<f64> {
    if mse == 0.0 {
        return Err(Error::IdenticalInputs);
    }
    let num = match convention {
        PsnrConvention::SquaredPeak => peak * peak,
        PsnrConvention::LinearPeak => peak,
    };
    Ok(10.0 * (num / mse).log10())
}

/// PSNR of `estimate` against `reference`, peak taken from the reference.
pub fn psnr<S, D>(reference: &ndarray::ArrayBase<S, D>, estimate: &ndarray::ArrayBase<S, D>) -> Result<f64>
where
    S: ndarray::Data<Elem = f64>,
    D: ndarray::Dimension,
{
    psnr_with(reference, estimate, PsnrConvention::SquaredPeak)
}

pub fn psnr_with<S, D>(
    reference: &ndarray::ArrayBase<S, D>,
    estimate: &ndarray::ArrayBase<S, D>,
    convention: PsnrConvention,
) -> Result<f64>
where
    S: ndarray::Data<Elem = f64>,
    D: ndarray::Dimension,
{
    let e = mse(reference, estimate)?;
    let peak = reference.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    psnr_from_mse(peak, e, convention)
}

pub fn metrics<S, D>(reference: &ndarray::ArrayBase<S, D>, estimate: &ndarray::ArrayBase<S, D>) -> Result<Metrics>
where
    S: ndarray::Data<Elem = f64>,
    D: ndarray::Dimension,
{
    Ok(Metrics {
        psnr_db: psnr(reference, estimate)?,
        mse: mse(reference, estimate)?,
        mae: mae(reference, estimate)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{arr1, Array1};

    fn grid(nx: usize, ny: usize, nz: usize) -> Grid3D {
        Grid3D::new(nx, ny, nz, 0.1, 0.1, 0.5, 0.0).unwrap()
    }

    #[test]
    fn normalize_endpoints_and_midpoint() {
        let g = grid(64, 64, 64);
        assert_eq!(normalize_coords(&g, [0, 0, 0]).unwrap(), [-1.0, -1.0, -1.0]);
        assert_eq!(normalize_coords(&g, [63, 63, 63]).unwrap(), [1.0, 1.0, 1.0]);
        let g = grid(65, 65, 65);
        assert_eq!(normalize_coords(&g, [32, 32, 32]).unwrap(), [0.0, 0.0, 0.0]);
    }

    #[test]
    fn normalize_anisotropic_grid() {
        let g = grid(64, 64, 8);
        let c = normalize_coords(&g, [21, 42, 3]).unwrap();
        let want = [-1.0 + 2.0 * 21.0 / 63.0, -1.0 + 2.0 * 42.0 / 63.0, -1.0 + 2.0 * 3.0 / 7.0];
        for k in 0..3 {
            assert!((c[k] - want[k]).abs() < 1e-15);
        }
    }

    #[test]
    fn normalize_single_voxel_axis_and_bounds() {
        let g = grid(4, 4, 1);
        assert_eq!(normalize_coords(&g, [0, 3, 0]).unwrap()[2], 0.0);
        assert!(matches!(
            normalize_coords(&g, [4, 0, 0]),
            Err(Error::OutOfBounds { index: 4, len: 4 })
        ));
    }

    fn single(re: f64, im: f64, n0: f64) -> (f64, f64) {
        let g = grid(1, 1, 1);
        let v = PermittivityVolume::new(g, Array3::from_elem((1, 1, 1), re), Array3::from_elem((1, 1, 1), im)).unwrap();
        let ri = permittivity_to_ri(&v, n0).unwrap();
        (ri.n_re[[0, 0, 0]], ri.n_im[[0, 0, 0]])
    }

    #[test]
    fn ri_conversion_examples() {
        assert_eq!(single(0.0, 0.0, 1.33), (1.33, 0.0));
        let (nr, ni) = single(0.1, 0.0, 1.0);
        assert!((nr - 1.1f64.sqrt()).abs() < 1e-15 && ni == 0.0);
        assert!((nr - 1.048809).abs() < 1e-6);
        let (nr, ni) = single(0.0, 0.2, 1.0);
        let want = (0.5 * (1.0 + 1.04f64.sqrt())).sqrt();
        assert!((nr - want).abs() < 1e-15);
        assert!((nr - 1.004938).abs() < 1e-6);
        assert!((ni - 0.099509).abs() < 1e-6);
    }

    #[test]
    fn ri_conversion_rejects_zero_index() {
        let g = grid(1, 1, 1);
        let v = PermittivityVolume::new(g, Array3::from_elem((1, 1, 1), -1.0), Array3::zeros((1, 1, 1))).unwrap();
        assert!(matches!(permittivity_to_ri(&v, 1.0), Err(Error::ZeroRefractiveIndex(_))));
    }

    #[test]
    fn cell_contrast_in_permittivity() {
        let de = ri_contrast_to_permittivity(0.075, 1.0);
        assert!((de - 0.155625).abs() < 1e-15);
        assert!((single(de, 0.0, 1.0).0 - 1.075).abs() < 1e-12);
    }

    #[test]
    fn mse_mae_hand_values() {
        let a = arr1(&[0.0, 0.0]);
        let b = arr1(&[1.0, 3.0]);
        assert_eq!(mse(&a, &b).unwrap(), 5.0);
        assert_eq!(mae(&a, &b).unwrap(), 2.0);
        assert_eq!(mse(&arr1(&[2.0]), &arr1(&[2.5])).unwrap(), 0.25);
        assert_eq!(mae(&arr1(&[2.0]), &arr1(&[2.5])).unwrap(), 0.5);
        assert_eq!(mse(&a, &a).unwrap(), 0.0);
        assert!(matches!(mse(&a, &arr1(&[1.0])), Err(Error::ShapeMismatch { .. })));
    }

    #[test]
    fn psnr_table_values() {
        let p = psnr_from_mse(0.075, 4.77e-5, PsnrConvention::SquaredPeak).unwrap();
        assert!((p - 20.72).abs() < 0.01);
        let p = psnr_from_mse(0.075, 2.22e-5, PsnrConvention::SquaredPeak).unwrap();
        assert!((p - 24.03).abs() < 0.01);
        let lin = psnr_from_mse(0.075, 2.22e-5, PsnrConvention::LinearPeak).unwrap();
        assert!((lin - 10.0 * (0.075 / 2.22e-5f64).log10()).abs() < 1e-12);
    }

    #[test]
    fn psnr_identical_inputs() {
        let a: Array1<f64> = arr1(&[0.1, 0.2]);
        assert!(matches!(psnr(&a, &a), Err(Error::IdenticalInputs)));
    }

    #[test]
    fn upsampled_grid_keeps_original_centres() {
        let g = grid(64, 64, 8);
        let up = g.upsampled(2, 2, 4).unwrap();
        assert_eq!((up.nx, up.ny, up.nz), (127, 127, 29));
        for i in [0usize, 5, 63] {
            assert_eq!(normalize_coords(&g, [i, i, 7]).unwrap(), normalize_coords(&up, [2 * i, 2 * i, 28]).unwrap());
        }
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn lossless_ri_round_trip(de in -0.5f64..0.5, n0 in 1.0f64..1.6) {
                let (nr, ni) = single(de, 0.0, n0);
                prop_assert_eq!(ni, 0.0);
                prop_assert!((nr * nr - (n0 * n0 + de)).abs() < 1e-12);
            }

            #[test]
            fn psnr_permutation_invariant(
                vals in proptest::collection::vec((0.0f64..1.0, 0.0f64..1.0), 2..40),
                seed in any::<u64>(),
            ) {
                let (a, b): (Vec<f64>, Vec<f64>) = vals.into_iter().unzip();
                prop_assume!(a != b);
                let mut idx: Vec<usize> = (0..a.len()).collect();
                // deterministic shuffle from the seed
                let mut s = seed;
                for i in (1..idx.len()).rev() {
                    s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                    idx.swap(i, (s >> 33) as usize % (i + 1));
                }
                let pa = Array1::from_iter(idx.iter().map(|&i| a[i]));
                let pb = Array1::from_iter(idx.iter().map(|&i| b[i]));
                let p0 = psnr(&Array1::from(a.clone()), &Array1::from(b.clone())).unwrap();
                let p1 = psnr(&pa, &pb).unwrap();
                prop_assert!((p0 - p1).abs() < 1e-9);
            }

            #[test]
            fn zero_mse_iff_zero_mae(
                vals in proptest::collection::vec((-1.0f64..1.0, prop::bool::ANY), 1..20)
            ) {
                let a: Array1<f64> = vals.iter().map(|v| v.0).collect();
                let b: Array1<f64> = vals.iter().map(|v| if v.1 { v.0 } else { v.0 + 0.25 }).collect();
                let e = mse(&a, &b).unwrap();
                let m = mae(&a, &b).unwrap();
                prop_assert_eq!(e == 0.0, m == 0.0);
            }
        }
    }
}
