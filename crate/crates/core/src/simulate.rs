//! Procedural phantoms, LED geometries and Born-model measurement synthesis.

use std::f64::consts::PI;

use ndarray::Array3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::optics::{
    build_tf_stack, forward, IlluminationSource, MeasurementSet, Modality, OpticalSetup, TfConvention,
};
use crate::volume::{ri_contrast_to_permittivity, Grid3D, PermittivityVolume};

/// Peak RI contrast of a simulated cell in air.
pub const CELL_RI_CONTRAST: f64 = 0.075;

/// Smooth-edged ellipsoid, lengths in µm.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Ellipsoid {
    pub center: [f64; 3],
    pub semi_axes: [f64; 3],
    pub re_amplitude: f64,
    #[serde(default)]
    pub im_amplitude: f64,
    /// Width of the smoothstep shell straddling the surface.
    #[serde(default)]
    pub softness: f64,
}

impl Ellipsoid {
    /// Profile in `[0, 1]`: 1 inside, 0 outside, smoothstep across the shell.
    pub fn profile(&self, p: [f64; 3]) -> f64 {
        let mut r2 = 0.0;
        for k in 0..3 {
            let d = (p[k] - self.center[k]) / self.semi_axes[k];
            r2 += d * d;
        }
        let r = r2.sqrt();
        if self.softness <= 0.0 {
            return if r <= 1.0 { 1.0 } else { 0.0 };
        }
        let scale = self.semi_axes.iter().cloned().fold(f64::INFINITY, f64::min);
        let t = ((1.0 - r) * scale / self.softness + 0.5).clamp(0.0, 1.0);
        t * t * (3.0 - 2.0 * t)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhantomSpec {
    pub grid: Grid3D,
    #[serde(default)]
    pub cells: Vec<Ellipsoid>,
    #[serde(default)]
    pub seed: u64,
}

/// Voxelizes the cells; overlapping cells take the elementwise maximum.
pub fn make_phantom(spec: &PhantomSpec) -> Result<PermittivityVolume> {
    let g = spec.grid;
    g.validate()?;
    for c in &spec.cells {
        let finite = c.center.iter().chain(&c.semi_axes).all(|v| v.is_finite())
            && c.re_amplitude.is_finite()
            && c.im_amplitude.is_finite();
        if !finite || c.semi_axes.iter().any(|&a| a <= 0.0) || c.softness < 0.0 {
            return Err(Error::InvalidParameter(format!("bad ellipsoid {c:?}")));
        }
    }
    let mut re = Array3::zeros(g.shape());
    let mut im = Array3::zeros(g.shape());
    for ((q, i, j), v) in re.indexed_iter_mut() {
        let p = [g.x_at(i), g.y_at(j), g.slice_z(q)];
        let mut best_re: f64 = 0.0;
        let mut best_im: f64 = 0.0;
        for c in &spec.cells {
            let s = c.profile(p);
            if s > 0.0 {
                best_re = best_re.max(s * c.re_amplitude);
                best_im = best_im.max(s * c.im_amplitude);
            }
        }
        *v = best_re;
        im[[q, i, j]] = best_im;
    }
    PermittivityVolume::new(g, re, im)
}

/// Seeded cluster of `count` cells. The first cell carries the full
/// `n_re − n0 = 0.075` contrast, the others a random fraction of it.
pub fn desk_phantom_spec(grid: Grid3D, count: usize, seed: u64) -> PhantomSpec {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let amp = ri_contrast_to_permittivity(CELL_RI_CONTRAST, 1.0);
    let (ex, ey, _) = grid.extent();
    let (hx, hy) = (0.5 * ex, 0.5 * ey);
    let zc = grid.z0 + 0.5 * (grid.nz.saturating_sub(1)) as f64 * grid.dz;
    let hz = 0.5 * (grid.nz.saturating_sub(1)) as f64 * grid.dz;
    let cells = (0..count)
        .map(|k| {
            let cx = rng.random_range(-0.7 * hx..=0.7 * hx);
            let cy = rng.random_range(-0.7 * hy..=0.7 * hy);
            let cz = zc + rng.random_range(-0.45 * hz..=0.45 * hz);
            let a = rng.random_range(0.08..0.17) * ex;
            let b = rng.random_range(0.08..0.17) * ey;
            let c = rng.random_range(0.35..0.7) * hz.max(grid.dz);
            let scale = if k == 0 { 1.0 } else { rng.random_range(0.5..1.0) };
            Ellipsoid {
                center: [cx, cy, cz],
                semi_axes: [a, b, c],
                re_amplitude: amp * scale,
                im_amplitude: 0.0,
                softness: 0.25 * a.min(b).min(c),
            }
        })
        .collect();
    PhantomSpec { grid, cells, seed }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NoiseKind {
    #[default]
    None,
    Gaussian,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSpec {
    #[serde(default)]
    pub kind: NoiseKind,
    #[serde(default)]
    pub std: f64,
    #[serde(default)]
    pub seed: u64,
}

impl NoiseSpec {
    pub fn gaussian(std: f64, seed: u64) -> Self {
        Self {
            kind: NoiseKind::Gaussian,
            std,
            seed,
        }
    }
}

/// Born-model intensities of `vol` plus seeded additive noise.
pub fn simulate_measurements(
    vol: &PermittivityVolume,
    setup: &OpticalSetup,
    convention: TfConvention,
    noise: &NoiseSpec,
) -> Result<MeasurementSet> {
    if !(noise.std >= 0.0 && noise.std.is_finite()) {
        return Err(Error::InvalidParameter(format!("noise std {} must be >= 0", noise.std)));
    }
    let stack = build_tf_stack(setup, &vol.grid, convention)?;
    let mut meas = forward(&stack, vol)?;
    if noise.kind == NoiseKind::Gaussian && noise.std > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(noise.seed);
        for v in meas.images.iter_mut() {
            let z: f64 = StandardNormal.sample(&mut rng);
            *v += noise.std * z;
        }
    }
    Ok(meas)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SetupPreset {
    Annular24,
    Dense89,
    Multiplexed16x6,
}

impl std::str::FromStr for SetupPreset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "annular24" => Ok(Self::Annular24),
            "dense89" => Ok(Self::Dense89),
            "multiplexed16x6" => Ok(Self::Multiplexed16x6),
            _ => Err(Error::Config(format!("unknown setup preset '{s}'"))),
        }
    }
}

/// Ring of `count` LEDs at polar angle `angle_deg`, equally spaced in azimuth.
pub fn ring_sources(count: usize, angle_deg: f64, wavelength: f64, n0: f64) -> Vec<IlluminationSource> {
    let r = 2.0 * PI / wavelength * n0 * angle_deg.to_radians().sin();
    (0..count)
        .map(|i| {
            let a = 2.0 * PI * i as f64 / count as f64;
            IlluminationSource::new([r * a.cos(), r * a.sin()], wavelength)
        })
        .collect()
}

/// Planar LED grid centred on the optical axis at `distance` (same length
/// unit as `pitch`), keeping LEDs whose illumination NA `n0·sin θ` lies in
/// `[na_min, na_max]`. Sources are ordered by row, then column.
pub fn grid_sources(
    rows: usize,
    cols: usize,
    pitch: f64,
    distance: f64,
    wavelength: f64,
    n0: f64,
    na_range: (f64, f64),
) -> Vec<IlluminationSource> {
    let k0 = 2.0 * PI / wavelength;
    let mut out = Vec::new();
    for r in 0..rows {
        for c in 0..cols {
            let x = (c as f64 - (cols as f64 - 1.0) / 2.0) * pitch;
            let y = (r as f64 - (rows as f64 - 1.0) / 2.0) * pitch;
            let len = (x * x + y * y + distance * distance).sqrt();
            let (sx, sy) = (x / len, y / len);
            let na = n0 * sx.hypot(sy);
            if na >= na_range.0 && na <= na_range.1 {
                out.push(IlluminationSource::new([k0 * n0 * sx, k0 * n0 * sy], wavelength));
            }
        }
    }
    out
}

/// Geometry of a preset; `None` fields take the preset default.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PresetOptions {
    pub wavelength: Option<f64>,
    pub na: Option<f64>,
    pub n0: Option<f64>,
    /// Ring polar angle in degrees.
    pub ring_angle: Option<f64>,
    /// LED pitch in mm.
    pub pitch: Option<f64>,
    /// LED array distance in mm.
    pub distance: Option<f64>,
}

/// Builds one of the preset illumination setups.
///
/// * `annular24`: 24-LED ring at 40°, λ = 0.515 µm, NA 0.65
/// * `dense89`: 4 mm grid at 79 mm, the 89 LEDs inside NA 0.25, λ = 0.632 µm
/// * `multiplexed16x6`: 8.78 mm grid at 79 mm, the 96 LEDs with illumination
///   NA in `[0.3, 0.575]`, NA 0.65, sorted by azimuth and dealt round-robin
///   into 16 patterns of 6
pub fn make_setup(preset: SetupPreset, opts: &PresetOptions) -> Result<OpticalSetup> {
    let n0 = opts.n0.unwrap_or(1.0);
    let setup = match preset {
        SetupPreset::Annular24 => {
            let wavelength = opts.wavelength.unwrap_or(0.515);
            OpticalSetup {
                na: opts.na.unwrap_or(0.65),
                wavelength,
                n0,
                modality: Modality::Annular,
                sources: ring_sources(24, opts.ring_angle.unwrap_or(40.0), wavelength, n0),
            }
        }
        SetupPreset::Dense89 => {
            let wavelength = opts.wavelength.unwrap_or(0.632);
            let na = opts.na.unwrap_or(0.25);
            let sources = grid_sources(
                31,
                31,
                opts.pitch.unwrap_or(4.0),
                opts.distance.unwrap_or(79.0),
                wavelength,
                n0,
                (0.0, na),
            );
            OpticalSetup {
                na,
                wavelength,
                n0,
                modality: Modality::Dense,
                sources,
            }
        }
        SetupPreset::Multiplexed16x6 => {
            let wavelength = opts.wavelength.unwrap_or(0.632);
            let mut sources = grid_sources(
                31,
                31,
                opts.pitch.unwrap_or(8.78),
                opts.distance.unwrap_or(79.0),
                wavelength,
                n0,
                (0.3, 0.575),
            );
            let angle = |s: &IlluminationSource| s.u[1].atan2(s.u[0]);
            sources.sort_by(|a, b| {
                angle(a)
                    .total_cmp(&angle(b))
                    .then(a.lateral_magnitude().total_cmp(&b.lateral_magnitude()))
            });
            for (k, s) in sources.iter_mut().enumerate() {
                s.group = k % 16;
            }
            OpticalSetup {
                na: opts.na.unwrap_or(0.65),
                wavelength,
                n0,
                modality: Modality::Multiplexed,
                sources,
            }
        }
    };
    setup.validate()?;
    Ok(setup)
}
