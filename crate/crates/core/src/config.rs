//! JSON run configuration shared by every command.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::denoiser::{DenoiserHandle, DenoiserKind};
use crate::error::{Error, Result};
use crate::field::FieldConfig;
use crate::optics::{IlluminationSource, Modality, OpticalSetup, TfConvention};
use crate::reconstruction::{LossWeights, PartitionConfig, TrainConfig};
use crate::simulate::{
    desk_phantom_spec, grid_sources, make_setup, ring_sources, Ellipsoid, NoiseSpec, PhantomSpec, PresetOptions,
    SetupPreset,
};
use crate::tikhonov::{default_taus, TikhonovSolver};
use crate::volume::Grid3D;

/// Illumination description: a named preset, an explicit source list, or
/// a ring / grid generator.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum SetupConfig {
    Preset {
        name: SetupPreset,
        #[serde(default)]
        options: PresetOptions,
    },
    Explicit {
        setup: OpticalSetup,
    },
    Ring {
        count: usize,
        /// Polar angle in degrees.
        angle: f64,
        na: f64,
        wavelength: f64,
        #[serde(default = "one")]
        n0: f64,
    },
    Grid {
        rows: usize,
        cols: usize,
        pitch: f64,
        distance: f64,
        na: f64,
        wavelength: f64,
        #[serde(default = "one")]
        n0: f64,
        /// Illumination-NA window of the kept LEDs; defaults to `[0, na]`.
        #[serde(default)]
        na_window: Option<(f64, f64)>,
        /// Source indices per multiplexed pattern.
        #[serde(default)]
        groups: Option<Vec<Vec<usize>>>,
    },
}

fn one() -> f64 {
    1.0
}

impl Default for SetupConfig {
    fn default() -> Self {
        Self::Preset {
            name: SetupPreset::Annular24,
            options: PresetOptions::default(),
        }
    }
}

impl SetupConfig {
    pub fn build(&self) -> Result<OpticalSetup> {
        let setup = match self {
            Self::Preset { name, options } => make_setup(*name, options)?,
            Self::Explicit { setup } => setup.clone(),
            Self::Ring {
                count,
                angle,
                na,
                wavelength,
                n0,
            } => OpticalSetup {
                na: *na,
                wavelength: *wavelength,
                n0: *n0,
                modality: Modality::Annular,
                sources: ring_sources(*count, *angle, *wavelength, *n0),
            },
            Self::Grid {
                rows,
                cols,
                pitch,
                distance,
                na,
                wavelength,
                n0,
                na_window,
                groups,
            } => {
                let window = na_window.unwrap_or((0.0, *na));
                let mut sources = grid_sources(*rows, *cols, *pitch, *distance, *wavelength, *n0, window);
                let modality = match groups {
                    None => Modality::Dense,
                    Some(groups) => {
                        assign_groups(&mut sources, groups)?;
                        Modality::Multiplexed
                    }
                };
                OpticalSetup {
                    na: *na,
                    wavelength: *wavelength,
                    n0: *n0,
                    modality,
                    sources,
                }
            }
        };
        setup.validate()?;
        Ok(setup)
    }
}

fn assign_groups(sources: &mut [IlluminationSource], groups: &[Vec<usize>]) -> Result<()> {
    let mut seen = vec![false; sources.len()];
    for (g, members) in groups.iter().enumerate() {
        for &i in members {
            if i >= sources.len() || seen[i] {
                return Err(Error::Config(format!(
                    "group {g} lists source {i}, which is out of range or already grouped"
                )));
            }
            seen[i] = true;
            sources[i].group = g;
        }
    }
    if seen.iter().any(|s| !s) {
        return Err(Error::Config("every source must belong to exactly one group".into()));
    }
    Ok(())
}

/// Explicit cells, or a seeded desk cluster when `cells` is absent.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PhantomConfig {
    pub cells: Option<Vec<Ellipsoid>>,
    pub count: usize,
    pub seed: u64,
}

impl Default for PhantomConfig {
    fn default() -> Self {
        Self {
            cells: None,
            count: 10,
            seed: 0,
        }
    }
}

impl PhantomConfig {
    pub fn spec(&self, grid: Grid3D) -> PhantomSpec {
        match &self.cells {
            Some(cells) => PhantomSpec {
                grid,
                cells: cells.clone(),
                seed: self.seed,
            },
            None => desk_phantom_spec(grid, self.count, self.seed),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DenoiserConfig {
    pub kind: DenoiserKind,
    #[serde(default)]
    pub sigma: f64,
    /// DCDN weight file, required for the CNN.
    #[serde(default)]
    pub weights: Option<PathBuf>,
}

impl Default for DenoiserConfig {
    fn default() -> Self {
        Self {
            kind: DenoiserKind::GaussianResidual,
            sigma: 1.0,
            weights: None,
        }
    }
}

impl DenoiserConfig {
    /// Relative weight paths are resolved against `base`.
    pub fn build(&self, base: &Path) -> Result<DenoiserHandle> {
        match self.kind {
            DenoiserKind::Identity => Ok(DenoiserHandle::identity()),
            DenoiserKind::GaussianResidual => DenoiserHandle::gaussian(self.sigma),
            DenoiserKind::Cnn => {
                let path = self
                    .weights
                    .as_ref()
                    .ok_or_else(|| Error::Config("the cnn denoiser needs a `weights` file".into()))?;
                let (net, sigma) = crate::io::read_denoiser(&base.join(path))?;
                DenoiserHandle::cnn(net, sigma)
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TikhonovConfig {
    /// Fixed τ; when absent and a reference is available the best τ of
    /// `taus` is used.
    #[serde(default)]
    pub tau: Option<f64>,
    #[serde(default)]
    pub solver: TikhonovSolver,
    #[serde(default = "default_cg_tol")]
    pub cg_tol: f64,
    #[serde(default = "default_cg_maxiter")]
    pub cg_maxiter: usize,
    #[serde(default = "default_taus")]
    pub taus: Vec<f64>,
}

fn default_cg_tol() -> f64 {
    1e-10
}

fn default_cg_maxiter() -> usize {
    500
}

impl Default for TikhonovConfig {
    fn default() -> Self {
        Self {
            tau: None,
            solver: TikhonovSolver::Direct,
            cg_tol: default_cg_tol(),
            cg_maxiter: default_cg_maxiter(),
            taus: default_taus(),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PathsConfig {
    pub out_dir: Option<PathBuf>,
    pub measurements: Option<PathBuf>,
    pub reference: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub grid: Grid3D,
    pub setup: SetupConfig,
    pub convention: TfConvention,
    pub phantom: PhantomConfig,
    pub noise: NoiseSpec,
    pub field: FieldConfig,
    pub loss: LossWeights,
    pub partition: PartitionConfig,
    pub train: TrainConfig,
    pub denoiser: DenoiserConfig,
    pub tikhonov: TikhonovConfig,
    pub paths: PathsConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            grid: Grid3D::centered(64, 64, 8, 0.1625, 0.1625, 0.5).expect("valid default grid"),
            setup: SetupConfig::default(),
            convention: TfConvention::default(),
            phantom: PhantomConfig::default(),
            noise: NoiseSpec::default(),
            field: FieldConfig {
                encoding: crate::field::EncodingConfig::radial(4, 2, 4),
                mlp: Default::default(),
            },
            loss: LossWeights::default(),
            partition: PartitionConfig::default(),
            train: TrainConfig::default(),
            denoiser: DenoiserConfig::default(),
            tikhonov: TikhonovConfig::default(),
            paths: PathsConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Checks every section; errors are reported as config errors.
    pub fn validate(&self) -> Result<()> {
        let as_config = |e: Error| match e {
            Error::Config(_) => e,
            other => Error::Config(other.to_string()),
        };
        self.grid.validate().map_err(as_config)?;
        self.setup.build().map_err(as_config)?;
        self.field.encoding.validate().map_err(as_config)?;
        self.field.mlp.validate().map_err(as_config)?;
        self.loss.validate().map_err(as_config)?;
        self.train.schedule.validate().map_err(as_config)?;
        if !(self.noise.std >= 0.0 && self.noise.std.is_finite()) {
            return Err(Error::Config(format!("noise std {} must be >= 0", self.noise.std)));
        }
        if self.partition.blocks == 0 {
            return Err(Error::Config("partition.blocks must be >= 1".into()));
        }
        if let Some(tau) = self.tikhonov.tau {
            if !(tau > 0.0 && tau.is_finite()) {
                return Err(Error::Config(format!("tikhonov.tau must be positive, got {tau}")));
            }
        }
        if self.tikhonov.taus.iter().any(|t| !(*t > 0.0 && t.is_finite())) {
            return Err(Error::Config("tikhonov.taus must all be positive".into()));
        }
        if self.denoiser.kind == DenoiserKind::Cnn && self.denoiser.weights.is_none() {
            return Err(Error::Config("the cnn denoiser needs a `weights` file".into()));
        }
        Ok(())
    }
}
