use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One plane-wave illumination.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IlluminationSource {
    /// Lateral wave vector in rad/µm.
    pub u: [f64; 2],
    /// Wavelength in µm.
    pub wavelength: f64,
    /// Source function value `S(u_p)`.
    #[serde(default = "one")]
    pub weight: f64,
    /// Pattern membership for multiplexed illumination.
    #[serde(default)]
    pub group: usize,
}

fn one() -> f64 {
    1.0
}

impl IlluminationSource {
    pub fn new(u: [f64; 2], wavelength: f64) -> Self {
        Self {
            u,
            wavelength,
            weight: 1.0,
            group: 0,
        }
    }

    pub fn lateral_magnitude(&self) -> f64 {
        self.u[0].hypot(self.u[1])
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Modality {
    Dense,
    Annular,
    Multiplexed,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OpticalSetup {
    pub na: f64,
    pub wavelength: f64,
    pub n0: f64,
    pub modality: Modality,
    pub sources: Vec<IlluminationSource>,
}

/// Vacuum wave number `2π/λ`.
pub fn wavenumber(wavelength: f64) -> f64 {
    2.0 * PI / wavelength
}

impl OpticalSetup {
    pub fn k0(&self) -> f64 {
        wavenumber(self.wavelength)
    }

    /// Pupil cutoff radius `NA·k0` in rad/µm.
    pub fn cutoff(&self) -> f64 {
        self.na * self.k0()
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.na > 0.0 && self.na < self.n0) {
            return Err(Error::InvalidParameter(format!(
                "numerical aperture must satisfy 0 < NA < n0 (NA = {}, n0 = {})",
                self.na, self.n0
            )));
        }
        if !(self.wavelength > 0.0 && self.wavelength.is_finite()) {
            return Err(Error::InvalidParameter(format!("bad wavelength {}", self.wavelength)));
        }
        if self.sources.is_empty() {
            return Err(Error::InvalidParameter("setup has no illumination sources".into()));
        }
        let k0 = self.k0();
        for (i, s) in self.sources.iter().enumerate() {
            if (s.wavelength - self.wavelength).abs() > 1e-12 * self.wavelength {
                return Err(Error::InvalidParameter(format!(
                    "source {i} wavelength {} differs from setup wavelength {}",
                    s.wavelength, self.wavelength
                )));
            }
            if s.lateral_magnitude() > k0 {
                return Err(Error::Evanescent {
                    magnitude: s.lateral_magnitude(),
                    k0,
                });
            }
            if !(s.weight > 0.0) {
                return Err(Error::InvalidParameter(format!("source {i} has non-positive weight")));
            }
        }
        Ok(())
    }

    /// Source indices per measurement: one source each for dense and annular
    /// illumination, one group (ascending group id) for multiplexed.
    pub fn measurement_groups(&self) -> Vec<Vec<usize>> {
        match self.modality {
            Modality::Dense | Modality::Annular => (0..self.sources.len()).map(|i| vec![i]).collect(),
            Modality::Multiplexed => {
                let mut ids: Vec<usize> = self.sources.iter().map(|s| s.group).collect();
                ids.sort_unstable();
                ids.dedup();
                ids.iter()
                    .map(|&g| (0..self.sources.len()).filter(|&i| self.sources[i].group == g).collect())
                    .collect()
            }
        }
    }

    pub fn measurement_count(&self) -> usize {
        self.measurement_groups().len()
    }
}

/// Spatial-frequency support limits `(lateral, axial)` in µm⁻¹.
pub fn resolution_limits(setup: &OpticalSetup) -> Result<(f64, f64)> {
    let (na, n0, lambda) = (setup.na, setup.n0, setup.wavelength);
    if na >= n0 {
        return Err(Error::InvalidParameter(format!("NA ({na}) must be below n0 ({n0})")));
    }
    let lateral = 4.0 * na / lambda;
    let axial = (2.0 * n0 - 2.0 * (n0 * n0 - na * na).sqrt()) / lambda;
    Ok((lateral, axial))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn setup(na: f64, lambda: f64, n0: f64) -> OpticalSetup {
        OpticalSetup {
            na,
            wavelength: lambda,
            n0,
            modality: Modality::Annular,
            sources: vec![IlluminationSource::new([0.0, 0.0], lambda)],
        }
    }

    #[test]
    fn resolution_examples() {
        let (lat, ax) = resolution_limits(&setup(0.65, 0.515, 1.33)).unwrap();
        assert!((lat - 5.049).abs() < 1e-3);
        assert!((ax - 0.659).abs() < 1e-3);
        let (lat, _) = resolution_limits(&setup(0.25, 0.632, 1.33)).unwrap();
        assert!((lat - 1.582).abs() < 1e-3);
        let (lat, ax) = resolution_limits(&setup(1e-9, 0.5, 1.0)).unwrap();
        assert!(lat < 1e-8 && ax < 1e-8);
        assert!(resolution_limits(&setup(1.4, 0.5, 1.33)).is_err());
    }

    #[test]
    fn validation() {
        assert!(setup(0.65, 0.515, 1.0).validate().is_ok());
        assert!(setup(1.1, 0.515, 1.0).validate().is_err());
        let mut s = setup(0.65, 0.515, 1.0);
        s.sources[0].u = [20.0, 0.0];
        assert!(matches!(s.validate(), Err(Error::Evanescent { .. })));
        let mut s = setup(0.65, 0.515, 1.0);
        s.sources[0].wavelength = 0.6;
        assert!(s.validate().is_err());
        let mut s = setup(0.65, 0.515, 1.0);
        s.sources.clear();
        assert!(s.validate().is_err());
    }

    #[test]
    fn multiplexed_groups_sorted_by_id() {
        let mut s = setup(0.65, 0.515, 1.0);
        s.modality = Modality::Multiplexed;
        s.sources = (0..6)
            .map(|i| IlluminationSource {
                group: [2, 0, 2, 1, 0, 1][i],
                ..IlluminationSource::new([0.1 * i as f64, 0.0], 0.515)
            })
            .collect();
        assert_eq!(s.measurement_groups(), vec![vec![1, 4], vec![3, 5], vec![0, 2]]);
    }
}
