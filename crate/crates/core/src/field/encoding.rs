//! Fourier-style coordinate encodings.
//!
//! Feature layout (frozen, weight files depend on it):
//!
//! * positional `pe(t, L)`: `sin(2⁰πt), cos(2⁰πt), …, sin(2^{L-1}πt), cos(2^{L-1}πt)`
//! * radial x-y: for each angle `θ_k` in order, `pe(x'_k, L_xy) ‖ pe(y'_k, L_xy)`
//!   where `(x'_k, y'_k) = R(θ_k)·(x, y)`
//! * positional x-y: `pe(x, L_xy) ‖ pe(y, L_xy)`
//! * gaussian x-y: `sin(2π B v)` for every row of `B`, then `cos(2π B v)`
//! * full encoding: x-y features followed by `pe(z, L_z)`

use std::f64::consts::PI;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EncodingKind {
    Radial,
    Positional,
    Gaussian,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EncodingConfig {
    pub kind: EncodingKind,
    pub l_xy: usize,
    #[serde(default)]
    pub thetas: Vec<f64>,
    pub l_z: usize,
    #[serde(default)]
    pub gaussian_rows: usize,
    #[serde(default)]
    pub seed: u64,
}

impl Default for EncodingConfig {
    fn default() -> Self {
        Self::radial(6, 4, 6)
    }
}

impl EncodingConfig {
    /// Radial encoding with `k` evenly spaced angles in `[0, π/2)`.
    pub fn radial(l_xy: usize, k: usize, l_z: usize) -> Self {
        Self {
            kind: EncodingKind::Radial,
            l_xy,
            thetas: (0..k).map(|i| i as f64 * PI / (2 * k) as f64).collect(),
            l_z,
            gaussian_rows: 0,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.l_xy == 0 || self.l_z == 0 {
            return Err(Error::InvalidParameter("frequency counts must be >= 1".into()));
        }
        match self.kind {
            EncodingKind::Radial => {
                if self.thetas.is_empty() {
                    return Err(Error::InvalidParameter("radial encoding needs at least one angle".into()));
                }
                if let Some(t) = self.thetas.iter().find(|t| !(0.0..PI).contains(*t)) {
                    return Err(Error::InvalidParameter(format!("rotation angle {t} outside [0, π)")));
                }
            }
            EncodingKind::Gaussian if self.gaussian_rows == 0 => {
                return Err(Error::InvalidParameter("gaussian encoding needs rows >= 1".into()));
            }
            _ => {}
        }
        Ok(())
    }

    pub fn xy_width(&self) -> usize {
        match self.kind {
            EncodingKind::Radial => 4 * self.thetas.len() * self.l_xy,
            EncodingKind::Positional => 4 * self.l_xy,
            EncodingKind::Gaussian => 2 * self.gaussian_rows,
        }
    }

    pub fn width(&self) -> usize {
        self.xy_width() + 2 * self.l_z
    }
}

/// Appends `pe(t, levels)` to `out`.
pub fn positional_encode_into(t: f64, levels: usize, out: &mut Vec<f64>) {
    let mut scale = PI;
    for _ in 0..levels {
        let a = scale * t;
        out.push(a.sin());
        out.push(a.cos());
        scale *= 2.0;
    }
}

pub fn positional_encode(t: f64, levels: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(2 * levels);
    positional_encode_into(t, levels, &mut out);
    out
}

/// Rotated-coordinate encoding of `v = (x, y)`.
pub fn radial_encode(v: [f64; 2], thetas: &[f64], l_xy: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(4 * thetas.len() * l_xy);
    radial_encode_into(v, thetas, l_xy, &mut out);
    out
}

fn radial_encode_into(v: [f64; 2], thetas: &[f64], l_xy: usize, out: &mut Vec<f64>) {
    for &t in thetas {
        let (s, c) = t.sin_cos();
        let xr = c * v[0] - s * v[1];
        let yr = s * v[0] + c * v[1];
        positional_encode_into(xr, l_xy, out);
        positional_encode_into(yr, l_xy, out);
    }
}

/// Draws the `rows × 2` Gaussian projection matrix, row-major.
pub fn gaussian_matrix(rows: usize, seed: u64) -> Vec<[f64; 2]> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..rows)
        .map(|_| {
            let a: f64 = StandardNormal.sample(&mut rng);
            let b: f64 = StandardNormal.sample(&mut rng);
            [a, b]
        })
        .collect()
}

fn gaussian_encode_into(v: [f64; 2], b: &[[f64; 2]], out: &mut Vec<f64>) {
    let phase = |row: &[f64; 2]| 2.0 * PI * (row[0] * v[0] + row[1] * v[1]);
    out.extend(b.iter().map(|r| phase(r).sin()));
    out.extend(b.iter().map(|r| phase(r).cos()));
}

pub fn gaussian_encode(v: [f64; 2], b: &[[f64; 2]]) -> Vec<f64> {
    let mut out = Vec::with_capacity(2 * b.len());
    gaussian_encode_into(v, b, &mut out);
    out
}

/// Encoding with any random state materialized.
#[derive(Clone, Debug, PartialEq)]
pub struct Encoder {
    config: EncodingConfig,
    gaussian: Vec<[f64; 2]>,
}

impl Encoder {
    pub fn new(config: EncodingConfig) -> Result<Self> {
        config.validate()?;
        let gaussian = match config.kind {
            EncodingKind::Gaussian => gaussian_matrix(config.gaussian_rows, config.seed),
            _ => Vec::new(),
        };
        Ok(Self { config, gaussian })
    }

    pub fn config(&self) -> &EncodingConfig {
        &self.config
    }

    pub fn width(&self) -> usize {
        self.config.width()
    }

    pub fn encode_into(&self, c: [f64; 3], out: &mut Vec<f64>) {
        let v = [c[0], c[1]];
        match self.config.kind {
            EncodingKind::Radial => radial_encode_into(v, &self.config.thetas, self.config.l_xy, out),
            EncodingKind::Positional => {
                positional_encode_into(v[0], self.config.l_xy, out);
                positional_encode_into(v[1], self.config.l_xy, out);
            }
            EncodingKind::Gaussian => gaussian_encode_into(v, &self.gaussian, out),
        }
        positional_encode_into(c[2], self.config.l_z, out);
    }

    pub fn encode(&self, c: [f64; 3]) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.width());
        self.encode_into(c, &mut out);
        out
    }

    /// Encodes a batch into a row-major `(n, width)` matrix.
    pub fn encode_batch(&self, coords: &[[f64; 3]]) -> ndarray::Array2<f64> {
        let w = self.width();
        let mut flat = Vec::with_capacity(coords.len() * w);
        for &c in coords {
            self.encode_into(c, &mut flat);
        }
        ndarray::Array2::from_shape_vec((coords.len(), w), flat).expect("encoding width")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn positional_examples() {
        assert_eq!(positional_encode(0.0, 3), vec![0.0, 1.0, 0.0, 1.0, 0.0, 1.0]);
        let e = positional_encode(0.5, 1);
        assert!((e[0] - 1.0).abs() < 1e-15 && e[1].abs() < 1e-15);
        let e = positional_encode(1.0, 2);
        let want = [0.0, -1.0, 0.0, 1.0];
        for (a, b) in e.iter().zip(want) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn radial_identity_rotation_is_positional() {
        let v = [0.37, -0.81];
        let mut want = positional_encode(v[0], 5);
        want.extend(positional_encode(v[1], 5));
        assert_eq!(radial_encode(v, &[0.0], 5), want);
    }

    #[test]
    fn radial_quarter_turn() {
        let (x, y) = (0.3, 0.55);
        let got = radial_encode([x, y], &[PI / 2.0], 3);
        let mut want = positional_encode(-y, 3);
        want.extend(positional_encode(x, 3));
        for (a, b) in got.iter().zip(want) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn radial_origin_pattern() {
        let e = radial_encode([0.0, 0.0], &[0.0, 0.4, 1.1], 4);
        assert_eq!(e.len(), 4 * 3 * 4);
        for pair in e.chunks(2) {
            assert_eq!(pair, [0.0, 1.0]);
        }
    }

    #[test]
    fn gaussian_examples() {
        let b = gaussian_matrix(4, 7);
        let e = gaussian_encode([0.0, 0.0], &b);
        assert_eq!(e, vec![0.0, 0.0, 0.0, 0.0, 1.0, 1.0, 1.0, 1.0]);
        assert_eq!(gaussian_matrix(4, 7), b);

        // independent redraw of the same seeded stream
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let draws: Vec<f64> = (0..8).map(|_| StandardNormal.sample(&mut rng)).collect();
        let v = [0.3, -0.2];
        let got = gaussian_encode(v, &b);
        for r in 0..4 {
            let a = 2.0 * PI * (draws[2 * r] * v[0] + draws[2 * r + 1] * v[1]);
            assert_eq!(got[r], a.sin());
            assert_eq!(got[4 + r], a.cos());
        }
    }

    #[test]
    fn widths() {
        let cfg = EncodingConfig::radial(6, 4, 6);
        let enc = Encoder::new(cfg.clone()).unwrap();
        assert_eq!(enc.encode([0.1, 0.2, 0.3]).len(), 4 * 4 * 6 + 12);
        let g = EncodingConfig {
            kind: EncodingKind::Gaussian,
            gaussian_rows: 5,
            ..cfg
        };
        assert_eq!(Encoder::new(g).unwrap().width(), 10 + 12);
    }

    #[test]
    fn rejects_bad_configs() {
        let mut c = EncodingConfig::radial(4, 2, 4);
        c.thetas = vec![PI];
        assert!(c.validate().is_err());
        let mut c = EncodingConfig::radial(4, 2, 4);
        c.l_z = 0;
        assert!(c.validate().is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn outputs_bounded(x in -1.5f64..1.5, y in -1.5f64..1.5, z in -1.5f64..1.5, l in 1usize..8) {
                for kind in [EncodingKind::Radial, EncodingKind::Positional, EncodingKind::Gaussian] {
                    let cfg = EncodingConfig { kind, gaussian_rows: 6, seed: 1, ..EncodingConfig::radial(l, 3, l) };
                    let enc = Encoder::new(cfg.clone()).unwrap();
                    let e = enc.encode([x, y, z]);
                    prop_assert_eq!(e.len(), cfg.width());
                    prop_assert!(e.iter().all(|v| (-1.0..=1.0).contains(v)));
                }
                prop_assert_eq!(radial_encode([x, y], &[0.0, 0.3], l).len(), 4 * 2 * l);
                prop_assert_eq!(positional_encode(z, l).len(), 2 * l);
            }
        }
    }
}
