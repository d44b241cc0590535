//! Procedural training images for the denoiser.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::classical::gaussian_blur;
use crate::error::{Error, Result};

/// Clean texture and the additive noise realization drawn for it.
#[derive(Clone, Debug, PartialEq)]
pub struct TexturePair {
    pub clean: Array2<f64>,
    pub noise: Array2<f64>,
}

impl TexturePair {
    pub fn noisy(&self) -> Array2<f64> {
        &self.clean + &self.noise
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TextureDataset {
    pub sigma: f64,
    pub pairs: Vec<TexturePair>,
}

const OCTAVES: [f64; 4] = [1.5, 3.0, 6.0, 12.0];

/// Sum of smoothed white-noise octaves with random weights, rescaled to `[0, 1]`.
pub fn make_texture(size: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
    let mut acc = Array2::<f64>::zeros((size, size));
    for &scale in &OCTAVES {
        let white = Array2::from_shape_simple_fn((size, size), || StandardNormal.sample(&mut *rng));
        let smooth = gaussian_blur(&white.view(), scale);
        let std = (smooth.mapv(|v| v * v).mean().unwrap_or(0.0)).sqrt().max(1e-12);
        let weight: f64 = rng.random_range(0.2..1.0);
        acc.scaled_add(weight / std, &smooth);
    }
    let lo = acc.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = acc.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let span = (hi - lo).max(1e-12);
    acc.mapv(|v| ((v - lo) / span).clamp(0.0, 1.0))
}

/// `count` textures of `size²` pixels with AWGN of standard deviation `sigma`.
pub fn make_texture_dataset(count: usize, size: usize, sigma: f64, seed: u64) -> Result<TextureDataset> {
    if size < 2 {
        return Err(Error::InvalidParameter(format!("texture size {size} too small")));
    }
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(Error::InvalidParameter(format!("noise level {sigma} must be finite and >= 0")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pairs = (0..count)
        .map(|_| {
            let clean = make_texture(size, &mut rng);
            let noise = Array2::from_shape_simple_fn((size, size), || {
                let z: f64 = StandardNormal.sample(&mut rng);
                sigma * z
            });
            TexturePair { clean, noise }
        })
        .collect();
    Ok(TextureDataset { sigma, pairs })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_and_bounded() {
        let a = make_texture_dataset(3, 32, 0.05, 11).unwrap();
        let b = make_texture_dataset(3, 32, 0.05, 11).unwrap();
        assert_eq!(a, b);
        for p in &a.pairs {
            assert!(p.clean.iter().all(|v| (0.0..=1.0).contains(v)));
        }
        assert_ne!(a, make_texture_dataset(3, 32, 0.05, 12).unwrap());
    }

    #[test]
    fn noise_level_matches_sigma() {
        let sigma = 0.08;
        let d = make_texture_dataset(1, 128, sigma, 3).unwrap();
        let n = &d.pairs[0].noise;
        let mean = n.mean().unwrap();
        let std = (n.mapv(|v| (v - mean).powi(2)).sum() / (n.len() - 1) as f64).sqrt();
        assert!((std / sigma - 1.0).abs() < 0.02, "std {std}");
    }
}
