//! Separable Gaussian blur with half-sample symmetric boundaries.
//!
//! Half-sample symmetric extension (`… x1 x0 | x0 x1 …`) makes the blur
//! matrix symmetric with unit row and column sums, so the residual
//! `x − blur(x)` is exactly mean free. A regularizer built on it cannot push
//! the slice mean, which the forward model does not observe.

use ndarray::{Array2, ArrayView2};

/// Normalized Gaussian taps of radius `⌈3σ⌉`.
pub fn gaussian_kernel(std: f64) -> Vec<f64> {
    let radius = (3.0 * std).ceil().max(1.0) as isize;
    let mut w: Vec<f64> = (-radius..=radius)
        .map(|k| (-0.5 * (k as f64 / std).powi(2)).exp())
        .collect();
    let total: f64 = w.iter().sum();
    w.iter_mut().for_each(|v| *v /= total);
    w
}

/// Maps any integer index into `0..n` by half-sample symmetric reflection.
pub fn symmetric_index(mut j: isize, n: usize) -> usize {
    let n = n as isize;
    let period = 2 * n;
    j = j.rem_euclid(period);
    if j >= n {
        j = period - 1 - j;
    }
    j as usize
}

fn blur_axis(src: &ArrayView2<f64>, taps: &[f64], along_rows: bool) -> Array2<f64> {
    let (nx, ny) = src.dim();
    let r = (taps.len() / 2) as isize;
    Array2::from_shape_fn((nx, ny), |(i, j)| {
        let mut acc = 0.0;
        for (t, &w) in taps.iter().enumerate() {
            let k = t as isize - r;
            acc += if along_rows {
                w * src[[symmetric_index(i as isize + k, nx), j]]
            } else {
                w * src[[i, symmetric_index(j as isize + k, ny)]]
            };
        }
        acc
    })
}

/// Gaussian blur with standard deviation `std` pixels.
pub fn gaussian_blur(image: &ArrayView2<f64>, std: f64) -> Array2<f64> {
    let taps = gaussian_kernel(std);
    let tmp = blur_axis(image, &taps, true);
    blur_axis(&tmp.view(), &taps, false)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reflection_indices() {
        let idx: Vec<usize> = (-3..8).map(|j| symmetric_index(j, 5)).collect();
        assert_eq!(idx, vec![2, 1, 0, 0, 1, 2, 3, 4, 4, 3, 2]);
        assert_eq!(symmetric_index(-5, 2), 0);
        assert_eq!(symmetric_index(-2, 2), 1);
    }

    #[test]
    fn constant_is_fixed_point() {
        let img = Array2::from_elem((6, 9), 0.37);
        let out = gaussian_blur(&img.view(), 1.5);
        assert!(out.iter().all(|v| (v - 0.37).abs() < 1e-15));
    }

    #[test]
    fn preserves_mean() {
        let img = Array2::from_shape_fn((7, 5), |(i, j)| ((i * 13 + j * 7) % 11) as f64 - 3.0);
        for std in [0.7, 1.0, 2.5, 6.0] {
            let out = gaussian_blur(&img.view(), std);
            assert!((out.sum() - img.sum()).abs() < 1e-11, "std {std}");
        }
    }

    #[test]
    fn blur_matrix_is_symmetric() {
        let n = 6;
        let col = |j: usize| {
            let e = Array2::from_shape_fn((n, 1), |(i, _)| if i == j { 1.0 } else { 0.0 });
            gaussian_blur(&e.view(), 1.3)
        };
        for a in 0..n {
            for b in 0..n {
                assert!((col(a)[[b, 0]] - col(b)[[a, 0]]).abs() < 1e-15);
            }
        }
    }
}
