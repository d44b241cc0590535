use std::f64::consts::PI;

use decaf::optics::{build_tf_stack, forward, MeasurementSet, OpticalSetup, TfConvention, TransferFunctionStack};
use decaf::simulate::{make_setup, PresetOptions, SetupPreset};
use decaf::tikhonov::{normal_residual, tikhonov_cg, tikhonov_solve, TikhonovSystem};
use decaf::volume::{Grid3D, PermittivityVolume};
use ndarray::Array3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn annular() -> OpticalSetup {
    make_setup(SetupPreset::Annular24, &PresetOptions::default()).unwrap()
}

fn random_volume(grid: Grid3D, seed: u64) -> PermittivityVolume {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let re = Array3::from_shape_simple_fn(grid.shape(), || rng.random_range(-0.1..0.1));
    let im = Array3::from_shape_simple_fn(grid.shape(), || rng.random_range(-0.05..0.05));
    PermittivityVolume::new(grid, re, im).unwrap()
}

fn random_measurements(stack: &TransferFunctionStack, seed: u64) -> MeasurementSet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (nx, ny) = stack.lateral_shape();
    MeasurementSet {
        images: Array3::from_shape_simple_fn((stack.measurement_count(), nx, ny), || rng.random_range(-1.0..1.0)),
    }
}

fn rel_diff(a: &PermittivityVolume, b: &PermittivityVolume) -> f64 {
    let mut d = a.clone();
    d.add_scaled(-1.0, b);
    d.norm() / b.norm()
}

fn grid() -> Grid3D {
    Grid3D::centered(16, 16, 4, 0.1625, 0.1625, 0.5).unwrap()
}

#[test]
fn zero_data_gives_zero_volume() {
    let stack = build_tf_stack(&annular(), &grid(), TfConvention::default()).unwrap();
    let y = MeasurementSet::zeros(24, 16, 16);
    let x = tikhonov_solve(&stack, &y, 1e-3).unwrap();
    assert!(x.re.iter().chain(x.im.iter()).all(|&v| v == 0.0));
}

#[test]
fn rejects_non_positive_tau() {
    let stack = build_tf_stack(&annular(), &grid(), TfConvention::default()).unwrap();
    let y = MeasurementSet::zeros(24, 16, 16);
    assert!(tikhonov_solve(&stack, &y, 0.0).is_err());
    assert!(tikhonov_solve(&stack, &y, -1.0).is_err());
}

#[test]
fn satisfies_normal_equations() {
    for convention in [TfConvention::default(), TfConvention::hermitian()] {
        let stack = build_tf_stack(&annular(), &grid(), convention).unwrap();
        for (seed, tau) in [(1, 1e-2), (2, 1.0), (3, 1e2)] {
            let y = random_measurements(&stack, seed);
            let x = tikhonov_solve(&stack, &y, tau).unwrap();
            let r = normal_residual(&stack, &y, &x, tau).unwrap();
            assert!(r <= 1e-8, "{convention:?} tau {tau}: residual {r:e}");
        }
    }
}

#[test]
fn recovers_band_limited_single_slice() {
    let n = 32;
    let g = Grid3D::centered(n, n, 1, 0.1625, 0.1625, 1.0).unwrap();
    let setup = annular();
    let stack = build_tf_stack(&setup, &g, TfConvention::default()).unwrap();
    // cosines on DFT bins well inside the illuminated band, away from the
    // phase-TF zero at DC
    let step = 2.0 * PI / (n as f64 * g.dx);
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut waves = Vec::new();
    while waves.len() < 6 {
        let (kx, ky) = (rng.random_range(-8i32..=8), rng.random_range(-8i32..=8));
        let u = step * f64::from(kx).hypot(f64::from(ky));
        if (2.0..=10.0).contains(&u) {
            waves.push((kx, ky, rng.random_range(0.0..2.0 * PI), rng.random_range(0.01..0.03)));
        }
    }
    let re = Array3::from_shape_fn(g.shape(), |(_, i, j)| {
        waves
            .iter()
            .map(|&(kx, ky, ph, a)| {
                a * (2.0 * PI * (f64::from(kx) * i as f64 + f64::from(ky) * j as f64) / n as f64 + ph).cos()
            })
            .sum()
    });
    let truth = PermittivityVolume::new(g, re, Array3::zeros(g.shape())).unwrap();
    let y = forward(&stack, &truth).unwrap();
    let x = tikhonov_solve(&stack, &y, 1e-8).unwrap();
    let err = rel_diff(&x, &truth);
    assert!(err <= 1e-3, "relative error {err:e}");
}

#[test]
fn norm_shrinks_with_tau() {
    let stack = build_tf_stack(&annular(), &grid(), TfConvention::hermitian()).unwrap();
    let y = forward(&stack, &random_volume(grid(), 4)).unwrap();
    let system = TikhonovSystem::new(&stack, &y).unwrap();
    let norms: Vec<f64> = (-6..=4)
        .map(|e| system.solve(10f64.powi(e)).unwrap().norm())
        .collect();
    for w in norms.windows(2) {
        assert!(w[1] <= w[0] * (1.0 + 1e-12), "{norms:?}");
    }
}

#[test]
fn linear_in_data() {
    let stack = build_tf_stack(&annular(), &grid(), TfConvention::default()).unwrap();
    let y1 = random_measurements(&stack, 5);
    let y2 = random_measurements(&stack, 6);
    let mut y12 = y1.clone();
    y12.images += &y2.images;
    let system = |y: &MeasurementSet| TikhonovSystem::new(&stack, y).unwrap().solve(0.1).unwrap();
    let mut sum = system(&y1);
    sum.add_scaled(1.0, &system(&y2));
    let both = system(&y12);
    assert!(rel_diff(&both, &sum) <= 1e-10);
}

#[test]
fn cg_agrees_with_direct() {
    for convention in [TfConvention::default(), TfConvention::hermitian()] {
        let stack = build_tf_stack(&annular(), &grid(), convention).unwrap();
        let y = random_measurements(&stack, 8);
        let tau = 1.0;
        let direct = tikhonov_solve(&stack, &y, tau).unwrap();
        let cg = tikhonov_cg(&stack, &y, tau, 1e-10, 1000).unwrap();
        let d = rel_diff(&cg, &direct);
        assert!(d <= 1e-8, "{convention:?}: {d:e}");
    }
}
