use decaf::optics::TfConvention;
use decaf::simulate::{
    desk_phantom_spec, make_phantom, make_setup, simulate_measurements, NoiseSpec, PresetOptions, SetupPreset,
};
use decaf::volume::{Grid3D, PermittivityVolume};
use ndarray::{Array3, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn annular() -> decaf::optics::OpticalSetup {
    make_setup(SetupPreset::Annular24, &PresetOptions::default()).unwrap()
}

#[test]
fn zero_phantom_gives_zero_measurements() {
    let g = Grid3D::centered(16, 16, 2, 0.1625, 0.1625, 0.5).unwrap();
    let y = simulate_measurements(&PermittivityVolume::zeros(g), &annular(), TfConvention::default(), &NoiseSpec::default())
        .unwrap();
    assert!(y.images.iter().all(|&v| v == 0.0));
}

#[test]
fn noise_std_matches() {
    let g = Grid3D::centered(256, 256, 1, 0.1625, 0.1625, 0.5).unwrap();
    let setup = annular();
    let vol = PermittivityVolume::zeros(g);
    for s in [0.01, 0.5] {
        let y = simulate_measurements(&vol, &setup, TfConvention::default(), &NoiseSpec::gaussian(s, 3)).unwrap();
        for img in y.images.axis_iter(Axis(0)).take(3) {
            let n = img.len() as f64;
            let mean = img.sum() / n;
            let std = (img.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
            assert!((std / s - 1.0).abs() < 0.02, "std {std} for {s}");
        }
    }
}

#[test]
fn noise_is_seeded() {
    let g = Grid3D::centered(16, 16, 2, 0.1625, 0.1625, 0.5).unwrap();
    let vol = make_phantom(&desk_phantom_spec(g, 3, 1)).unwrap();
    let run = |seed| simulate_measurements(&vol, &annular(), TfConvention::default(), &NoiseSpec::gaussian(0.1, seed)).unwrap();
    assert_eq!(run(4), run(4));
    assert_ne!(run(4), run(5));
}

#[test]
fn zero_mean_slices_give_zero_mean_images() {
    let g = Grid3D::centered(32, 32, 3, 0.1625, 0.1625, 0.5).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut re = Array3::from_shape_simple_fn(g.shape(), || rng.random_range(-0.1..0.1));
    let mut im = Array3::from_shape_simple_fn(g.shape(), || rng.random_range(-0.05..0.05));
    for a in [&mut re, &mut im] {
        for mut s in a.axis_iter_mut(Axis(0)) {
            let m = s.mean().unwrap();
            s.mapv_inplace(|v| v - m);
        }
    }
    let vol = PermittivityVolume::new(g, re, im).unwrap();
    for preset in [SetupPreset::Annular24, SetupPreset::Dense89, SetupPreset::Multiplexed16x6] {
        let setup = make_setup(preset, &PresetOptions::default()).unwrap();
        for convention in [TfConvention::default(), TfConvention::hermitian()] {
            let y = simulate_measurements(&vol, &setup, convention, &NoiseSpec::default()).unwrap();
            for img in y.images.axis_iter(Axis(0)) {
                assert!(img.mean().unwrap().abs() <= 1e-10);
                assert!(img.iter().all(|v| v.is_finite()));
            }
        }
    }
}

#[test]
fn desk_phantom_gives_24_images() {
    let g = Grid3D::centered(64, 64, 8, 0.1625, 0.1625, 0.5).unwrap();
    let spec = desk_phantom_spec(g, 10, 0);
    let vol = make_phantom(&spec).unwrap();
    assert_eq!(vol, make_phantom(&spec).unwrap());
    let y = simulate_measurements(&vol, &annular(), TfConvention::default(), &NoiseSpec::default()).unwrap();
    assert_eq!(y.images.dim(), (24, 64, 64));
    assert!(y.norm() > 0.0);
}
