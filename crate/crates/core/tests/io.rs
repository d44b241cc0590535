use std::fs;

use decaf::denoiser::{Dncnn, DncnnConfig};
use decaf::field::{EncodingConfig, FieldConfig, MlpConfig, NeuralField};
use decaf::io::{
    export_line_profile, export_slice, line_path, quantize_params, read_csv_image, read_denoiser, read_field,
    read_measurements, read_png16, read_volume, sidecar_path, slice_of, write_denoiser, write_field,
    write_measurements, write_volume, ExportFormat, PngSidecar, SliceAxis,
};
use decaf::optics::MeasurementSet;
use decaf::volume::{Grid3D, PermittivityVolume};
use decaf::Error;
use ndarray::Array3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn f32_round(a: &Array3<f64>) -> Array3<f64> {
    a.mapv(|v| v as f32 as f64)
}

fn small_field() -> NeuralField {
    NeuralField::new(&FieldConfig {
        encoding: EncodingConfig::radial(3, 2, 2),
        mlp: MlpConfig {
            layers: 4,
            width: 16,
            seed: 3,
            ..Default::default()
        },
    })
    .unwrap()
}

#[test]
fn volume_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let g = Grid3D::new(5, 4, 3, 0.1, 0.2, 0.5, -0.5).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let re = Array3::from_shape_simple_fn(g.shape(), || rng.random_range(-1.0..1.0));
    let im = Array3::from_shape_simple_fn(g.shape(), || rng.random_range(-1.0..1.0));
    let vol = PermittivityVolume::new(g, re, im).unwrap();
    let p = dir.path().join("v.dcaf");
    write_volume(&p, &vol).unwrap();
    let back = read_volume(&p).unwrap();
    assert_eq!(back.grid, g);
    assert_eq!(back.re, f32_round(&vol.re));
    assert_eq!(back.im, f32_round(&vol.im));

    // real-only volumes drop the imaginary channel
    let real = PermittivityVolume::new(g, vol.re.clone(), Array3::zeros(g.shape())).unwrap();
    write_volume(&p, &real).unwrap();
    assert_eq!(fs::metadata(&p).unwrap().len() as usize, 4 + 2 + 12 + 32 + 1 + 4 * 60);
    assert_eq!(read_volume(&p).unwrap().im, Array3::<f64>::zeros(g.shape()));
}

#[test]
fn measurement_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let m = MeasurementSet {
        images: Array3::from_shape_fn((3, 4, 5), |(p, i, j)| (p * 100 + i * 10 + j) as f64 * 0.25),
    };
    let p = dir.path().join("m.dcam");
    write_measurements(&p, &m).unwrap();
    assert_eq!(read_measurements(&p).unwrap(), m);
}

#[test]
fn bad_files_are_format_errors() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("x.dcaf");
    fs::write(&p, b"NOPE").unwrap();
    assert!(matches!(read_volume(&p), Err(Error::Format { .. })));
    let m = MeasurementSet::zeros(2, 3, 3);
    write_measurements(&p, &m).unwrap();
    let mut bytes = fs::read(&p).unwrap();
    bytes.pop();
    fs::write(&p, &bytes).unwrap();
    assert!(matches!(read_measurements(&p), Err(Error::Format { .. })));
    bytes.extend_from_slice(&[0; 5]);
    fs::write(&p, &bytes).unwrap();
    assert!(matches!(read_measurements(&p), Err(Error::Format { .. })));
    assert!(matches!(read_volume(&dir.path().join("missing")), Err(Error::Io(_))));
}

#[test]
fn field_round_trip_renders_identically() {
    let dir = tempfile::tempdir().unwrap();
    let mut field = small_field();
    quantize_params(&mut field.mlp.params);
    let p = dir.path().join("f.dcfw");
    write_field(&p, &field).unwrap();
    let back = read_field(&p).unwrap();
    assert_eq!(back, field);
    let g = Grid3D::centered(8, 8, 3, 0.2, 0.2, 0.5).unwrap();
    assert_eq!(back.render_grid(&g).unwrap(), field.render_grid(&g).unwrap());
}

#[test]
fn weight_file_size_is_grid_free() {
    let dir = tempfile::tempdir().unwrap();
    let field = small_field();
    let mut sizes = Vec::new();
    for f in [1, 2, 4] {
        let grid = Grid3D::centered(8 * f, 8 * f, 4 * f, 0.2 / f as f64, 0.2 / f as f64, 0.5 / f as f64).unwrap();
        let (wp, vp) = (dir.path().join(format!("{f}.dcfw")), dir.path().join(format!("{f}.dcaf")));
        write_field(&wp, &field).unwrap();
        write_volume(&vp, &field.render_grid(&grid).unwrap()).unwrap();
        sizes.push((fs::metadata(&wp).unwrap().len(), fs::metadata(&vp).unwrap().len()));
    }
    assert!(sizes.iter().all(|s| s.0 == sizes[0].0));
    for w in sizes.windows(2) {
        // the fixed header keeps the ratio slightly under 8
        let ratio = w[1].1 as f64 / w[0].1 as f64;
        assert!((7.5..=8.0).contains(&ratio), "{sizes:?}");
    }
}

#[test]
fn denoiser_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let mut net = Dncnn::new(DncnnConfig {
        layers: 3,
        channels: 4,
        seed: 2,
    })
    .unwrap();
    quantize_params(&mut net.params);
    let p = dir.path().join("d.dcdn");
    write_denoiser(&p, &net, 0.04).unwrap();
    let (back, sigma) = read_denoiser(&p).unwrap();
    assert_eq!(back, net);
    assert_eq!(sigma, 0.04);
}

#[test]
fn constant_volume_exports_constant_png() {
    let dir = tempfile::tempdir().unwrap();
    let v = Array3::from_elem((2, 6, 5), 0.3);
    let p = dir.path().join("c.png");
    export_slice(&v, SliceAxis::Z, 1, ExportFormat::Png, &p).unwrap();
    let img = read_png16(&p).unwrap();
    assert_eq!(img.dim(), (6, 5));
    assert!(img.iter().all(|&q| q == img[[0, 0]]));
}

#[test]
fn png_sidecar_matches_extrema() {
    let dir = tempfile::tempdir().unwrap();
    let v = Array3::from_shape_fn((3, 7, 4), |(z, x, y)| (z as f64 - 1.0) * (x as f64 * 0.3 - y as f64 * 0.11));
    let p = dir.path().join("s.png");
    export_slice(&v, SliceAxis::X, 2, ExportFormat::Png, &p).unwrap();
    let side: PngSidecar = serde_json::from_str(&fs::read_to_string(sidecar_path(&p)).unwrap()).unwrap();
    let s = slice_of(&v, SliceAxis::X, 2).unwrap();
    assert_eq!(side.min, s.iter().copied().fold(f64::INFINITY, f64::min));
    assert_eq!(side.max, s.iter().copied().fold(f64::NEG_INFINITY, f64::max));
    let img = read_png16(&p).unwrap();
    assert_eq!(img.dim(), (3, 4));
    assert_eq!(*img.iter().min().unwrap(), 0);
    assert_eq!(*img.iter().max().unwrap(), 65535);
}

#[test]
fn csv_round_trips_f32() {
    let dir = tempfile::tempdir().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let v = Array3::from_shape_simple_fn((2, 5, 6), || rng.random_range(-1e3..1e3) * rng.random_range(1e-9..1.0));
    let p = dir.path().join("s.csv");
    export_slice(&v, SliceAxis::Z, 0, ExportFormat::Csv, &p).unwrap();
    let back = read_csv_image(&p).unwrap();
    let want = slice_of(&v, SliceAxis::Z, 0).unwrap().mapv(|x| x as f32);
    assert_eq!(back, want);
}

#[test]
fn line_profile_export() {
    let dir = tempfile::tempdir().unwrap();
    let v = Array3::from_shape_fn((2, 8, 8), |(z, x, y)| (z * 64 + x * 8 + y) as f64);
    let p = dir.path().join("l.csv");
    export_line_profile(&v, &line_path([1, 0, 0], [1, 7, 7]), &p).unwrap();
    let text = fs::read_to_string(&p).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "step,z,x,y,value");
    assert_eq!(lines.len(), 9);
    assert_eq!(lines[8], "7,1,7,7,127");
    assert!(export_line_profile(&v, &[[2, 0, 0]], &p).is_err());
}
