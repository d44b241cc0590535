use decaf::field::{EncodingConfig, EncodingKind, FieldConfig, MlpConfig, NeuralField};
use decaf::volume::Grid3D;
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn field(kind: EncodingKind) -> NeuralField {
    NeuralField::new(&FieldConfig {
        encoding: EncodingConfig {
            kind,
            gaussian_rows: 8,
            seed: 4,
            ..EncodingConfig::radial(3, 2, 3)
        },
        mlp: MlpConfig {
            layers: 6,
            width: 32,
            output_scale: 1.0,
            seed: 9,
            ..Default::default()
        },
    })
    .unwrap()
}

#[test]
fn backward_matches_central_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let coords: Vec<[f64; 3]> = (0..40)
        .map(|_| [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)])
        .collect();
    let mut f = field(EncodingKind::Radial);
    let x = f.encoder.encode_batch(&coords);
    let c = Array2::from_shape_simple_fn((coords.len(), 2), || rng.random_range(-1.0..1.0));
    // smooth objective: Σ c ⊙ out + ½ Σ out²
    let objective = |f: &NeuralField| {
        let out = f.mlp.forward(x.view()).unwrap();
        (&out * &c).sum() + 0.5 * out.mapv(|v| v * v).sum()
    };
    let (out, caches) = f.mlp.forward_cached(x.view()).unwrap();
    let grads = f.mlp.backward(&caches, (&c + &out).view()).unwrap();

    let h = 1e-6;
    let mut checked = 0;
    for l in 0..6 {
        let (rows, cols) = f.mlp.params.weights[l].dim();
        for _ in 0..6 {
            let idx = [rng.random_range(0..rows), rng.random_range(0..cols)];
            let orig = f.mlp.params.weights[l][idx];
            f.mlp.params.weights[l][idx] = orig + h;
            let up = objective(&f);
            f.mlp.params.weights[l][idx] = orig - h;
            let down = objective(&f);
            f.mlp.params.weights[l][idx] = orig;
            let fd = (up - down) / (2.0 * h);
            let an = grads.weights[l][idx];
            assert!((fd - an).abs() <= 1e-5 * an.abs().max(1e-3), "layer {l} {idx:?}: fd {fd} analytic {an}");
            checked += 1;
        }
        let j = rng.random_range(0..cols);
        let orig = f.mlp.params.biases[l][j];
        f.mlp.params.biases[l][j] = orig + h;
        let up = objective(&f);
        f.mlp.params.biases[l][j] = orig - h;
        let down = objective(&f);
        f.mlp.params.biases[l][j] = orig;
        let fd = (up - down) / (2.0 * h);
        let an = grads.biases[l][j];
        assert!((fd - an).abs() <= 1e-5 * an.abs().max(1e-3), "bias {l}: fd {fd} analytic {an}");
    }
    assert_eq!(checked, 36);
}

#[test]
fn batch_gradient_is_sum_of_sample_gradients() {
    let f = field(EncodingKind::Gaussian);
    let coords: Vec<[f64; 3]> = (0..1500).map(|i| {
        let t = i as f64 / 1500.0;
        [2.0 * t - 1.0, (7.0 * t).sin(), (3.0 * t).cos()]
    }).collect();
    let x = f.encoder.encode_batch(&coords);
    let g_out = Array2::from_shape_fn((coords.len(), 2), |(i, j)| ((i * 3 + j) % 5) as f64 - 2.0);
    let (_, caches) = f.mlp.forward_cached(x.view()).unwrap();
    let total = f.mlp.backward(&caches, g_out.view()).unwrap();
    let mut sum = total.zeros_like();
    for part in [0..700, 700..1500] {
        let (_, c) = f.mlp.forward_cached(x.slice(ndarray::s![part.clone(), ..])).unwrap();
        sum.add_assign(&f.mlp.backward(&c, g_out.slice(ndarray::s![part, ..])).unwrap());
    }
    for (a, b) in total.iter().zip(sum.iter()) {
        assert!((a - b).abs() <= 1e-9 * (1.0 + a.abs()));
    }
}

#[test]
fn render_is_deterministic_and_grid_free() {
    let f = field(EncodingKind::Positional);
    let g = Grid3D::centered(6, 5, 4, 0.3, 0.3, 0.5).unwrap();
    let a = f.render_grid(&g).unwrap();
    let b = f.render_grid(&g).unwrap();
    assert_eq!(a, b);
    let fine = f.render_grid(&g.upsampled(4, 4, 4).unwrap()).unwrap();
    assert_eq!(fine.re[[12, 20, 16]], a.re[[3, 5, 4]]);
}
