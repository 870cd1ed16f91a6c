use hdrec_denoiser::gradcheck::{check_l1, check_model, check_perceptual, probe_model, GradCheck};
use hdrec_denoiser::{build_featnet, build_model, DenoiserConfig};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const TOL: f64 = 1e-4;
const H: f64 = 1e-6;

fn random_image(n: usize, seed: u64) -> Array2<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Array2::from_shape_fn((n, n), |_| rng.gen_range(0.0..1.0))
}

fn assert_all(checks: &[GradCheck]) {
    for c in checks {
        assert!(c.max_rel_error < TOL, "{}: {:.3e} over {} entries", c.name, c.max_rel_error, c.entries);
    }
}

#[test]
fn model_gradients_match_finite_differences() {
    let configs = [
        DenoiserConfig { n_scales: 2, base_channels: 2, residual_units_per_stage: 1, kernel: 3, seed: 1 },
        DenoiserConfig { n_scales: 3, base_channels: 2, residual_units_per_stage: 2, kernel: 3, seed: 2 },
        DenoiserConfig { n_scales: 2, base_channels: 3, residual_units_per_stage: 1, kernel: 1, seed: 3 },
    ];
    for (k, cfg) in configs.iter().enumerate() {
        let model = probe_model(cfg).unwrap();
        let featnet = build_featnet(10 + k as u64);
        let input = random_image(8, 100 + k as u64);
        let target = random_image(8, 200 + k as u64);
        let checks = check_model(&model, input.view(), target.view(), 1.0, 0.5, &featnet, H).unwrap();
        assert_eq!(checks.len(), model.params().len() + 1);
        assert_all(&checks);
    }
}

#[test]
fn loss_gradients_match_finite_differences() {
    for seed in 0..3 {
        let featnet = build_featnet(seed);
        let pred = random_image(16, 300 + seed);
        let target = random_image(16, 400 + seed);
        assert_all(&[check_perceptual(pred.view(), target.view(), &featnet, H).unwrap()]);
        assert_all(&[check_l1(pred.view(), target.view(), H).unwrap()]);
    }
}

#[test]
fn jacobian_vector_product_matches_forward_difference() {
    let cfg = DenoiserConfig { n_scales: 3, base_channels: 3, residual_units_per_stage: 1, kernel: 3, seed: 9 };
    let model = build_model(&cfg).unwrap();
    let x = random_image(16, 1);
    let v = random_image(16, 2) - 0.5;
    let u = random_image(16, 3) - 0.5;
    let (tape, out) = hdrec_denoiser::forward_tape(&model, x.view()).unwrap();
    let (_, dx) = hdrec_denoiser::backward(&model, &tape, out, &u);
    let backward_product = (&dx * &v).sum();

    let h = 1e-7;
    let y0 = hdrec_denoiser::forward(&model, x.view()).unwrap();
    let y1 = hdrec_denoiser::forward(&model, (&x + &(&v * h)).view()).unwrap();
    let forward_product = (&(&(y1 - y0) / h) * &u).sum();
    let rel = (backward_product - forward_product).abs() / backward_product.abs();
    assert!(rel < TOL, "{backward_product} vs {forward_product}");
}
