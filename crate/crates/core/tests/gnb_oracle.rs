use ocpls_core::curvature::{exact_gn_diagonal, gnb_mse_estimate, gnb_per_sample_estimate, CurvatureEstimate};
use ocpls_core::problems::LinearLeastSquares;
use ocpls_core::ParamVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Mean and standard error per coordinate over `draws` estimates.
fn monte_carlo(draws: usize, dim: usize, mut sample: impl FnMut() -> CurvatureEstimate) -> (Vec<f64>, Vec<f64>) {
    let mut sum = vec![0.0; dim];
    let mut sum_sq = vec![0.0; dim];
    for _ in 0..draws {
        let est = sample();
        for (i, v) in est.diag.iter().enumerate() {
            sum[i] += v;
            sum_sq[i] += v * v;
        }
    }
    let n = draws as f64;
    let mean: Vec<f64> = sum.iter().map(|s| s / n).collect();
    let se = sum_sq
        .iter()
        .zip(&mean)
        .map(|(sq, m)| ((sq / n - m * m) * n / (n - 1.0) / n).sqrt())
        .collect();
    (mean, se)
}

#[test]
fn both_gnb_forms_are_unbiased_on_a_small_batch() {
    let model = LinearLeastSquares::random(4, 10, 31).unwrap();
    let x = ParamVector::new((0..10).map(|i| 0.1 * i as f64 - 0.4).collect());
    let batch = [0, 1, 2, 3];
    let exact = exact_gn_diagonal(&model, &x, &batch).unwrap().diag;

    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let (mb_mean, mb_se) = monte_carlo(100_000, 10, || gnb_mse_estimate(&model, &x, &batch, 1.0, &mut rng).unwrap());
    let mut rng = ChaCha8Rng::seed_from_u64(78);
    let (ps_mean, ps_se) = monte_carlo(100_000, 10, || gnb_per_sample_estimate(&model, &x, &batch, 1.0, &mut rng).unwrap());

    for i in 0..10 {
        assert!((mb_mean[i] - exact[i]).abs() <= 3.0 * mb_se[i], "mini-batch coord {i}: {} vs {}", mb_mean[i], exact[i]);
        assert!((ps_mean[i] - exact[i]).abs() <= 3.0 * ps_se[i], "per-sample coord {i}: {} vs {}", ps_mean[i], exact[i]);
        let joint_se = (mb_se[i].powi(2) + ps_se[i].powi(2)).sqrt();
        assert!((mb_mean[i] - ps_mean[i]).abs() <= 4.0 * joint_se, "forms disagree at {i}");
    }
}
