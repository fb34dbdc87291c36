use ocpls_core::curvature::simplified_hessian;
use ocpls_core::optimizer::{step_with_curvature, OcpLsConfig, OptimizerState};
use ocpls_core::problems::QuadraticProblem;
use ocpls_core::theory::{check_a3, estimate_beta, rho_infinity};
use ocpls_core::{Objective, OcpLs, Optimizer, ParamVector};
use proptest::prelude::*;

fn vec_strategy(len: usize, lo: f64, hi: f64) -> impl Strategy<Value = ParamVector> {
    prop::collection::vec(lo..hi, len).prop_map(ParamVector::new)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn simplified_curvature_is_nonnegative(g in vec_strategy(16, -1e150, 1e150)) {
        let h = simplified_hessian(&g).unwrap();
        prop_assert!(h.diag.iter().all(|v| *v >= 0.0));
    }

    #[test]
    fn identical_runs_are_bit_identical(
        grads in prop::collection::vec(vec_strategy(5, -3.0, 3.0), 1..30),
        alpha in 1e-3f64..1.0,
    ) {
        let cfg = OcpLsConfig { alpha, ..OcpLsConfig::default() };
        let run = || {
            let mut opt = OcpLs::new(5, cfg.clone()).unwrap();
            let mut x = ParamVector::ones(5);
            for g in &grads {
                x = opt.step(&x, g).unwrap();
            }
            (x, opt.state.clone())
        };
        let (a, b) = (run(), run());
        prop_assert_eq!(a.0.as_slice().iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
                        b.0.as_slice().iter().map(|v| v.to_bits()).collect::<Vec<_>>());
        prop_assert_eq!(a.1, b.1);
    }

    #[test]
    fn forced_inverse_curvature_is_gradient_descent(
        seed in 0u64..1000,
        alpha in 0.01f64..0.4,
        x0 in vec_strategy(4, -2.0, 2.0),
    ) {
        let prob = QuadraticProblem::rotated(vec![0.5, 1.0, 2.0, 2.4], ParamVector::filled(4, 0.3), 0.0, seed).unwrap();
        let cfg = OcpLsConfig { alpha, beta1: 0.0, beta2: 0.0, lambda: 0.0, ..OcpLsConfig::default() };
        let h = ParamVector::filled(4, 1.0 / alpha);
        let mut opt = OcpLs::new(4, cfg).unwrap();
        let (mut x, mut y) = (x0.clone(), x0);
        for _ in 0..50 {
            let (_, g) = prob.value_grad(&x).unwrap();
            x = opt.step_with(&x, &g, &h).unwrap();
            let (_, gy) = prob.value_grad(&y).unwrap();
            y = y.scale_add(-alpha, &gy).unwrap();
        }
        let scale = y.max_abs().max(1.0);
        prop_assert!(x.scale_add(-1.0, &y).unwrap().max_abs() <= 1e-12 * scale);
    }

    #[test]
    fn pl_witness_on_random_quadratics(
        seed in 0u64..1000,
        lam in 0.0f64..0.5,
        x in vec_strategy(5, -4.0, 4.0),
    ) {
        let prob = QuadraticProblem::with_spectrum(5, 0.2, 6.0, lam, Some(seed)).unwrap();
        let (_, g) = prob.value_grad(&x).unwrap();
        let gap = prob.gap(&x).unwrap();
        prop_assert!(0.5 * g.norm_sq() >= prob.pl_constant() * gap * (1.0 - 1e-12));
    }

    #[test]
    fn beta_estimate_is_a_lower_bound_that_grows(seed in 0u64..1000, n in 1usize..12) {
        let prob = QuadraticProblem::with_spectrum(3, 0.5, 5.0, 0.1, Some(seed)).unwrap();
        let center = ParamVector::zeros(3);
        let b_n = estimate_beta(&prob, &center, 1.0, n, seed).unwrap();
        let b_more = estimate_beta(&prob, &center, 1.0, n + 5, seed).unwrap();
        prop_assert!(b_n <= b_more);
        prop_assert!(b_more <= prob.smoothness() * (1.0 + 1e-12));
    }

    #[test]
    fn a3_never_holds_at_the_boundaries(
        h in vec_strategy(6, 0.0, 10.0),
        alpha in 0.01f64..2.0,
        k in 0u64..50,
        zero_at in 0usize..6,
        boundary in any::<bool>(),
    ) {
        let mut h = h;
        h[zero_at] = if boundary { 2.0 / alpha * (1.0 + 1e-12) } else { 0.0 };
        let report = check_a3(&h, alpha, k);
        prop_assert!(!report.holds);
    }

    #[test]
    fn rho_decreases_in_mu(alpha in 0.1f64..5.0, frac in 0.05f64..1.95, m1 in 0.0f64..1.0, m2 in 0.0f64..1.0) {
        let beta = frac * alpha;
        let mu_max = alpha * beta / (2.0 * alpha - beta);
        let (lo, hi) = (m1.min(m2) * mu_max, m1.max(m2) * mu_max);
        prop_assume!(lo > 0.0 && hi > lo);
        let (r_lo, r_hi) = (rho_infinity(alpha, beta, lo).unwrap(), rho_infinity(alpha, beta, hi).unwrap());
        prop_assert!(r_hi <= r_lo);
        prop_assert!((0.0..1.0).contains(&r_lo));
    }
}

#[test]
fn state_moves_between_threads() {
    let cfg = OcpLsConfig::default();
    let state = OptimizerState::new(3);
    let x = ParamVector::ones(3);
    let g = ParamVector::new(vec![0.1, -0.2, 0.3]);
    let here = step_with_curvature(&state, &x, &g, &g.hadamard(&g).unwrap(), &cfg).unwrap();
    let there = std::thread::spawn(move || step_with_curvature(&state, &x, &g, &g.hadamard(&g).unwrap(), &cfg).unwrap())
        .join()
        .unwrap();
    assert_eq!(here, there);
}
