use logbsde::forward::{exp_moment_estimate, norm_equivalence_check, simulate_paths, DiffusionSpec, NormEquivalenceSetup};
use logbsde::grid::{SpaceGrid, TimeGrid};
use logbsde::ode::{integrate, OdeOptions};
use logbsde::quadrature::adaptive_integrate;

fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

/// `P(sup_{s≤T} |W_s| < a)` by the method of images.
fn two_sided_sup_cdf(a: f64, horizon: f64) -> f64 {
    let s = horizon.sqrt();
    // Below 0.05√T the probability is under e^{-400}.
    if a <= 0.05 * s {
        return 0.0;
    }
    let terms = (10.0 * s / a) as i32 + 5;
    (-terms..=terms)
        .map(|k| {
            let kf = k as f64;
            let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
            sign * (normal_cdf((2.0 * kf + 1.0) * a / s) - normal_cdf((2.0 * kf - 1.0) * a / s))
        })
        .sum()
}

/// `E exp(κ sup|W|²) = 1 + ∫ 2κa e^{κa²} P(sup|W| > a) da`.
fn exp_sup_oracle(kappa: f64, horizon: f64) -> f64 {
    let integrand = |a: f64| 2.0 * kappa * a * (kappa * a * a).exp() * (1.0 - two_sided_sup_cdf(a, horizon));
    1.0 + adaptive_integrate(&integrand, 0.0, 20.0, 1e-10)
}

#[test]
fn images_series_is_a_distribution() {
    assert!(two_sided_sup_cdf(0.2, 1.0) < 1e-12);
    assert!((two_sided_sup_cdf(0.2, 1.0) - two_sided_sup_cdf(0.06, 1.0)).abs() < 1e-12);
    assert!((two_sided_sup_cdf(10.0, 1.0) - 1.0).abs() < 1e-12);
    // One-sided reflection bound: P(sup|W| ≥ a) ≤ 2 P(sup W ≥ a) = 4 P(W_1 ≥ a).
    for a in [0.5, 1.0, 2.0] {
        assert!(1.0 - two_sided_sup_cdf(a, 1.0) <= 4.0 * (1.0 - normal_cdf(a)) + 1e-12);
    }
}

#[test]
fn brownian_exponential_moment_matches_reflection_oracle() {
    let kappa = 0.3;
    let grid = TimeGrid::uniform(0.0, 1.0, 1000).unwrap();
    let b = simulate_paths(&DiffusionSpec::brownian(1, 1.0), &grid, &[0.0], 20_000, 17).unwrap();
    let r = exp_moment_estimate(&b, kappa, &[0.0]).unwrap();
    let oracle = exp_sup_oracle(kappa, 1.0);
    let rel = (r.estimate - oracle).abs() / oracle;
    assert!(!r.divergent);
    assert!(rel < 0.05, "estimate {} vs oracle {oracle} ({rel:.3})", r.estimate);
}

#[test]
fn trivial_exponential_moments_equal_one() {
    let grid = TimeGrid::uniform(0.0, 1.0, 10).unwrap();
    let b = simulate_paths(&DiffusionSpec::zero(1, 1), &grid, &[0.4], 100, 1).unwrap();
    assert_eq!(exp_moment_estimate(&b, 2.0, &[0.4]).unwrap().estimate, 1.0);
    let b = simulate_paths(&DiffusionSpec::brownian(1, 1.0), &grid, &[0.4], 100, 1).unwrap();
    assert_eq!(exp_moment_estimate(&b, 0.0, &[0.4]).unwrap().estimate, 1.0);
}

#[test]
fn identity_flow_norm_ratio_is_one() {
    let xg = SpaceGrid::uniform(1, -4.0, 4.0, 41).unwrap();
    let phi = |x: &[f64]| (-x[0] * x[0]).exp();
    let setup = NormEquivalenceSetup {
        delta: 1.0,
        t: 0.0,
        s: 1.0,
        n_steps: 10,
        n_paths: 10,
        seed: 5,
        constant: 3.0,
    };
    let r = norm_equivalence_check(&DiffusionSpec::zero(1, 1), &phi, &xg, &setup).unwrap();
    assert_eq!(r.ratio, 1.0);
    assert!(r.within_bounds);
}

#[test]
fn euler_flow_converges_to_ode_at_first_order() {
    let drifts: Vec<(&str, DiffusionSpec)> = vec![
        ("linear", DiffusionSpec::ornstein_uhlenbeck(1, 1.5, 0.0)),
        ("sine", DiffusionSpec::new(1, 1, std::sync::Arc::new(|x, o| o[0] = x[0].sin()), std::sync::Arc::new(|_, o| o[0] = 0.0), logbsde::forward::Smoothness::SmoothBounded)),
        ("logistic", DiffusionSpec::new(1, 1, std::sync::Arc::new(|x, o| o[0] = x[0] * (1.0 - x[0])), std::sync::Arc::new(|_, o| o[0] = 0.0), logbsde::forward::Smoothness::Lipschitz)),
    ];
    for (name, spec) in drifts {
        let exact = integrate(|_, x, o| spec.drift_into(x, o), 0.0, &[0.3], 1.0, &OdeOptions::default()).unwrap()[0];
        let err = |n: usize| {
            let b = simulate_paths(&spec, &TimeGrid::uniform(0.0, 1.0, n).unwrap(), &[0.3], 1, 0).unwrap();
            (b.state(0, n)[0] - exact).abs()
        };
        let ratio = err(200) / err(400);
        assert!((ratio - 2.0).abs() < 0.1, "{name}: ratio {ratio}");
    }
}

#[test]
fn brownian_increments_pass_clt_checks() {
    let grid = TimeGrid::uniform(0.0, 1.0, 8).unwrap();
    let n = 40_000;
    let b = simulate_paths(&DiffusionSpec::brownian(1, 1.0), &grid, &[0.0], n, 9).unwrap();
    let dt = 1.0 / 8.0;
    for i in 0..8 {
        let v: Vec<f64> = (0..n).map(|p| b.increment(p, i)[0]).collect();
        let mean = v.iter().sum::<f64>() / n as f64;
        let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        assert!(mean.abs() < 4.0 * (dt / n as f64).sqrt());
        // Var of the sample variance is 2σ⁴/(n−1).
        assert!((var - dt).abs() < 4.0 * dt * (2.0 / (n - 1) as f64).sqrt());
    }
}
