use proptest::prelude::*;

use logbsde::estimates::{beta_hat, lambda_path};
use logbsde::forward::{simulate_paths, DiffusionSpec};
use logbsde::generator::examples::GhProductParams;
use logbsde::generator::{make_example, rho_n, ExampleSpec};
use logbsde::grid::TimeGrid;
use logbsde::mollify::{default_h, mollify_generator, truncate_terminal};

fn config() -> ProptestConfig {
    ProptestConfig {
        cases: 64,
        ..ProptestConfig::default()
    }
}

proptest! {
    #![proptest_config(config())]

    #[test]
    fn rho_is_symmetric_and_grows_with_level(k1 in 0.1f64..3.0, k2 in 0.1f64..3.0, mut levels in prop::collection::vec(3.0f64..60.0, 2..6)) {
        let (g1, _) = make_example(&ExampleSpec::log_drift(k1, 1)).unwrap();
        let (g2, _) = make_example(&ExampleSpec::log_drift(k2, 1)).unwrap();
        levels.sort_by(f64::total_cmp);
        let mut prev = 0.0;
        for n in levels {
            let a = rho_n(&g1, &g2, n, 0.5, &[0.0], 101).unwrap();
            let b = rho_n(&g2, &g1, n, 0.5, &[0.0], 101).unwrap();
            prop_assert_eq!(a, b);
            prop_assert!(a >= prev);
            prev = a;
        }
    }

    #[test]
    fn beta_hat_monotone_in_exponents(p in 1.2f64..4.0, q in 1.1f64..4.0, s in 0.05f64..0.95, s2 in 0.05f64..0.95, bump in 0.0f64..1.0) {
        let amax = p;
        let apmax = p.min(2.0);
        let a = 1.0 + s * (amax - 1.0);
        let ap = 1.0 + s2 * (apmax - 1.0);
        let base = beta_hat(p, q, a, ap).unwrap();
        let a_up = a + bump * (amax - a) * 0.99;
        let ap_up = ap + bump * (apmax - ap) * 0.99;
        prop_assert!(beta_hat(p, q, a_up, ap).unwrap() <= base);
        prop_assert!(beta_hat(p, q, a, ap_up).unwrap() <= base);
        prop_assert!(beta_hat(p + bump, q, a, ap).unwrap() >= base);
        prop_assert!(beta_hat(p, q + bump, a, ap).unwrap() >= base);
    }

    #[test]
    fn lambda_components_nondecreasing(ys in prop::collection::vec(-5.0f64..5.0, 11), xs in prop::collection::vec(-2.0f64..2.0, 11), k in 0.1f64..2.0) {
        let (_, env) = make_example(&ExampleSpec::log_drift(k, 1)).unwrap();
        let grid = TimeGrid::uniform(0.0, 1.0, 10).unwrap();
        let w = lambda_path(&ys, 1, &xs, 1, &env, &grid).unwrap();
        prop_assert!(w.lambda.iter().all(|v| *v >= 0.0));
        prop_assert!(w.eta_part.windows(2).all(|p| p[1] >= p[0]));
        prop_assert!(w.f0_part.windows(2).all(|p| p[1] >= p[0]));
    }

    #[test]
    fn truncation_never_increases_the_norm(xi in prop::collection::vec(-100.0f64..100.0, 1..4), n in 0.5f64..80.0) {
        let t = truncate_terminal(&xi, n);
        let norm = |v: &[f64]| v.iter().map(|a| a * a).sum::<f64>().sqrt();
        prop_assert!(norm(&t) <= norm(&xi));
        prop_assert!(norm(&t) <= n);
    }

    #[test]
    fn example2_is_monotone_in_y(y in prop::collection::vec(-5.0f64..5.0, 2), y2 in prop::collection::vec(-5.0f64..5.0, 2), z in prop::collection::vec(-5.0f64..5.0, 2)) {
        let spec = ExampleSpec::GhProduct(GhProductParams { eps0: 0.5, d: 2, r: 1, p: 2.0, gamma: 0.2 });
        let (g, _) = make_example(&spec).unwrap();
        let f1 = g.eval(0.0, &[0.0], &y, &z);
        let f2 = g.eval(0.0, &[0.0], &y2, &z);
        let inner: f64 = (0..2).map(|i| (y[i] - y2[i]) * (f1[i] - f2[i])).sum();
        prop_assert!(inner <= 1e-12);
    }

    #[test]
    fn log_drift_vanishes_at_origin_and_is_continuous(k in 0.1f64..3.0, dir in prop::collection::vec(-1.0f64..1.0, 2)) {
        let (g, _) = make_example(&ExampleSpec::log_drift(k, 2)).unwrap();
        prop_assert_eq!(g.eval(0.3, &[0.0], &[0.0, 0.0], &[0.0, 0.0]), vec![0.0, 0.0]);
        let nd = (dir[0] * dir[0] + dir[1] * dir[1]).sqrt().max(1e-3);
        let mut prev = f64::INFINITY;
        for e in 1..12 {
            let r = 10f64.powi(-e);
            let y = [dir[0] / nd * r, dir[1] / nd * r];
            let v = g.eval(0.3, &[0.0], &y, &[0.0, 0.0]);
            let size = (v[0] * v[0] + v[1] * v[1]).sqrt();
            prop_assert!(size < prev);
            prev = size;
        }
        prop_assert!(prev < 1e-9);
    }

    #[test]
    fn mollified_generator_vanishes_outside_level(y in 1.0f64..20.0, sign in prop::bool::ANY, x in -2.0f64..2.0) {
        let (g, env) = make_example(&ExampleSpec::log_drift(1.0, 1)).unwrap();
        let n = 4.0;
        let a = mollify_generator(&g, &env, n, default_h(), 8).unwrap();
        let yy = if sign { n * y.max(1.0) } else { -n * y.max(1.0) };
        prop_assert_eq!(a.eval(0.2, &[x], &[yy], &[0.0]).unwrap(), vec![0.0]);
    }

    #[test]
    fn forward_simulation_is_deterministic(seed in any::<u64>(), x0 in -3.0f64..3.0) {
        let spec = DiffusionSpec::ornstein_uhlenbeck(1, 0.7, 1.3);
        let grid = TimeGrid::uniform(0.0, 1.0, 16).unwrap();
        let a = simulate_paths(&spec, &grid, &[x0], 64, seed).unwrap();
        let b = simulate_paths(&spec, &grid, &[x0], 64, seed).unwrap();
        for p in 0..64 {
            for i in 0..=16 {
                prop_assert_eq!(a.state(p, i), b.state(p, i));
            }
        }
    }
}
