use std::sync::Arc;

use logbsde::generator::{make_example, rho_n, BoxSampler, ExampleSpec};
use logbsde::mollify::{default_h, mollify_generator, verify_approx_properties, ApproxCheckOptions};

#[test]
fn log_drift_ladder_properties() {
    let (g, env) = make_example(&ExampleSpec::log_drift(1.0, 1)).unwrap();
    let opts = ApproxCheckOptions::default();
    let rep = verify_approx_properties(&g, &env, &[4.0, 8.0, 16.0, 32.0], default_h(), &BoxSampler::standard(1, 11), &opts).unwrap();
    for l in &rep.levels {
        eprintln!("{l:?}");
    }
    assert!(rep.passed, "{rep:?}");
    let rhos: Vec<f64> = rep.levels.iter().map(|l| l.rho).collect();
    assert!(rhos.windows(2).all(|w| w[1] < w[0]));
    assert!((rhos[0] - (-1f64).exp()).abs() < 1e-4);
}

#[test]
fn dense_grid_oracle_agrees_with_working_grid() {
    let (g, env) = make_example(&ExampleSpec::log_drift(1.0, 1)).unwrap();
    let mut prev = f64::INFINITY;
    for n in [4.0, 8.0, 16.0, 32.0] {
        let f = mollify_generator(&g, &env, n, Arc::new(|_, _| 1.0), 16).unwrap().to_generator();
        let work = rho_n(&f, &g, 1.0, 0.0, &[0.0], 201).unwrap();
        let dense = rho_n(&f, &g, 1.0, 0.0, &[0.0], 2001).unwrap();
        eprintln!("n={n} work={work:e} dense={dense:e}");
        assert!(dense >= work * (1.0 - 1e-12));
        assert!(dense < prev);
        prev = dense;
    }
}

#[test]
fn quadrature_refinement_is_stable() {
    let (g, env) = make_example(&ExampleSpec::log_drift(1.0, 1)).unwrap();
    let a = mollify_generator(&g, &env, 8.0, default_h(), 16).unwrap();
    let b = mollify_generator(&g, &env, 8.0, default_h(), 32).unwrap();
    for y in [-3.0, -0.5, 1e-5, 0.2, 1.0, 2.5] {
        let va = a.eval(0.3, &[0.1], &[y], &[0.0]).unwrap()[0];
        let vb = b.eval(0.3, &[0.1], &[y], &[0.0]).unwrap()[0];
        assert!((va - vb).abs() < 1e-6, "y={y}: {va} vs {vb}");
    }
}
