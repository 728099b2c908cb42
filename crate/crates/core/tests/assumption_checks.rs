use std::sync::Arc;

use logbsde::generator::{
    check_h1, check_h2, check_h3, check_h4, make_example, BoxSampler, ExampleSpec, Generator,
};
use logbsde::generator::examples::*;

fn all_examples() -> Vec<ExampleSpec> {
    vec![
        ExampleSpec::log_drift(1.0, 1),
        ExampleSpec::log_drift(1.0, 2),
        ExampleSpec::GhProduct(GhProductParams { eps0: 0.5, d: 1, r: 1, p: 2.0, gamma: 0.2 }),
        ExampleSpec::GhProduct(GhProductParams { eps0: 0.3, d: 2, r: 2, p: 2.0, gamma: 0.2 }),
        ExampleSpec::StateCoupled(StateCoupledParams { qbar: 1.0, d: 1, p: 2.0, gamma: 0.2 }),
        ExampleSpec::StochasticMonotone(StochasticMonotoneParams { c: 1.0, beta: 1.0, d: 1, r: 1, p: 2.0, gamma: 0.2 }),
        ExampleSpec::Composite5(Composite5Params {
            qbar: 0.5,
            qbar_prime: 0.25,
            qbar_second: 0.5,
            lipschitz: 1.0,
            d: 1,
            r: 1,
            p: 2.0,
            gamma: 0.2,
        }),
        ExampleSpec::Neveu(NeveuParams { k: 1.0, p: 2.0, gamma: 0.2 }),
    ]
}

#[test]
fn examples_pass_their_own_checks() {
    for spec in all_examples() {
        let (g, env) = make_example(&spec).unwrap();
        let s = BoxSampler::standard(1, 7);
        let n = 100_000;
        for rep in [
            check_h1(&g, &s, n),
            check_h2(&g, &env, &s, n),
            check_h3(&g, &env, &s, n),
            check_h4(&g, &env, &s, n, &[3.0, 10.0, 100.0]),
        ] {
            assert!(rep.passed, "{} fails {}: {:?}", spec.kind(), rep.assumption, rep.worst);
        }
    }
}

#[test]
fn cubic_violates_h2() {
    let (_, env) = make_example(&ExampleSpec::log_drift(1.0, 1)).unwrap();
    let g = Generator::from_y_fn(1, 1, "cubic", |y, out| out[0] = y[0] * y[0] * y[0]);
    let rep = check_h2(&g, &env, &BoxSampler::standard(1, 3), 10_000);
    assert!(!rep.passed);
    let w = rep.worst.unwrap();
    assert!(w.violates() && w.y[0].abs() > 1.0);
}

#[test]
fn exponential_violates_h3() {
    let (_, env) = make_example(&ExampleSpec::log_drift(1.0, 1)).unwrap();
    let g = Generator::from_y_fn(1, 1, "exp", |y, out| out[0] = y[0].abs().exp());
    assert!(!check_h3(&g, &env, &BoxSampler::standard(1, 3), 10_000).passed);
}

#[test]
fn jump_violates_h1() {
    let g = Generator::from_y_fn(1, 1, "sign", |y, out| out[0] = if y[0] > 0.0 { 1.0 } else { 0.0 });
    assert!(!check_h1(&g, &BoxSampler::standard(1, 3), 10_000).passed);
}

#[test]
fn superlinear_violates_h4() {
    let (_, mut env) = make_example(&ExampleSpec::log_drift(1.0, 1)).unwrap();
    env.a_n = Arc::new(|n| n);
    let g = Generator::from_y_fn(1, 1, "y|y|", |y, out| out[0] = y[0] * y[0].abs());
    let rep = check_h4(&g, &env, &BoxSampler::standard(1, 3), 10_000, &[100.0]);
    assert!(!rep.passed);
}
