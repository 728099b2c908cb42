//! Problem builders shared by the benchmarks in `benches/`.

use std::f64::consts::{E, SQRT_2};

use logbsde::bsde::{BsdeProblem, Terminal};
use logbsde::generator::examples::NeveuParams;
use logbsde::generator::make_example;
use logbsde::pde::{terminal_fn, PdeProblem, PdeWeights};
use logbsde::{DiffusionSpec, ExampleSpec, TimeGrid};

/// `f(y) = −y log y` with `ξ = e` under Brownian noise.
pub fn log_drift_problem(n_steps: usize) -> BsdeProblem {
    let (g, _) = make_example(&ExampleSpec::log_drift(1.0, 1)).expect("valid example");
    BsdeProblem::new(
        g,
        Terminal::Constant(vec![E]),
        DiffusionSpec::brownian(1, 1.0),
        TimeGrid::uniform(0.0, 1.0, n_steps).expect("valid grid"),
        vec![0.0],
    )
    .expect("consistent problem")
}

/// `u_t + u_xx − u log u = 0` with a bump-plus-one terminal value.
pub fn log_heat_pde() -> PdeProblem {
    let (g, env) = make_example(&ExampleSpec::Neveu(NeveuParams { k: 1.0, p: 2.0, gamma: 0.2 })).expect("valid example");
    let terminal = terminal_fn(1, |x, out| {
        let s = x[0] * x[0] / 4.0;
        out[0] = if s < 1.0 { 1.0 + (1.0 - 1.0 / (1.0 - s)).exp() } else { 1.0 };
    });
    PdeProblem::new(DiffusionSpec::brownian(1, SQRT_2), terminal, g, 1.0, env, PdeWeights::default()).expect("consistent problem")
}
