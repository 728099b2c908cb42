//! Built-in scenarios. Each is a complete default config.

use std::f64::consts::{E, SQRT_2};

use logbsde::bsde::{Scheme, SolverConfig};
use logbsde::generator::examples::*;
use logbsde::pde::{FdMesh, PdeWeights};
use logbsde::ExampleSpec;

use crate::config::*;

pub struct Scenario {
    pub id: &'static str,
    pub summary: &'static str,
    build: fn() -> ExperimentConfig,
}

impl Scenario {
    pub fn config(&self) -> ExperimentConfig {
        let mut c = (self.build)();
        c.scenario = self.id.into();
        c
    }
}

pub const SCENARIOS: &[Scenario] = &[
    Scenario {
        id: "example1-oracle",
        summary: "log drift K = 1, xi = e: implicit Y0 against exp(1/e)",
        build: example1_oracle,
    },
    Scenario {
        id: "example2-product",
        summary: "product driver g(y)h(z): sampled (H.1)-(H.4)",
        build: || checks(gh_product(), 1),
    },
    Scenario {
        id: "example3-state",
        summary: "state-coupled |x|^q y - y log|y|: sampled (H.1)-(H.4)",
        build: || {
            checks(
                ExampleSpec::StateCoupled(StateCoupledParams {
                    qbar: 1.0,
                    d: 1,
                    p: 2.0,
                    gamma: 0.2,
                }),
                1,
            )
        },
    },
    Scenario {
        id: "example4-monotone",
        summary: "stochastic monotone coefficient c|x|: sampled (H.1)-(H.4)",
        build: || {
            checks(
                ExampleSpec::StochasticMonotone(StochasticMonotoneParams {
                    c: 1.0,
                    beta: 1.0,
                    d: 1,
                    r: 1,
                    p: 2.0,
                    gamma: 0.2,
                }),
                1,
            )
        },
    },
    Scenario {
        id: "example5-composite",
        summary: "composite |x|^q'' F(|x|^q y, |x|^q' z): sampled (H.1)-(H.4)",
        build: || {
            checks(
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
                1,
            )
        },
    },
    Scenario {
        id: "neveu-pde",
        summary: "u log u reaction with OU transport: Monte Carlo against finite differences",
        build: neveu_pde,
    },
    Scenario {
        id: "mollify-ladder",
        summary: "mollified log drift on n = 4..32: properties (c) and rho_N decay",
        build: mollify_ladder,
    },
    Scenario {
        id: "stability-ladder",
        summary: "truncated/mollified log drift against the ODE oracle, p' = 1.5",
        build: stability_ladder,
    },
    Scenario {
        id: "apriori-sweep",
        summary: "weighted a-priori estimate, C fitted once, xi and K swept",
        build: apriori_sweep,
    },
    Scenario {
        id: "pde-heat-crosscheck",
        summary: "sigma = sqrt 2, F = -u log u, bump terminal: Monte Carlo against finite differences",
        build: pde_heat_crosscheck,
    },
    Scenario {
        id: "pde-degenerate",
        summary: "sigma = 0, b = -x, g = e: Monte Carlo against characteristics",
        build: pde_degenerate,
    },
    Scenario {
        id: "linearlog-pde",
        summary: "F = a u + b z - c u log|u|: Monte Carlo against finite differences",
        build: linearlog_pde,
    },
    Scenario {
        id: "zero",
        summary: "f = 0, xi = 0",
        build: zero,
    },
    Scenario {
        id: "example1-checks",
        summary: "log drift: sampled (H.1)-(H.4)",
        build: || checks(ExampleSpec::log_drift(1.0, 1), 1),
    },
    Scenario {
        id: "planted-cubic",
        summary: "f = |y|^2 y against the log drift envelope: (H.2) must fail",
        build: || planted(PlantedForm::Cubic, "H.2"),
    },
    Scenario {
        id: "planted-signed-sqrt",
        summary: "f = -sign(y) sqrt|y|: (H.4) expected to fail",
        build: || planted(PlantedForm::SignedSqrt, "H.4"),
    },
    Scenario {
        id: "planted-signed-square",
        summary: "f = y|y|: (H.4) must fail",
        build: || planted(PlantedForm::SignedSquare, "H.4"),
    },
    Scenario {
        id: "forward-brownian",
        summary: "Brownian exponential moment of the running maximum, kappa = 0.3",
        build: forward_brownian,
    },
];

pub fn find(id: &str) -> Option<&'static Scenario> {
    SCENARIOS.iter().find(|s| s.id == id)
}

fn base(generator: ExampleSpec, pipeline: PipelineConfig) -> ExperimentConfig {
    ExperimentConfig {
        schema_version: SCHEMA_VERSION,
        scenario: String::new(),
        seed: 20_240_601,
        output_dir: None,
        generator,
        envelope: EnvelopeOverrides::default(),
        diffusion: DiffusionConfig::default(),
        terminal: TerminalConfig::default(),
        time: TimeConfig::default(),
        x0: Vec::new(),
        solver: SolverConfig::default(),
        pipeline,
    }
}

fn gh_product() -> ExampleSpec {
    ExampleSpec::GhProduct(GhProductParams {
        eps0: 0.5,
        d: 1,
        r: 1,
        p: 2.0,
        gamma: 0.2,
    })
}

fn checks(generator: ExampleSpec, k: usize) -> ExperimentConfig {
    let mut c = base(
        generator,
        PipelineConfig::CheckAssumptions {
            n_samples: 20_000,
            levels: vec![3.0, 10.0, 100.0],
            expect_violation: None,
        },
    );
    c.diffusion = DiffusionConfig::Brownian { k, scale: 1.0 };
    c
}

fn planted(form: PlantedForm, target: &str) -> ExperimentConfig {
    let mut c = checks(ExampleSpec::Planted(PlantedParams { form }), 1);
    c.pipeline = PipelineConfig::CheckAssumptions {
        n_samples: 20_000,
        levels: vec![3.0, 10.0, 100.0],
        expect_violation: Some(target.into()),
    };
    c
}

fn example1_oracle() -> ExperimentConfig {
    let mut c = base(
        ExampleSpec::log_drift(1.0, 1),
        PipelineConfig::SolveBsde {
            reference_y0: Some((1.0 / E).exp()),
            rel_tol: 1e-3,
        },
    );
    c.terminal = TerminalConfig::Constant { value: vec![E] };
    c.time.n_steps = 1000;
    c.solver.n_paths = 64;
    c
}

fn zero() -> ExperimentConfig {
    let mut c = base(
        ExampleSpec::Zero(ZeroParams {
            d: 1,
            r: 1,
            p: 2.0,
            gamma: 0.2,
        }),
        PipelineConfig::SolveBsde {
            reference_y0: Some(0.0),
            rel_tol: 0.0,
        },
    );
    c.terminal = TerminalConfig::Constant { value: vec![0.0] };
    c.time.n_steps = 20;
    c.solver.n_paths = 1000;
    c
}

fn mollify_ladder() -> ExperimentConfig {
    base(
        ExampleSpec::log_drift(1.0, 1),
        PipelineConfig::MollifyDemo {
            schedule: vec![4.0, 8.0, 16.0, 32.0],
            level: 1.0,
            n_samples: 10_000,
            quad_nodes: 16,
            rho_density: 1001,
            rho_threshold: 1e-2,
            rho_points: 4,
        },
    )
}

fn stability_ladder() -> ExperimentConfig {
    let mut c = base(
        ExampleSpec::log_drift(1.0, 1),
        PipelineConfig::StabilitySweep {
            schedule: vec![4.0, 8.0, 16.0, 32.0],
            p_prime: 1.5,
            level: 1.0,
            quad_nodes: 16,
            rho_density: 201,
            threshold: 1e-2,
            burn_in: 0,
            reference: StabilityReferenceConfig::Ode,
        },
    );
    c.diffusion = DiffusionConfig::Zero { k: 1, r: 1 };
    c.terminal = TerminalConfig::Constant { value: vec![E] };
    c.time.n_steps = 1000;
    c.solver.n_paths = 4;
    c.solver.scheme = Scheme::Trapezoidal;
    c
}

fn apriori_sweep() -> ExperimentConfig {
    let mut c = base(
        ExampleSpec::log_drift(1.0, 1),
        PipelineConfig::AprioriCheck {
            calibration_k: 1.0,
            calibration_xi: E,
            k_values: vec![0.5, 1.0],
            xi_values: vec![0.5, 1.0, 2.0, E],
            safety: 2.0,
        },
    );
    c.time.n_steps = 100;
    c.solver.n_paths = 10_000;
    c
}

fn neveu() -> ExampleSpec {
    ExampleSpec::Neveu(NeveuParams { k: 1.0, p: 2.0, gamma: 0.2 })
}

fn bump_terminal() -> TerminalConfig {
    TerminalConfig::Bump {
        base: 1.0,
        height: 1.0,
        width: 2.0,
    }
}

fn fd_compare(tolerance: f64) -> PdeCompareConfig {
    PdeCompareConfig {
        x_min: -5.0,
        x_max: 5.0,
        nx: 21,
        times: vec![0.0],
        mc_steps: 50,
        reference: PdeReferenceConfig::FiniteDifference {
            mesh: FdMesh {
                nx: 601,
                nt: 400,
                x_min: -15.0,
                x_max: 15.0,
            },
        },
        tolerance,
        weights: PdeWeights::default(),
        linear_log: None,
        z_tolerance: None,
    }
}

fn pde_heat_crosscheck() -> ExperimentConfig {
    let mut c = base(neveu(), PipelineConfig::PdeCompare(fd_compare(0.05)));
    c.diffusion = DiffusionConfig::Brownian { k: 1, scale: SQRT_2 };
    c.terminal = bump_terminal();
    c.solver.n_paths = 10_000;
    c
}

fn neveu_pde() -> ExperimentConfig {
    let mut c = base(neveu(), PipelineConfig::PdeCompare(fd_compare(0.05)));
    c.diffusion = DiffusionConfig::OrnsteinUhlenbeck {
        k: 1,
        theta: 1.0,
        scale: 1.0,
    };
    c.terminal = bump_terminal();
    c.solver.n_paths = 4000;
    c
}

fn linearlog_pde() -> ExperimentConfig {
    let mut p = fd_compare(0.05);
    p.linear_log = Some(LinearLogConfig {
        a: 0.5,
        b: 0.3,
        c: 1.0,
        k: 1.0,
    });
    let mut c = base(
        ExampleSpec::Zero(ZeroParams {
            d: 1,
            r: 1,
            p: 2.0,
            gamma: 0.2,
        }),
        PipelineConfig::PdeCompare(p),
    );
    c.diffusion = DiffusionConfig::Brownian { k: 1, scale: 1.0 };
    c.terminal = bump_terminal();
    c.solver.n_paths = 4000;
    c
}

fn pde_degenerate() -> ExperimentConfig {
    let p = PdeCompareConfig {
        x_min: -3.0,
        x_max: 3.0,
        nx: 13,
        times: vec![0.0, 0.5],
        mc_steps: 1000,
        reference: PdeReferenceConfig::Characteristics,
        tolerance: 1e-6,
        weights: PdeWeights::default(),
        linear_log: None,
        z_tolerance: None,
    };
    let mut c = base(neveu(), PipelineConfig::PdeCompare(p));
    c.diffusion = DiffusionConfig::OrnsteinUhlenbeck {
        k: 1,
        theta: 1.0,
        scale: 0.0,
    };
    c.terminal = TerminalConfig::Constant { value: vec![E] };
    c.solver.n_paths = 16;
    c.solver.scheme = Scheme::Trapezoidal;
    c
}

fn forward_brownian() -> ExperimentConfig {
    let mut c = base(
        ExampleSpec::Zero(ZeroParams {
            d: 1,
            r: 1,
            p: 2.0,
            gamma: 0.2,
        }),
        PipelineConfig::SimulateForward { n_paths: 20_000, kappa: 0.3 },
    );
    c.time.n_steps = 1000;
    c
}
