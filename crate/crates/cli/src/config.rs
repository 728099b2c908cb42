//! Experiment configuration: TOML with an explicit schema version. Unknown
//! keys are rejected and errors carry the offending key path.

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use logbsde::bsde::{SolverConfig, Terminal};
use logbsde::forward::DiffusionSpec;
use logbsde::generator::{make_example, AssumptionEnvelope, ExampleSpec, Generator};
use logbsde::grid::TimeGrid;
use logbsde::pde::{FdMesh, PdeWeights};

use crate::error::CliError;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub scenario: String,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<String>,
    pub generator: ExampleSpec,
    #[serde(default)]
    pub envelope: EnvelopeOverrides,
    #[serde(default)]
    pub diffusion: DiffusionConfig,
    #[serde(default)]
    pub terminal: TerminalConfig,
    #[serde(default)]
    pub time: TimeConfig,
    /// Initial state; defaults to the origin.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub x0: Vec<f64>,
    #[serde(default)]
    pub solver: SolverConfig,
    pub pipeline: PipelineConfig,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvelopeOverrides {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k_prime: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mu: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DiffusionConfig {
    Brownian { k: usize, scale: f64 },
    /// `b(x) = −θx` with noise `scale·I`.
    OrnsteinUhlenbeck { k: usize, theta: f64, scale: f64 },
    Zero { k: usize, r: usize },
    /// Constant drift and row-major `k × r` matrix.
    Constant { drift: Vec<f64>, sigma: Vec<f64>, r: usize },
}

impl Default for DiffusionConfig {
    fn default() -> Self {
        Self::Brownian { k: 1, scale: 1.0 }
    }
}

impl DiffusionConfig {
    pub fn build(&self) -> Result<DiffusionSpec, CliError> {
        Ok(match self {
            Self::Brownian { k, scale } => DiffusionSpec::brownian(*k, *scale),
            Self::OrnsteinUhlenbeck { k, theta, scale } => DiffusionSpec::ornstein_uhlenbeck(*k, *theta, *scale),
            Self::Zero { k, r } => DiffusionSpec::zero(*k, *r),
            Self::Constant { drift, sigma, r } => {
                if sigma.len() != drift.len() * r {
                    return Err(CliError::config("diffusion.sigma", "length must be k·r"));
                }
                DiffusionSpec::constant(drift.clone(), sigma.clone(), *r)
            }
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TerminalConfig {
    Constant { value: Vec<f64> },
    /// `base + height·exp(1 − 1/(1 − |x|²/width²))` inside the ball, `base`
    /// outside. Scalar.
    Bump { base: f64, height: f64, width: f64 },
    /// `g(x) = x` (requires `d = k`).
    Identity,
}

impl Default for TerminalConfig {
    fn default() -> Self {
        Self::Constant { value: vec![1.0] }
    }
}

impl TerminalConfig {
    pub fn dim_d(&self, k: usize) -> usize {
        match self {
            Self::Constant { value } => value.len(),
            Self::Bump { .. } => 1,
            Self::Identity => k,
        }
    }

    pub fn build(&self, k: usize) -> Terminal {
        match self {
            Self::Constant { value } => Terminal::Constant(value.clone()),
            Self::Bump { base, height, width } => {
                let (b, h, w) = (*base, *height, *width);
                Terminal::Function {
                    dim_d: 1,
                    g: Arc::new(move |x, out| out[0] = bump(x, b, h, w)),
                }
            }
            Self::Identity => Terminal::Function {
                dim_d: k,
                g: Arc::new(|x, out| out.copy_from_slice(x)),
            },
        }
    }
}

pub fn bump(x: &[f64], base: f64, height: f64, width: f64) -> f64 {
    let s = x.iter().map(|v| v * v).sum::<f64>() / (width * width);
    if s < 1.0 {
        base + height * (1.0 - 1.0 / (1.0 - s)).exp()
    } else {
        base
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeConfig {
    pub t0: f64,
    pub t_end: f64,
    pub n_steps: usize,
}

impl Default for TimeConfig {
    fn default() -> Self {
        Self {
            t0: 0.0,
            t_end: 1.0,
            n_steps: 100,
        }
    }
}

impl TimeConfig {
    pub fn build(&self) -> Result<TimeGrid, CliError> {
        TimeGrid::uniform(self.t0, self.t_end, self.n_steps).map_err(|e| CliError::config("time", e.to_string()))
    }
}

/// Which pipeline runs, with its own parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PipelineConfig {
    SimulateForward {
        n_paths: usize,
        kappa: f64,
    },
    CheckAssumptions {
        n_samples: usize,
        levels: Vec<f64>,
        /// Assumption expected to fail (`"H.1"` … `"H.4"`); all must pass
        /// when absent.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        expect_violation: Option<String>,
    },
    MollifyDemo {
        schedule: Vec<f64>,
        level: f64,
        n_samples: usize,
        quad_nodes: usize,
        rho_density: usize,
        rho_threshold: f64,
        rho_points: usize,
    },
    SolveBsde {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        reference_y0: Option<f64>,
        rel_tol: f64,
    },
    AprioriCheck {
        calibration_k: f64,
        calibration_xi: f64,
        k_values: Vec<f64>,
        xi_values: Vec<f64>,
        safety: f64,
    },
    StabilitySweep {
        schedule: Vec<f64>,
        p_prime: f64,
        level: f64,
        quad_nodes: usize,
        rho_density: usize,
        threshold: f64,
        /// Leading rows exempt from the monotonicity check.
        #[serde(default)]
        burn_in: usize,
        reference: StabilityReferenceConfig,
    },
    PdeCompare(PdeCompareConfig),
}

impl PipelineConfig {
    pub fn name(&self) -> &'static str {
        match self {
            Self::SimulateForward { .. } => "simulate-forward",
            Self::CheckAssumptions { .. } => "check-assumptions",
            Self::MollifyDemo { .. } => "mollify-demo",
            Self::SolveBsde { .. } => "solve-bsde",
            Self::AprioriCheck { .. } => "apriori-check",
            Self::StabilitySweep { .. } => "stability-sweep",
            Self::PdeCompare(_) => "pde-compare",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StabilityReferenceConfig {
    /// Solve the unapproximated problem on the same paths.
    Solver,
    /// Backward ODE for x-free, z-free drivers with constant terminal data.
    Ode,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PdeCompareConfig {
    pub x_min: f64,
    pub x_max: f64,
    pub nx: usize,
    pub times: Vec<f64>,
    /// Monte Carlo steps on the whole horizon.
    pub mc_steps: usize,
    pub reference: PdeReferenceConfig,
    /// Relative weighted L² budget (finite differences) or max-norm budget
    /// (characteristics).
    pub tolerance: f64,
    #[serde(default)]
    pub weights: PdeWeights,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub linear_log: Option<LinearLogConfig>,
    /// Also compare `Z` with `σ*∇u` of the reference, with this relative
    /// budget.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub z_tolerance: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PdeReferenceConfig {
    FiniteDifference { mesh: FdMesh },
    Characteristics,
}

/// Scalar constant coefficients `F = a y + b z − c y log|y|`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinearLogConfig {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub k: f64,
}

/// Parse a TOML config; errors name the key path.
pub fn parse_config(text: &str) -> Result<ExperimentConfig, CliError> {
    let de = toml::de::Deserializer::parse(text).map_err(|e| CliError::config("<document>", e.message().to_string()))?;
    let cfg: ExperimentConfig = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        CliError::config(if path == "." { "<root>".into() } else { path }, e.into_inner().message().to_string())
    })?;
    cfg.validate()?;
    Ok(cfg)
}

impl ExperimentConfig {
    pub fn to_toml(&self) -> Result<String, CliError> {
        toml::to_string(self).map_err(|e| CliError::config("<serialize>", e.to_string()))
    }

    /// SHA-256 of the canonical (key-sorted) JSON form.
    pub fn hash(&self) -> String {
        let value = serde_json::to_value(self).expect("config serializes");
        let canonical = serde_json::to_string(&value).expect("json value serializes");
        hex::encode(Sha256::digest(canonical.as_bytes()))
    }

    pub fn dim_k(&self) -> usize {
        match &self.diffusion {
            DiffusionConfig::Brownian { k, .. } | DiffusionConfig::OrnsteinUhlenbeck { k, .. } | DiffusionConfig::Zero { k, .. } => *k,
            DiffusionConfig::Constant { drift, .. } => drift.len(),
        }
    }

    pub fn x0(&self) -> Vec<f64> {
        if self.x0.is_empty() {
            vec![0.0; self.dim_k()]
        } else {
            self.x0.clone()
        }
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(CliError::config(
                "schema_version",
                format!("expected {SCHEMA_VERSION}, found {}", self.schema_version),
            ));
        }
        if self.seed > i64::MAX as u64 {
            return Err(CliError::config("seed", "must fit in a signed 64-bit integer"));
        }
        let k = self.dim_k();
        if k == 0 {
            return Err(CliError::config("diffusion", "dimension k must be positive"));
        }
        if !self.x0.is_empty() && self.x0.len() != k {
            return Err(CliError::config("x0", format!("length {} differs from k = {k}", self.x0.len())));
        }
        let (d, r) = self.generator.dims();
        let dr = self.diffusion.build()?.dim_r();
        if r != dr {
            return Err(CliError::config("generator", format!("r = {r} but the diffusion has r = {dr}")));
        }
        if self.terminal.dim_d(k) != d {
            return Err(CliError::config("terminal", format!("terminal dimension differs from d = {d}")));
        }
        if let PipelineConfig::CheckAssumptions {
            expect_violation: Some(a), ..
        } = &self.pipeline
        {
            if !["H.1", "H.2", "H.3", "H.4"].contains(&a.as_str()) {
                return Err(CliError::config("pipeline.expect_violation", format!("`{a}` is not one of H.1, H.2, H.3, H.4")));
            }
        }
        self.solver.validate(k).map_err(|e| CliError::config("solver", e.to_string()))?;
        self.time.build()?;
        Ok(())
    }

    /// Generator and envelope with the overrides applied.
    pub fn generator(&self) -> Result<(Generator, AssumptionEnvelope), CliError> {
        self.generator_for(&self.generator)
    }

    /// Another example spec with this config's envelope overrides.
    pub fn generator_for(&self, spec: &ExampleSpec) -> Result<(Generator, AssumptionEnvelope), CliError> {
        let (g, mut env) = make_example(spec).map_err(|e| CliError::config("generator", e.to_string()))?;
        let o = &self.envelope;
        if let Some(v) = o.k_prime {
            env.k_prime = v;
        }
        if let Some(v) = o.q {
            env.q = v;
        }
        if let Some(v) = o.mu {
            env.mu = v;
        }
        env.validate().map_err(|e| CliError::config("envelope", e.to_string()))?;
        Ok((g, env))
    }
}
