//! Drivers `f(t, x, y, z)`, their assumption envelopes, the built-in example
//! family and the sampled assumption checker.
//!
//! A driver depends on randomness only through the Markovian state `x = X_t`.
//! `y ∈ R^d`, and `z ∈ R^{d×r}` is stored row-major.

mod checks;
pub mod examples;

use std::fmt;
use std::sync::Arc;

use rayon::prelude::*;

use crate::error::{Error, Result};

pub use checks::{check_h1, check_h2, check_h3, check_h4, BoxSampler, CheckReport, Witness};
pub use examples::{make_example, ExampleSpec};

pub type DriverFn = Arc<dyn Fn(f64, &[f64], &[f64], &[f64], &mut [f64]) + Send + Sync>;
pub type ScalarField = Arc<dyn Fn(f64, &[f64]) -> f64 + Send + Sync>;
pub type Sequence = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// An evaluable driver with declared dimensions.
#[derive(Clone)]
pub struct Generator {
    dim_d: usize,
    dim_r: usize,
    label: String,
    driver: DriverFn,
    z_free: bool,
}

impl fmt::Debug for Generator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Generator")
            .field("label", &self.label)
            .field("dim_d", &self.dim_d)
            .field("dim_r", &self.dim_r)
            .field("z_free", &self.z_free)
            .finish()
    }
}

impl Generator {
    pub fn new(dim_d: usize, dim_r: usize, label: impl Into<String>, driver: DriverFn) -> Self {
        Self {
            dim_d,
            dim_r,
            label: label.into(),
            driver,
            z_free: false,
        }
    }

    /// Declare that the driver ignores `z`; quadratures and grids then skip
    /// the `z` axes.
    pub fn z_free(mut self) -> Self {
        self.z_free = true;
        self
    }

    pub fn zero(dim_d: usize, dim_r: usize) -> Self {
        Self::new(dim_d, dim_r, "zero", Arc::new(|_, _, _, _, out: &mut [f64]| out.fill(0.0))).z_free()
    }

    /// Driver depending on `y` only.
    pub fn from_y_fn<F>(dim_d: usize, dim_r: usize, label: impl Into<String>, f: F) -> Self
    where
        F: Fn(&[f64], &mut [f64]) + Send + Sync + 'static,
    {
        Self::new(dim_d, dim_r, label, Arc::new(move |_, _, y, _, out| f(y, out))).z_free()
    }

    /// `f + c` componentwise.
    pub fn shifted(&self, c: Vec<f64>) -> Self {
        assert_eq!(c.len(), self.dim_d);
        let inner = self.driver.clone();
        let mut g = Self::new(
            self.dim_d,
            self.dim_r,
            format!("{}+shift", self.label),
            Arc::new(move |t, x, y, z, out| {
                inner(t, x, y, z, out);
                for (o, ci) in out.iter_mut().zip(&c) {
                    *o += ci;
                }
            }),
        );
        g.z_free = self.z_free;
        g
    }

    pub fn dim_d(&self) -> usize {
        self.dim_d
    }

    pub fn dim_r(&self) -> usize {
        self.dim_r
    }

    pub fn dim_z(&self) -> usize {
        self.dim_d * self.dim_r
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn is_z_free(&self) -> bool {
        self.z_free
    }

    pub fn eval_into(&self, t: f64, x: &[f64], y: &[f64], z: &[f64], out: &mut [f64]) {
        (self.driver)(t, x, y, z, out)
    }

    pub fn eval(&self, t: f64, x: &[f64], y: &[f64], z: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim_d];
        self.eval_into(t, x, y, z, &mut out);
        out
    }
}

/// Certificate data for the structural assumptions on `(ξ, f)`.
///
/// Process-valued quantities are functions of `(t, x)`.
#[derive(Clone)]
pub struct AssumptionEnvelope {
    pub p: f64,
    pub gamma: f64,
    pub eta: ScalarField,
    pub f0: ScalarField,
    pub m: ScalarField,
    pub k_proc: ScalarField,
    pub eta_bar: ScalarField,
    pub q: f64,
    pub alpha: f64,
    pub alpha_prime: f64,
    pub v: ScalarField,
    pub q_prime: f64,
    pub k_prime: f64,
    pub a_n: Sequence,
    pub mu: f64,
}

impl fmt::Debug for AssumptionEnvelope {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("AssumptionEnvelope")
            .field("p", &self.p)
            .field("gamma", &self.gamma)
            .field("q", &self.q)
            .field("alpha", &self.alpha)
            .field("alpha_prime", &self.alpha_prime)
            .field("q_prime", &self.q_prime)
            .field("k_prime", &self.k_prime)
            .field("mu", &self.mu)
            .finish()
    }
}

pub fn constant_field(c: f64) -> ScalarField {
    Arc::new(move |_, _| c)
}

impl AssumptionEnvelope {
    /// Envelope with every process identically zero, `A_N = N` and exponents
    /// chosen inside their admissible ranges for `p`.
    pub fn trivial(p: f64, gamma: f64) -> Self {
        let (alpha, alpha_prime) = default_exponents(p);
        Self {
            p,
            gamma,
            eta: constant_field(0.0),
            f0: constant_field(0.0),
            m: constant_field(0.0),
            k_proc: constant_field(0.0),
            eta_bar: constant_field(0.0),
            q: 2.0,
            alpha,
            alpha_prime,
            v: constant_field(0.0),
            q_prime: 1.0,
            k_prime: 1.0,
            a_n: Arc::new(|n| n),
            mu: 1.0,
        }
    }

    /// Check the scalar constraints and the growth of `A_N` on `N = 2..=1000`.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidEnvelope(m));
        if !(self.p > 1.0) {
            return bad(format!("p = {} must exceed 1", self.p));
        }
        let gamma_max = 0.5 * 1f64.min(self.p - 1.0);
        if !(self.gamma > 0.0 && self.gamma < gamma_max) {
            return bad(format!("gamma = {} outside ]0, {gamma_max}[", self.gamma));
        }
        if !(self.alpha > 1.0 && self.alpha < self.p) {
            return bad(format!("alpha = {} outside ]1, p[", self.alpha));
        }
        if !(self.alpha_prime > 1.0 && self.alpha_prime < self.p.min(2.0)) {
            return bad(format!("alpha' = {} outside ]1, p∧2[", self.alpha_prime));
        }
        if !(self.q > 1.0) || !(self.q_prime > 0.0) || !(self.k_prime >= 0.0) || !(self.mu > 0.0) {
            return bad("q > 1, q' > 0, K' ≥ 0 and μ > 0 are required".into());
        }
        let mut prev = (self.a_n)(2.0);
        for n in 2..=1000 {
            let nf = n as f64;
            let a = (self.a_n)(nf);
            if !(a > 1.0) {
                return bad(format!("A_{n} = {a} must exceed 1"));
            }
            if a < prev {
                return bad(format!("A_N decreases at N = {n}"));
            }
            if a > nf.powf(self.mu) * (1.0 + 1e-12) {
                return bad(format!("A_{n} = {a} exceeds N^mu"));
            }
            prev = a;
        }
        Ok(())
    }

    /// Λ̄_t = η + η̄ + f⁰ + M + K + 1/h.
    pub fn lambda_bar(&self, t: f64, x: &[f64], h: f64) -> f64 {
        (self.eta)(t, x) + (self.eta_bar)(t, x) + (self.f0)(t, x) + (self.m)(t, x) + (self.k_proc)(t, x) + 1.0 / h
    }
}

/// `(α, α')` strictly inside `]1, p[` and `]1, p∧2[`, capped at 1.5.
pub fn default_exponents(p: f64) -> (f64, f64) {
    let alpha = 1.0 + (0.5f64).min(0.5 * (p - 1.0));
    let alpha_prime = 1.0 + (0.5f64).min(0.5 * (p.min(2.0) - 1.0));
    (alpha, alpha_prime)
}

/// λ = 2M + K²/(2γ) at `(t, x)`.
pub fn lambda_weight(env: &AssumptionEnvelope, t: f64, x: &[f64]) -> Result<f64> {
    if !(env.gamma > 0.0) {
        return Err(Error::InvalidEnvelope(format!("gamma = {} must be positive", env.gamma)));
    }
    let m = (env.m)(t, x);
    let k = (env.k_proc)(t, x);
    Ok(2.0 * m + k * k / (2.0 * env.gamma))
}

/// Sup-distance `sup_{|y|,|z| ≤ N} |f1 − f2|` over a tensor grid with
/// `density` points per axis. Grid maxima only bound the true sup from below.
pub fn rho_n(g1: &Generator, g2: &Generator, level: f64, t: f64, x: &[f64], density: usize) -> Result<f64> {
    if g1.dim_d != g2.dim_d || g1.dim_r != g2.dim_r {
        return Err(Error::IncompatibleGenerators(format!(
            "({}, {}) vs ({}, {})",
            g1.dim_d, g1.dim_r, g2.dim_d, g2.dim_r
        )));
    }
    if !(level > 0.0) || density < 2 {
        return Err(Error::InvalidParameters {
            kind: "rho_N".into(),
            reason: "N must be positive and the grid needs at least 2 points per axis".into(),
        });
    }
    let d = g1.dim_d;
    let dz = if g1.z_free && g2.z_free { 0 } else { g1.dim_z() };
    let axes = d + dz;
    let total = density
        .checked_pow(axes as u32)
        .filter(|t| *t <= 200_000_000)
        .ok_or_else(|| Error::InvalidParameters {
            kind: "rho_N".into(),
            reason: format!("{density}^{axes} grid points is too many"),
        })?;
    let axis: Vec<f64> = (0..density)
        .map(|i| -level + 2.0 * level * i as f64 / (density - 1) as f64)
        .collect();
    let best = (0..total)
        .into_par_iter()
        .fold(
            || (vec![0.0; d], vec![0.0; g1.dim_z()], vec![0.0; d], vec![0.0; d], 0.0f64),
            |(mut y, mut z, mut a, mut b, best), mut idx| {
                for slot in (0..axes).rev() {
                    let v = axis[idx % density];
                    idx /= density;
                    if slot < d {
                        y[slot] = v;
                    } else {
                        z[slot - d] = v;
                    }
                }
                let ny = y.iter().map(|v| v * v).sum::<f64>();
                let nz = z.iter().map(|v| v * v).sum::<f64>();
                let lim = level * level * (1.0 + 1e-12);
                if ny > lim || nz > lim {
                    return (y, z, a, b, best);
                }
                g1.eval_into(t, x, &y, &z, &mut a);
                g2.eval_into(t, x, &y, &z, &mut b);
                let diff = a.iter().zip(&b).map(|(p, q)| (p - q) * (p - q)).sum::<f64>().sqrt();
                let best = if diff.is_nan() { f64::INFINITY } else { best.max(diff) };
                (y, z, a, b, best)
            },
        )
        .map(|s| s.4)
        .reduce(|| 0.0, f64::max);
    Ok(best)
}
