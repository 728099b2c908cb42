//! Built-in generator family with certified envelopes.
//!
//! Where an envelope constant has no closed form (a supremum of
//! `a·s^β − c·s^α` type expressions) it is computed once by a log-spaced scan
//! refined with golden-section search, then inflated by 5 % plus `1e-9`.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{constant_field, AssumptionEnvelope, Generator};
use crate::error::{Error, Result};
use crate::stats::norm;

fn one() -> f64 {
    1.0
}
fn one_usize() -> usize {
    1
}
fn two() -> f64 {
    2.0
}
fn half() -> f64 {
    0.5
}
fn default_gamma() -> f64 {
    0.2
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LogDriftParams {
    #[serde(default = "one")]
    pub k: f64,
    #[serde(default = "one_usize")]
    pub d: usize,
    #[serde(default = "half")]
    pub epsilon: f64,
    #[serde(default = "two")]
    pub p: f64,
    #[serde(default = "default_gamma")]
    pub gamma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GhProductParams {
    #[serde(default = "half")]
    pub eps0: f64,
    #[serde(default = "one_usize")]
    pub d: usize,
    #[serde(default = "one_usize")]
    pub r: usize,
    #[serde(default = "two")]
    pub p: f64,
    #[serde(default = "default_gamma")]
    pub gamma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StateCoupledParams {
    #[serde(default = "one")]
    pub qbar: f64,
    #[serde(default = "one_usize")]
    pub d: usize,
    #[serde(default = "two")]
    pub p: f64,
    #[serde(default = "default_gamma")]
    pub gamma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StochasticMonotoneParams {
    /// `C(t, x) = c·|x|`.
    #[serde(default = "one")]
    pub c: f64,
    #[serde(default = "one")]
    pub beta: f64,
    #[serde(default = "one_usize")]
    pub d: usize,
    #[serde(default = "one_usize")]
    pub r: usize,
    #[serde(default = "two")]
    pub p: f64,
    #[serde(default = "default_gamma")]
    pub gamma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Composite5Params {
    #[serde(default = "half")]
    pub qbar: f64,
    #[serde(default = "default_qbar_prime")]
    pub qbar_prime: f64,
    #[serde(default = "default_qbar_second")]
    pub qbar_second: f64,
    /// Lipschitz constant of the `z`-part of the inner driver.
    #[serde(default = "one")]
    pub lipschitz: f64,
    #[serde(default = "one_usize")]
    pub d: usize,
    #[serde(default = "one_usize")]
    pub r: usize,
    #[serde(default = "two")]
    pub p: f64,
    #[serde(default = "default_gamma")]
    pub gamma: f64,
}

fn default_qbar_prime() -> f64 {
    0.25
}
fn default_qbar_second() -> f64 {
    0.5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NeveuParams {
    #[serde(default = "one")]
    pub k: f64,
    #[serde(default = "two")]
    pub p: f64,
    #[serde(default = "default_gamma")]
    pub gamma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ZeroParams {
    #[serde(default = "one_usize")]
    pub d: usize,
    #[serde(default = "one_usize")]
    pub r: usize,
    #[serde(default = "two")]
    pub p: f64,
    #[serde(default = "default_gamma")]
    pub gamma: f64,
}

/// Drivers built to break one assumption. They carry the envelope of
/// `log_drift` with `K = 1`, `d = 1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlantedForm {
    /// `f(y) = |y|² y`, aimed at (H.2).
    Cubic,
    /// `f(y) = −sign(y)√|y|`, aimed at (H.4).
    SignedSqrt,
    /// `f(y) = y|y|`, aimed at (H.4).
    SignedSquare,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlantedParams {
    pub form: PlantedForm,
}

/// Named example generator with its parameters. The `kind` tag strings are
/// the names accepted in experiment configs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ExampleSpec {
    /// `f(y) = −K y log|y|`.
    LogDrift(LogDriftParams),
    /// `f(y, z) = g(y) h(z)` with `g(y) = y log(|y|/(1+|y|))`.
    GhProduct(GhProductParams),
    /// `f(t, x, y) = |x|^q̄ y − y log|y|`.
    StateCoupled(StateCoupledParams),
    /// Stochastic monotone coefficient `C(t, x) = c|x|`.
    StochasticMonotone(StochasticMonotoneParams),
    /// `|x|^q̄'' F(t, x, |x|^q̄ y, |x|^q̄' z)`.
    Composite5(Composite5Params),
    /// `F(u) = −K u log|u|` for the scalar PDE.
    Neveu(NeveuParams),
    /// `f ≡ 0`.
    Zero(ZeroParams),
    Planted(PlantedParams),
}

impl ExampleSpec {
    pub fn log_drift(k: f64, d: usize) -> Self {
        Self::LogDrift(LogDriftParams {
            k,
            d,
            epsilon: 0.5,
            p: 2.0,
            gamma: 0.2,
        })
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Self::LogDrift(_) => "log_drift",
            Self::GhProduct(_) => "gh_product",
            Self::StateCoupled(_) => "state_coupled",
            Self::StochasticMonotone(_) => "stochastic_monotone",
            Self::Composite5(_) => "composite5",
            Self::Neveu(_) => "neveu",
            Self::Zero(_) => "zero",
            Self::Planted(_) => "planted",
        }
    }

    pub fn dims(&self) -> (usize, usize) {
        match self {
            Self::LogDrift(p) => (p.d, 1),
            Self::GhProduct(p) => (p.d, p.r),
            Self::StateCoupled(p) => (p.d, 1),
            Self::StochasticMonotone(p) => (p.d, p.r),
            Self::Composite5(p) => (p.d, p.r),
            Self::Neveu(_) | Self::Planted(_) => (1, 1),
            Self::Zero(p) => (p.d, p.r),
        }
    }
}

fn invalid(kind: &str, reason: impl Into<String>) -> Error {
    Error::InvalidParameters {
        kind: kind.into(),
        reason: reason.into(),
    }
}

/// `y log|y|` with the continuous extension 0 at the origin, returned as the
/// scalar `log|y|` factor (0 when `y = 0`).
fn log_norm(y: &[f64]) -> f64 {
    let n = norm(y);
    if n > 0.0 {
        n.ln()
    } else {
        0.0
    }
}

/// sup_{s ≥ 0} (a s − c s^α) in closed form.
pub(crate) fn young_linear(a: f64, alpha: f64, c: f64) -> f64 {
    if a <= 0.0 {
        return 0.0;
    }
    let s = (a / (c * alpha)).powf(1.0 / (alpha - 1.0));
    a * s * (alpha - 1.0) / alpha
}

/// Numerical sup of a scalar function on `s ≥ 0`, inflated by 5 % + 1e-9.
pub(crate) fn certified_sup<F: Fn(f64) -> f64>(f: F) -> f64 {
    let mut best_s = 0.0;
    let mut best = f(0.0);
    let n = 4000;
    let (lo, hi) = (-12.0f64, 12.0f64);
    for i in 0..=n {
        let s = 10f64.powf(lo + (hi - lo) * i as f64 / n as f64);
        let v = f(s);
        if v > best {
            best = v;
            best_s = s;
        }
    }
    if best_s > 0.0 {
        let (mut a, mut b) = (best_s * 0.98, best_s * 1.02);
        let g = 0.5 * (5f64.sqrt() - 1.0);
        for _ in 0..100 {
            let c = b - g * (b - a);
            let d = a + g * (b - a);
            if f(c) > f(d) {
                b = d;
            } else {
                a = c;
            }
        }
        best = best.max(f(0.5 * (a + b)));
    }
    best.max(0.0) * 1.05 + 1e-9
}

/// Build an example generator together with its envelope.
pub fn make_example(spec: &ExampleSpec) -> Result<(Generator, AssumptionEnvelope)> {
    let (g, env) = match spec {
        ExampleSpec::LogDrift(p) => log_drift(p.k, p.d, p.epsilon, p.p, p.gamma, "log_drift")?,
        ExampleSpec::Neveu(p) => log_drift(p.k, 1, 0.5, p.p, p.gamma, "neveu")?,
        ExampleSpec::GhProduct(p) => gh_product(p)?,
        ExampleSpec::StateCoupled(p) => state_coupled(p)?,
        ExampleSpec::StochasticMonotone(p) => stochastic_monotone(p)?,
        ExampleSpec::Composite5(p) => composite5(p)?,
        ExampleSpec::Zero(p) => {
            check_common("zero", p.d, p.r, p.p)?;
            (Generator::zero(p.d, p.r), AssumptionEnvelope::trivial(p.p, p.gamma))
        }
        ExampleSpec::Planted(p) => planted(p.form)?,
    };
    env.validate()?;
    Ok((g, env))
}

fn check_common(kind: &str, d: usize, r: usize, p: f64) -> Result<()> {
    if d == 0 || r == 0 {
        return Err(invalid(kind, "dimensions must be positive"));
    }
    if !(p > 1.0) {
        return Err(invalid(kind, format!("p = {p} must exceed 1")));
    }
    Ok(())
}

fn log_drift(k: f64, d: usize, epsilon: f64, p: f64, gamma: f64, label: &str) -> Result<(Generator, AssumptionEnvelope)> {
    check_common(label, d, 1, p)?;
    if !(k > 0.0) {
        return Err(invalid(label, format!("K = {k} must be positive")));
    }
    let alpha = 1.0 + epsilon;
    if !(epsilon > 0.0 && alpha < p) {
        return Err(invalid(label, format!("epsilon = {epsilon} must lie in ]0, p-1[")));
    }
    let g = Generator::from_y_fn(d, 1, label, move |y, out| {
        let l = log_norm(y);
        for (o, yi) in out.iter_mut().zip(y) {
            *o = -k * yi * l;
        }
    });
    let scan = certified_sup(|s| if s > 0.0 { k * s * s.ln().abs() - s.powf(alpha) } else { 0.0 });
    let eta_bar = (k * (1.0 + 1.0 / epsilon)).max(scan);
    let mut env = AssumptionEnvelope::trivial(p, gamma);
    env.eta = constant_field(k);
    env.eta_bar = constant_field(eta_bar);
    env.alpha = alpha;
    env.k_prime = 2.0 * k.max(1.0);
    Ok((g, env))
}

fn planted(form: PlantedForm) -> Result<(Generator, AssumptionEnvelope)> {
    let (_, env) = log_drift(1.0, 1, 0.5, 2.0, 0.2, "log_drift")?;
    let g = match form {
        PlantedForm::Cubic => Generator::from_y_fn(1, 1, "planted_cubic", |y, out| out[0] = y[0] * y[0] * y[0]),
        PlantedForm::SignedSqrt => Generator::from_y_fn(1, 1, "planted_signed_sqrt", |y, out| out[0] = -y[0].signum() * y[0].abs().sqrt()),
        PlantedForm::SignedSquare => Generator::from_y_fn(1, 1, "planted_signed_square", |y, out| out[0] = y[0] * y[0].abs()),
    };
    Ok((g, env))
}

/// Radial profile of the `z`-factor: `ρ√(−log ρ)` below `1 − ε₀`,
/// `ρ√(log ρ)` above `1 + ε₀`, cubic Hermite in between.
#[derive(Debug, Clone, Copy)]
struct RadialH {
    a: f64,
    b: f64,
    ha: f64,
    hb: f64,
    da: f64,
    db: f64,
}

impl RadialH {
    fn new(eps0: f64) -> Self {
        let a = 1.0 - eps0;
        let b = 1.0 + eps0;
        let la = -a.ln();
        let lb = b.ln();
        Self {
            a,
            b,
            ha: a * la.sqrt(),
            hb: b * lb.sqrt(),
            da: la.sqrt() - 0.5 / la.sqrt(),
            db: lb.sqrt() + 0.5 / lb.sqrt(),
        }
    }

    fn eval(&self, rho: f64) -> f64 {
        if rho <= 0.0 {
            0.0
        } else if rho < self.a {
            rho * (-rho.ln()).sqrt()
        } else if rho > self.b {
            rho * rho.ln().sqrt()
        } else {
            let w = self.b - self.a;
            let s = (rho - self.a) / w;
            let s2 = s * s;
            let s3 = s2 * s;
            (2.0 * s3 - 3.0 * s2 + 1.0) * self.ha
                + (s3 - 2.0 * s2 + s) * w * self.da
                + (-2.0 * s3 + 3.0 * s2) * self.hb
                + (s3 - s2) * w * self.db
        }
    }
}

fn gh_product(p: &GhProductParams) -> Result<(Generator, AssumptionEnvelope)> {
    let kind = "gh_product";
    check_common(kind, p.d, p.r, p.p)?;
    if !(p.eps0 > 0.0 && p.eps0 < 1.0) {
        return Err(invalid(kind, format!("eps0 = {} must lie in ]0, 1[", p.eps0)));
    }
    let h = RadialH::new(p.eps0);
    let min_inside = (0..=1000)
        .map(|i| h.eval(h.a + (h.b - h.a) * i as f64 / 1000.0))
        .fold(f64::INFINITY, f64::min);
    if min_inside < 0.0 {
        return Err(invalid(kind, "Hermite bridge of h dips below zero for this eps0"));
    }
    let g = Generator::new(
        p.d,
        p.r,
        kind,
        Arc::new(move |_, _, y, z, out| {
            let ny = norm(y);
            let hz = h.eval(norm(z));
            let scale = if ny > 0.0 { (ny / (1.0 + ny)).ln() } else { 0.0 };
            for (o, yi) in out.iter_mut().zip(y) {
                *o = yi * scale * hz;
            }
        }),
    );
    let mut env = AssumptionEnvelope::trivial(p.p, p.gamma);
    let ap = env.alpha_prime;
    env.eta_bar = constant_field(certified_sup(|s| h.eval(s) - s.powf(ap)));
    env.k_prime = 4.0;
    Ok((g, env))
}

fn state_coupled(p: &StateCoupledParams) -> Result<(Generator, AssumptionEnvelope)> {
    let kind = "state_coupled";
    check_common(kind, p.d, 1, p.p)?;
    if !(p.qbar > 0.0 && p.qbar < 2.0) {
        return Err(invalid(kind, format!("qbar = {} must lie in ]0, 2[", p.qbar)));
    }
    let qbar = p.qbar;
    let g = Generator::new(
        p.d,
        1,
        kind,
        Arc::new(move |_, x, y, _, out| {
            let coupling = norm(x).powf(qbar);
            let l = log_norm(y);
            for (o, yi) in out.iter_mut().zip(y) {
                *o = coupling * yi - yi * l;
            }
        }),
    )
    .z_free();
    let mut env = AssumptionEnvelope::trivial(p.p, p.gamma);
    let alpha = env.alpha;
    let c_log = certified_sup(|s| if s > 0.0 { s * s.ln().abs() - 0.5 * s.powf(alpha) } else { 0.0 });
    env.eta = constant_field(1.0);
    env.m = Arc::new(move |_, x| norm(x).powf(qbar));
    env.eta_bar = Arc::new(move |_, x| young_linear(norm(x).powf(qbar), alpha, 0.5) * 1.05 + c_log);
    env.v = Arc::new(move |_, x| norm(x).powf(qbar).exp());
    env.k_prime = 4.0;
    Ok((g, env))
}

/// `ζ(ρ) = ρ √(log(1 + 1/ρ))`, with ζ(0) = 0.
fn zeta(rho: f64) -> f64 {
    if rho > 0.0 {
        rho * (1.0 / rho).ln_1p().sqrt()
    } else {
        0.0
    }
}

fn stochastic_monotone(p: &StochasticMonotoneParams) -> Result<(Generator, AssumptionEnvelope)> {
    let kind = "stochastic_monotone";
    check_common(kind, p.d, p.r, p.p)?;
    if !(p.c >= 0.0 && p.beta >= 0.0) {
        return Err(invalid(kind, "c and beta must be non-negative"));
    }
    let (c, beta, r) = (p.c, p.beta, p.r);
    let g = Generator::new(
        p.d,
        p.r,
        kind,
        Arc::new(move |_, x, y, z, out| {
            let coeff = c * norm(x);
            let l = log_norm(y);
            for (i, (o, yi)) in out.iter_mut().zip(y).enumerate() {
                let row = norm(&z[i * r..(i + 1) * r]);
                *o = coeff * yi - yi * l + beta * zeta(row);
            }
        }),
    );
    let mut env = AssumptionEnvelope::trivial(p.p, p.gamma);
    let (alpha, alpha_prime) = (env.alpha, env.alpha_prime);
    let d = p.d as f64;
    let c_log = certified_sup(|s| if s > 0.0 { s * s.ln().abs() - 0.5 * s.powf(alpha) } else { 0.0 });
    let c_z = certified_sup(|s| beta * d.powf(0.25) * s.sqrt() - s.powf(alpha_prime));
    env.eta = constant_field(1.0);
    env.f0 = constant_field(0.5 * beta * d.sqrt());
    env.m = Arc::new(move |_, x| c * norm(x));
    env.k_proc = constant_field(0.5 * beta);
    env.eta_bar = Arc::new(move |_, x| young_linear(c * norm(x), alpha, 0.5) * 1.05 + c_log + c_z);
    env.v = Arc::new(move |_, x| (c * norm(x)).exp());
    env.k_prime = 4.0 * (1.0 + beta * beta);
    Ok((g, env))
}

fn composite5(p: &Composite5Params) -> Result<(Generator, AssumptionEnvelope)> {
    let kind = "composite5";
    check_common(kind, p.d, p.r, p.p)?;
    let (q, qp, qs) = (p.qbar, p.qbar_prime, p.qbar_second);
    if !(q >= 0.0 && qp >= 0.0 && qs >= 0.0) || !(q + qs < 2.0) || !(qp + qs < 1.0) {
        return Err(invalid(kind, "need qbar, qbar', qbar'' >= 0, qbar + qbar'' < 2, qbar' + qbar'' < 1"));
    }
    if !(p.lipschitz >= 0.0) {
        return Err(invalid(kind, "lipschitz must be non-negative"));
    }
    let (lip, r) = (p.lipschitz, p.r);
    let g = Generator::new(
        p.d,
        p.r,
        kind,
        Arc::new(move |_, x, y, z, out| {
            let nx = norm(x);
            let a = nx.powf(qs);
            let b = nx.powf(q);
            let c = nx.powf(qp);
            let base = nx.cos();
            for (i, (o, yi)) in out.iter_mut().zip(y).enumerate() {
                let s: f64 = z[i * r..(i + 1) * r].iter().sum();
                *o = a * (base - b * yi + lip * (c * s).tanh());
            }
        }),
    );
    let mut env = AssumptionEnvelope::trivial(p.p, p.gamma);
    let alpha = env.alpha;
    let d = p.d as f64;
    env.f0 = Arc::new(move |_, x| norm(x).powf(qs) * d.sqrt() * (1.0 + lip));
    env.eta_bar = Arc::new(move |_, x| {
        let nx = norm(x);
        let a = nx.powf(qs);
        a * d.sqrt() * (1.0 + lip) + young_linear(a * nx.powf(q), alpha, 1.0) * 1.05 + 1e-12
    });
    env.v = Arc::new(move |_, x| norm(x).powf(2.0 * (qp + qs)).exp());
    env.k_prime = (lip * lip * r as f64).max(1.0);
    Ok((g, env))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::E;

    #[test]
    fn log_drift_values() {
        let (g, env) = make_example(&ExampleSpec::log_drift(1.0, 1)).unwrap();
        assert_eq!(g.eval(0.0, &[0.0], &[1.0], &[0.0]), vec![0.0]);
        assert!((g.eval(0.0, &[0.0], &[E], &[0.0])[0] + E).abs() < 1e-15);
        assert_eq!(g.eval(0.0, &[0.0], &[0.0], &[0.0]), vec![0.0]);
        assert_eq!((env.eta_bar)(0.0, &[0.0]), 3.0);
        assert_eq!((env.eta)(0.0, &[0.0]), 1.0);
    }

    #[test]
    fn log_drift_is_continuous_at_zero() {
        let (g, _) = make_example(&ExampleSpec::log_drift(1.0, 2)).unwrap();
        let dir = [0.6, -0.8];
        let mut prev = f64::INFINITY;
        for k in 2..30 {
            let r = 0.5f64.powi(k);
            let y = [dir[0] * r, dir[1] * r];
            let v = norm(&g.eval(0.0, &[0.0], &y, &[0.0, 0.0]));
            assert!(v < prev || v == 0.0);
            prev = v;
        }
        assert!(prev < 1e-7);
    }

    #[test]
    fn gh_product_vanishes_at_zero_y() {
        let (g, _) = make_example(&ExampleSpec::GhProduct(GhProductParams {
            eps0: 0.5,
            d: 1,
            r: 1,
            p: 2.0,
            gamma: 0.2,
        }))
        .unwrap();
        assert_eq!(g.eval(0.0, &[0.0], &[0.0], &[0.7]), vec![0.0]);
    }

    #[test]
    fn radial_h_is_c1_across_the_annulus() {
        let h = RadialH::new(0.5);
        for edge in [h.a, h.b] {
            let e = 1e-7;
            assert!((h.eval(edge - e) - h.eval(edge + e)).abs() < 1e-6);
            let left = (h.eval(edge - e) - h.eval(edge - 2.0 * e)) / e;
            let right = (h.eval(edge + 2.0 * e) - h.eval(edge + e)) / e;
            assert!((left - right).abs() < 1e-4, "kink at {edge}");
        }
    }

    #[test]
    fn parameter_errors() {
        let bad = ExampleSpec::GhProduct(GhProductParams {
            eps0: 1.5,
            d: 1,
            r: 1,
            p: 2.0,
            gamma: 0.2,
        });
        assert!(matches!(make_example(&bad), Err(Error::InvalidParameters { .. })));
        let bad = ExampleSpec::StateCoupled(StateCoupledParams {
            qbar: 2.5,
            d: 1,
            p: 2.0,
            gamma: 0.2,
        });
        assert!(matches!(make_example(&bad), Err(Error::InvalidParameters { .. })));
    }

    #[test]
    fn young_closed_form_matches_scan() {
        let exact = young_linear(3.0, 1.5, 0.5);
        let scanned = certified_sup(|s| 3.0 * s - 0.5 * s.powf(1.5));
        assert!(scanned >= exact && scanned < exact * 1.06 + 1e-6);
    }

    #[test]
    fn spec_parses_by_kind_string() {
        let spec: ExampleSpec = serde_json::from_str(r#"{"kind":"log_drift","k":0.5}"#).unwrap();
        assert_eq!(spec.kind(), "log_drift");
        assert!(serde_json::from_str::<ExampleSpec>(r#"{"kind":"log_drift","bogus":1}"#).is_err());
        assert!(serde_json::from_str::<ExampleSpec>(r#"{"kind":"nope"}"#).is_err());
    }
}
