//! Bump-kernel smoothing and truncation of `(ξ, f)`.
//!
//! `f_n = 1{Λ̄ ≤ n} (c₁e)² ψ(|y|²/n²) ψ(|z|²/n²) · (f ⋆ ψ_m)(y, z)` with
//! `m = n^{2p}/h(t, x)`. The convolution runs over the support cube of
//! half-width `1/m` with tensor Gauss–Legendre nodes; the kernel is folded
//! into the weights, which are then renormalised to sum to one so constants
//! are reproduced exactly.

use std::sync::Arc;

use rand::Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::generator::{rho_n, AssumptionEnvelope, BoxSampler, Generator, ScalarField};
use crate::quadrature::GaussLegendre;
use crate::rng::{derive_seed, path_stream};
use crate::stats::{dot, norm};

/// `∫_{−1}^{1} exp(−1/(1−x²)) dx`.
pub const C1: f64 = 0.443_993_816_168_079_4;

/// Largest `d + d·r` accepted by the tensor quadrature.
pub const MAX_CONV_DIM: usize = 6;

pub fn psi(x: f64) -> f64 {
    if x.abs() < 1.0 {
        (-1.0 / (1.0 - x * x)).exp() / C1
    } else {
        0.0
    }
}

/// `(c₁e)·ψ(s)`, which equals 1 at `s = 0`.
fn outer_factor(s: f64) -> f64 {
    if s.abs() < 1.0 {
        (1.0 - 1.0 / (1.0 - s * s)).exp()
    } else {
        0.0
    }
}

pub fn truncate_terminal(xi: &[f64], n: f64) -> Vec<f64> {
    if norm(xi) <= n {
        xi.to_vec()
    } else {
        vec![0.0; xi.len()]
    }
}

/// Default weight `h(t, x) = e^{−|x|}`.
pub fn default_h() -> ScalarField {
    Arc::new(|_, x| (-norm(x)).exp())
}

#[derive(Clone)]
pub struct ApproxGenerator {
    base: Generator,
    env: AssumptionEnvelope,
    n: f64,
    h: ScalarField,
    quad_nodes: usize,
    /// Nodes on [−1, 1] and ψ-weighted, normalised weights.
    nodes: Vec<f64>,
    weights: Vec<f64>,
    conv_axes: usize,
}

impl std::fmt::Debug for ApproxGenerator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ApproxGenerator")
            .field("base", &self.base)
            .field("n", &self.n)
            .field("quad_nodes", &self.quad_nodes)
            .finish()
    }
}

pub fn mollify_generator(
    g: &Generator,
    env: &AssumptionEnvelope,
    n: f64,
    h: ScalarField,
    quad_nodes: usize,
) -> Result<ApproxGenerator> {
    let full = g.dim_d() + g.dim_z();
    if full > MAX_CONV_DIM {
        return Err(Error::UnsupportedDimension(full));
    }
    if quad_nodes < 8 {
        return Err(Error::InvalidParameters {
            kind: "mollify".into(),
            reason: format!("quad_nodes = {quad_nodes} must be at least 8"),
        });
    }
    if !(n >= 1.0) {
        return Err(Error::InvalidParameters {
            kind: "mollify".into(),
            reason: format!("n = {n} must be at least 1"),
        });
    }
    let gl = GaussLegendre::new(quad_nodes);
    let raw: Vec<f64> = gl.nodes.iter().zip(&gl.weights).map(|(s, w)| w * psi(*s)).collect();
    let total: f64 = raw.iter().sum();
    let conv_axes = if g.is_z_free() { g.dim_d() } else { full };
    Ok(ApproxGenerator {
        base: g.clone(),
        env: env.clone(),
        n,
        h,
        quad_nodes,
        nodes: gl.nodes,
        weights: raw.iter().map(|w| w / total).collect(),
        conv_axes,
    })
}

impl ApproxGenerator {
    pub fn n(&self) -> f64 {
        self.n
    }

    pub fn quad_nodes(&self) -> usize {
        self.quad_nodes
    }

    pub fn base(&self) -> &Generator {
        &self.base
    }

    pub fn envelope(&self) -> &AssumptionEnvelope {
        &self.env
    }

    pub fn h(&self, t: f64, x: &[f64]) -> f64 {
        (self.h)(t, x)
    }

    /// `m = n^{2p}/h`.
    pub fn m(&self, t: f64, x: &[f64]) -> f64 {
        self.n.powf(2.0 * self.env.p) / self.h(t, x)
    }

    pub fn lambda_bar(&self, t: f64, x: &[f64]) -> f64 {
        self.env.lambda_bar(t, x, self.h(t, x))
    }

    /// Whether `1{Λ̄ ≤ n}` is active at `(t, x)`.
    pub fn active(&self, t: f64, x: &[f64]) -> bool {
        self.lambda_bar(t, x) <= self.n
    }

    pub fn eval(&self, t: f64, x: &[f64], y: &[f64], z: &[f64]) -> Result<Vec<f64>> {
        let d = self.base.dim_d();
        let mut out = vec![0.0; d];
        let n2 = self.n * self.n;
        let outer = outer_factor(dot(y, y) / n2) * outer_factor(dot(z, z) / n2);
        if outer == 0.0 || !self.active(t, x) {
            return Ok(out);
        }
        let inv_m = 1.0 / self.m(t, x);
        let q = self.nodes.len();
        let axes = self.conv_axes;
        let mut idx = vec![0usize; axes];
        let mut ys = y.to_vec();
        let mut zs = z.to_vec();
        let mut val = vec![0.0; d];
        loop {
            let mut w = 1.0;
            for (a, &i) in idx.iter().enumerate() {
                let shift = self.nodes[i] * inv_m;
                if a < d {
                    ys[a] = y[a] - shift;
                } else {
                    zs[a - d] = z[a - d] - shift;
                }
                w *= self.weights[i];
            }
            self.base.eval_into(t, x, &ys, &zs, &mut val);
            for (o, v) in out.iter_mut().zip(&val) {
                if !v.is_finite() {
                    return Err(Error::NumericFault {
                        path: 0,
                        step: 0,
                        what: format!("non-finite base driver value inside the convolution cube at y = {ys:?}"),
                    });
                }
                *o += w * v;
            }
            // Odometer over the tensor grid.
            let mut a = axes;
            loop {
                if a == 0 {
                    for o in out.iter_mut() {
                        *o *= outer;
                    }
                    return Ok(out);
                }
                a -= 1;
                idx[a] += 1;
                if idx[a] < q {
                    break;
                }
                idx[a] = 0;
            }
        }
    }

    /// Plain [`Generator`] view; quadrature faults surface as NaN output.
    pub fn to_generator(&self) -> Generator {
        let me = self.clone();
        let g = Generator::new(
            self.base.dim_d(),
            self.base.dim_r(),
            format!("{}~n{}", self.base.label(), self.n),
            Arc::new(move |t, x, y, z, out| match me.eval(t, x, y, z) {
                Ok(v) => out.copy_from_slice(&v),
                Err(_) => out.fill(f64::NAN),
            }),
        );
        if self.base.is_z_free() {
            g.z_free()
        } else {
            g
        }
    }
}

/// Options for [`verify_approx_properties`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ApproxCheckOptions {
    pub level: f64,
    pub n_samples: usize,
    pub quad_nodes: usize,
    pub rho_density: usize,
    /// (e) requires ρ_N at the final n to be below this.
    pub rho_threshold: f64,
    /// Number of `(t, x)` points at which ρ_N is computed for (f).
    pub rho_points: usize,
}

impl Default for ApproxCheckOptions {
    fn default() -> Self {
        Self {
            level: 1.0,
            n_samples: 10_000,
            quad_nodes: 16,
            rho_density: 201,
            rho_threshold: 1e-2,
            rho_points: 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ApproxLevelReport {
    pub n: f64,
    /// ρ_N(f_n − f) at the sampler's centre point.
    pub rho: f64,
    pub max_abs: f64,
    pub c_pass: bool,
    pub c_worst_margin: f64,
    pub d_pass: bool,
    pub d_worst_margin: f64,
    pub f_pass: bool,
    /// Largest sampled difference quotient of f_n.
    pub lipschitz: f64,
    pub support_pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ApproxReport {
    pub levels: Vec<ApproxLevelReport>,
    pub a_pass: bool,
    pub e_monotone: bool,
    pub e_below_threshold: bool,
    pub passed: bool,
}

fn sample_point(rng: &mut impl Rng, s: &BoxSampler, d: usize, dz: usize) -> (f64, Vec<f64>, Vec<f64>, Vec<f64>) {
    let mut u = |r: (f64, f64)| r.0 + (r.1 - r.0) * rng.random::<f64>();
    let t = u(s.t);
    let x = (0..s.dim_k).map(|_| u(s.x)).collect();
    let y = (0..d).map(|_| u(s.y)).collect();
    let z = (0..dz).map(|_| u(s.z)).collect();
    (t, x, y, z)
}

fn slack(a: f64, b: f64) -> f64 {
    1e-9 * (1.0 + a.abs().max(b.abs()))
}

/// Sampled certification of the approximation properties along `schedule`.
pub fn verify_approx_properties(
    g: &Generator,
    env: &AssumptionEnvelope,
    schedule: &[f64],
    h: ScalarField,
    sampler: &BoxSampler,
    opts: &ApproxCheckOptions,
) -> Result<ApproxReport> {
    if schedule.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidParameters {
            kind: "mollify".into(),
            reason: "schedule must be increasing".into(),
        });
    }
    let (d, dz) = (g.dim_d(), g.dim_z());
    let p = env.p;
    let centre_t = 0.5 * (sampler.t.0 + sampler.t.1);
    let centre_x = vec![0.5 * (sampler.x.0 + sampler.x.1); sampler.dim_k];
    let lvl = opts.level;

    // (a) on sampled terminal values.
    let mut rng = path_stream(derive_seed(sampler.seed, "mollify/a"), 0);
    let a_pass = (0..opts.n_samples).all(|_| {
        let xi: Vec<f64> = (0..d).map(|_| 10.0 * (2.0 * rng.random::<f64>() - 1.0)).collect();
        schedule.iter().all(|&n| norm(&truncate_terminal(&xi, n)) <= norm(&xi))
    });

    let mut levels = Vec::with_capacity(schedule.len());
    for &n in schedule {
        let fn_ = mollify_generator(g, env, n, h.clone(), opts.quad_nodes)?;
        let mut rng = path_stream(derive_seed(sampler.seed, &format!("mollify/{n}")), 0);
        let (mut c_worst, mut d_worst) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
        let (mut c_pass, mut d_pass, mut support_pass) = (true, true, true);
        let mut max_abs = 0.0f64;
        let mut lipschitz = 0.0f64;
        for i in 0..opts.n_samples {
            let (t, x, y, z) = sample_point(&mut rng, sampler, d, dz);
            let v = fn_.eval(t, &x, &y, &z)?;
            let nv = norm(&v);
            max_abs = max_abs.max(nv);
            let hv = fn_.h(t, &x);
            let (ny, nz) = (norm(&y), norm(&z));
            let inside = fn_.active(t, &x) && ny <= n && nz <= n;
            if (ny >= n || nz >= n) && nv != 0.0 {
                support_pass = false;
            }
            // (c)
            let bound_c = if inside {
                (env.eta_bar)(t, &x) + ny.powf(env.alpha) + nz.powf(env.alpha_prime) + 2.0 * p * hv
            } else {
                0.0
            };
            let bound_c = bound_c.min(2.0 * p + 3.0 * n.powf(p));
            c_worst = c_worst.max(nv - bound_c);
            if nv - bound_c > slack(nv, bound_c) {
                c_pass = false;
            }
            // (d)
            let lhs = dot(&y, &v);
            let rhs = if fn_.active(t, &x) {
                (env.eta)(t, &x) + (env.f0)(t, &x) * ny + (env.m)(t, &x) * ny * ny + (env.k_proc)(t, &x) * ny * nz + 10.0 * hv
            } else {
                0.0
            };
            d_worst = d_worst.max(lhs - rhs);
            if lhs - rhs > slack(lhs, rhs) {
                d_pass = false;
            }
            // (b): one difference quotient per sample on a short random step.
            if i % 4 == 0 && inside {
                let step = 1e-3 * (1.0 / fn_.m(t, &x)).max(1e-6);
                let mut y2 = y.clone();
                let mut z2 = z.clone();
                for v in y2.iter_mut().chain(z2.iter_mut()) {
                    *v += step * (2.0 * rng.random::<f64>() - 1.0);
                }
                let v2 = fn_.eval(t, &x, &y2, &z2)?;
                let dv = v.iter().zip(&v2).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
                let du = y.iter().chain(&z).zip(y2.iter().chain(&z2)).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
                if du > 0.0 {
                    lipschitz = lipschitz.max(dv / du);
                }
            }
        }
        let fg = fn_.to_generator();
        let rho = rho_n(&fg, g, lvl, centre_t, &centre_x, opts.rho_density)?;
        // (f) at the centre plus a few sampled (t, x).
        let mut f_pass = true;
        let mut pts = vec![(centre_t, centre_x.clone())];
        for _ in 1..opts.rho_points {
            let (t, x, _, _) = sample_point(&mut rng, sampler, 0, 0);
            pts.push((t, x));
        }
        for (k, (t, x)) in pts.iter().enumerate() {
            let r = if k == 0 { rho } else { rho_n(&fg, g, lvl, *t, x, opts.rho_density.min(51))? };
            let bound = 2.0 * ((env.eta_bar)(*t, x) + lvl.powf(env.alpha) + lvl.powf(env.alpha_prime) + 2.0 * p * fn_.h(*t, x));
            if r - bound > slack(r, bound) {
                f_pass = false;
            }
        }
        levels.push(ApproxLevelReport {
            n,
            rho,
            max_abs,
            c_pass,
            c_worst_margin: c_worst,
            d_pass,
            d_worst_margin: d_worst,
            f_pass,
            lipschitz,
            support_pass,
        });
    }
    let e_monotone = levels.windows(2).all(|w| w[1].rho <= w[0].rho);
    let e_below_threshold = levels.last().is_none_or(|l| l.rho <= opts.rho_threshold);
    let passed = a_pass
        && e_monotone
        && e_below_threshold
        && levels.iter().all(|l| l.c_pass && l.d_pass && l.f_pass && l.support_pass && l.lipschitz.is_finite());
    Ok(ApproxReport {
        levels,
        a_pass,
        e_monotone,
        e_below_threshold,
        passed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generator::{make_example, ExampleSpec};
    use crate::quadrature::adaptive_integrate;

    #[test]
    fn c1_golden_value() {
        let c = adaptive_integrate(&|x: f64| (-1.0 / (1.0 - x * x)).exp(), -1.0 + 1e-15, 1.0 - 1e-15, 1e-14);
        assert!((c - C1).abs() < 1e-8);
        assert!((c - 0.4440).abs() < 1e-4);
    }

    #[test]
    fn psi_values() {
        assert_eq!(psi(1.0), 0.0);
        assert_eq!(psi(-1.5), 0.0);
        assert!((psi(0.0) - (-1f64).exp() / C1).abs() < 1e-15);
        let total = adaptive_integrate(&psi, -1.0, 1.0, 1e-13);
        assert!((total - 1.0).abs() < 1e-10);
    }

    #[test]
    fn truncation() {
        assert_eq!(truncate_terminal(&[0.5], 1.0), vec![0.5]);
        assert_eq!(truncate_terminal(&[3.0, 0.0], 1.0), vec![0.0, 0.0]);
    }

    #[test]
    fn zero_generator_stays_zero() {
        let g = Generator::zero(1, 1);
        let env = AssumptionEnvelope::trivial(2.0, 0.2);
        let a = mollify_generator(&g, &env, 4.0, default_h(), 8).unwrap();
        for y in [-3.0, 0.0, 0.3, 2.0] {
            assert_eq!(a.eval(0.0, &[0.0], &[y], &[0.1]).unwrap(), vec![0.0]);
        }
    }

    #[test]
    fn constant_driver_reproduced_inside_the_cut() {
        let g = Generator::from_y_fn(1, 1, "one", |_, out| out[0] = 1.0);
        let env = AssumptionEnvelope::trivial(2.0, 0.2);
        let a = mollify_generator(&g, &env, 4.0, default_h(), 8).unwrap();
        let v = a.eval(0.0, &[0.0], &[0.0], &[0.0]).unwrap()[0];
        assert!((v - 1.0).abs() < 1e-14);
    }

    #[test]
    fn log_drift_limit() {
        let (g, env) = make_example(&ExampleSpec::log_drift(1.0, 1)).unwrap();
        let target = -0.5 * 0.5f64.ln();
        let a = mollify_generator(&g, &env, 16.0, Arc::new(|_, _| 1.0), 16).unwrap();
        let v = a.eval(0.0, &[0.0], &[0.5], &[0.0]).unwrap()[0];
        assert!((v - target).abs() < 1e-3, "{v} vs {target}");
    }

    #[test]
    fn support_and_indicator() {
        let (g, env) = make_example(&ExampleSpec::log_drift(1.0, 1)).unwrap();
        let a = mollify_generator(&g, &env, 8.0, default_h(), 8).unwrap();
        assert_eq!(a.eval(0.0, &[0.0], &[8.0], &[0.0]).unwrap(), vec![0.0]);
        // Λ̄ = 1 + 3 + 1/h = 5 > 4 at n = 4.
        let a4 = mollify_generator(&g, &env, 4.0, default_h(), 8).unwrap();
        assert!(!a4.active(0.0, &[0.0]));
        assert!(a.active(0.0, &[0.0]));
    }

    #[test]
    fn dimension_cap_and_node_floor() {
        let g = Generator::new(2, 3, "wide", Arc::new(|_, _, _, _, out: &mut [f64]| out.fill(0.0)));
        let env = AssumptionEnvelope::trivial(2.0, 0.2);
        assert!(matches!(mollify_generator(&g, &env, 2.0, default_h(), 8), Err(Error::UnsupportedDimension(8))));
        let g = Generator::zero(1, 1);
        assert!(mollify_generator(&g, &env, 2.0, default_h(), 4).is_err());
    }

    #[test]
    fn non_finite_base_is_a_fault() {
        let g = Generator::from_y_fn(1, 1, "pole", |y, out| out[0] = 1.0 / y[0]);
        let env = AssumptionEnvelope::trivial(2.0, 0.2);
        let a = mollify_generator(&g, &env, 2.0, default_h(), 9).unwrap();
        assert!(matches!(a.eval(0.0, &[0.0], &[0.0], &[0.0]), Err(Error::NumericFault { .. })));
    }
}
