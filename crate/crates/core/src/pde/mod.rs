//! Markovian link between the BSDE and the semilinear PDE
//! `∂u/∂t + Lu + F(t, x, u, σ*∇u) = 0`, `u(T, ·) = g`.
//!
//! Fields are evaluated pointwise through per-node BSDEs and checked against
//! deterministic references: implicit finite differences in one dimension and
//! characteristics when `σ ≡ 0`. The weak formulation itself is not
//! discretized.

mod characteristics;
mod fd;
mod linear_log;
mod monte_carlo;

pub use characteristics::characteristics_oracle;
pub use fd::{fd_reference_1d, FdMesh};
pub use linear_log::{make_linear_log_pde, MatrixField, TensorField};
pub use monte_carlo::{mc_field, McFieldOptions};

use serde::{Deserialize, Serialize};

use crate::bsde::{Terminal, TerminalFn};
use crate::error::{Error, Result};
use crate::forward::DiffusionSpec;
use crate::generator::{AssumptionEnvelope, Generator};
use crate::grid::SpaceGrid;
use crate::quadrature::{trapezoid_weights, GaussLegendre};

/// Weight data of the Sobolev estimate: `δ`, the exponent `p̄` and the
/// linear-growth coefficient `M′` of the monotonicity bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PdeWeights {
    pub delta: f64,
    pub p_bar: f64,
    pub m_prime: f64,
}

impl Default for PdeWeights {
    fn default() -> Self {
        Self {
            delta: 1.0,
            p_bar: 3.0,
            m_prime: 0.0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct PdeProblem {
    pub diffusion: DiffusionSpec,
    pub terminal: Terminal,
    pub generator: Generator,
    pub horizon: f64,
    pub envelope: AssumptionEnvelope,
    pub weights: PdeWeights,
}

impl PdeProblem {
    pub fn new(
        diffusion: DiffusionSpec,
        terminal: Terminal,
        generator: Generator,
        horizon: f64,
        envelope: AssumptionEnvelope,
        weights: PdeWeights,
    ) -> Result<Self> {
        if terminal.dim_d() != generator.dim_d() {
            return Err(Error::DimensionMismatch(format!(
                "terminal has d = {}, generator d = {}",
                terminal.dim_d(),
                generator.dim_d()
            )));
        }
        if generator.dim_r() != diffusion.dim_r() {
            return Err(Error::DimensionMismatch(format!(
                "generator r = {}, diffusion r = {}",
                generator.dim_r(),
                diffusion.dim_r()
            )));
        }
        if !(horizon > 0.0) {
            return Err(Error::InvalidInterval { t0: 0.0, t_end: horizon });
        }
        if !(weights.delta >= 0.0) || !(weights.m_prime >= 0.0) {
            return Err(Error::InvalidParameters {
                kind: "pde".into(),
                reason: "delta and M' must be nonnegative".into(),
            });
        }
        Ok(Self {
            diffusion,
            terminal,
            generator,
            horizon,
            envelope,
            weights,
        })
    }

    pub fn dim_k(&self) -> usize {
        self.diffusion.dim_k()
    }

    pub fn dim_d(&self) -> usize {
        self.generator.dim_d()
    }

    pub fn g(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim_d()];
        self.terminal.eval_into(x, &mut out);
        out
    }

    /// `δ′ = δ + κ′ + 1_{M′≠0}` with `p` taken from the envelope.
    pub fn delta_prime(&self, horizon: f64) -> Result<f64> {
        let w = &self.weights;
        let kappa = kappa_prime(self.envelope.p, w.p_bar, w.m_prime, horizon)?;
        Ok(delta_prime(w.delta, kappa, w.m_prime))
    }
}

/// Wrap a closure as a terminal function `g: R^k → R^d`.
pub fn terminal_fn<F>(dim_d: usize, g: F) -> Terminal
where
    F: Fn(&[f64], &mut [f64]) + Send + Sync + 'static,
{
    let g: TerminalFn = std::sync::Arc::new(g);
    Terminal::Function { dim_d, g }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    MonteCarlo,
    FiniteDifference,
    Characteristics,
}

impl Provenance {
    pub fn as_str(self) -> &'static str {
        match self {
            Provenance::MonteCarlo => "monte_carlo",
            Provenance::FiniteDifference => "finite_difference",
            Provenance::Characteristics => "characteristics",
        }
    }
}

/// Values of `u` (and optionally `σ*∇u`) on `t_grid × x_grid`.
///
/// Arrays are slice-major: entry `(ti, node, c)` of `u` sits at
/// `(ti·n_nodes + node)·d + c`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PdeField {
    pub t_grid: Vec<f64>,
    pub x_grid: SpaceGrid,
    pub dim_d: usize,
    pub dim_z: usize,
    pub u: Vec<f64>,
    pub z: Option<Vec<f64>>,
    /// Monte Carlo standard errors of `u` and `z`.
    pub u_stderr: Option<Vec<f64>>,
    pub z_stderr: Option<Vec<f64>>,
    /// Nodes where the solve diverged; their entries are NaN.
    pub missing: Vec<bool>,
    pub provenance: Provenance,
    pub warnings: Vec<String>,
}

impl PdeField {
    pub(crate) fn empty(t_grid: Vec<f64>, x_grid: SpaceGrid, dim_d: usize, dim_z: usize, provenance: Provenance) -> Self {
        let m = t_grid.len() * x_grid.len();
        Self {
            u: vec![0.0; m * dim_d],
            z: None,
            u_stderr: None,
            z_stderr: None,
            missing: vec![false; m],
            t_grid,
            x_grid,
            dim_d,
            dim_z,
            provenance,
            warnings: Vec::new(),
        }
    }

    pub fn n_nodes(&self) -> usize {
        self.x_grid.len()
    }

    fn idx(&self, ti: usize, node: usize) -> usize {
        ti * self.n_nodes() + node
    }

    pub fn u_at(&self, ti: usize, node: usize) -> &[f64] {
        let b = self.idx(ti, node) * self.dim_d;
        &self.u[b..b + self.dim_d]
    }

    pub fn z_at(&self, ti: usize, node: usize) -> Option<&[f64]> {
        let b = self.idx(ti, node) * self.dim_z;
        self.z.as_ref().map(|z| &z[b..b + self.dim_z])
    }

    pub fn is_missing(&self, ti: usize, node: usize) -> bool {
        self.missing[self.idx(ti, node)]
    }

    pub fn n_missing(&self) -> usize {
        self.missing.iter().filter(|m| **m).count()
    }

    pub(crate) fn set_missing(&mut self, ti: usize, node: usize) {
        let i = self.idx(ti, node);
        self.missing[i] = true;
        self.u[i * self.dim_d..(i + 1) * self.dim_d].fill(f64::NAN);
        if let Some(z) = self.z.as_mut() {
            z[i * self.dim_z..(i + 1) * self.dim_z].fill(f64::NAN);
        }
    }

    /// Index of the slice at time `t` (within 1e-9).
    pub fn slice_at(&self, t: f64) -> Option<usize> {
        self.t_grid.iter().position(|s| (s - t).abs() <= 1e-9 * (1.0 + t.abs()))
    }

    /// Multilinear interpolation of `u` on slice `ti`; `None` outside the
    /// grid hull or next to a missing node.
    pub fn interpolate(&self, ti: usize, x: &[f64]) -> Option<Vec<f64>> {
        let axes = self.x_grid.axes();
        if x.len() != axes.len() {
            return None;
        }
        let mut lo = Vec::with_capacity(axes.len());
        let mut frac = Vec::with_capacity(axes.len());
        for (axis, &xi) in axes.iter().zip(x) {
            let n = axis.len();
            if n == 1 {
                if (xi - axis[0]).abs() > 1e-12 {
                    return None;
                }
                lo.push(0);
                frac.push(0.0);
                continue;
            }
            if xi < axis[0] - 1e-12 || xi > axis[n - 1] + 1e-12 {
                return None;
            }
            let j = axis.partition_point(|a| *a <= xi).clamp(1, n - 1) - 1;
            lo.push(j);
            frac.push(((xi - axis[j]) / (axis[j + 1] - axis[j])).clamp(0.0, 1.0));
        }
        let k = axes.len();
        let mut out = vec![0.0; self.dim_d];
        for corner in 0..(1usize << k) {
            let mut w = 1.0;
            let mut node = 0;
            for a in 0..k {
                let up = (corner >> a) & 1 == 1;
                let f = if up { frac[a] } else { 1.0 - frac[a] };
                if f == 0.0 {
                    w = 0.0;
                    break;
                }
                w *= f;
                node = node * axes[a].len() + lo[a] + up as usize;
            }
            if w == 0.0 {
                continue;
            }
            if self.is_missing(ti, node) {
                return None;
            }
            for (o, v) in out.iter_mut().zip(self.u_at(ti, node)) {
                *o += w * v;
            }
        }
        Some(out)
    }
}

/// `κ′ = p p̄ M′ T/(p̄ − p) · max(4, 2p/(p−1))`.
pub fn kappa_prime(p: f64, p_bar: f64, m_prime: f64, horizon: f64) -> Result<f64> {
    if !(p > 1.0) || !(p_bar > p) {
        return Err(Error::InvalidExponents(format!("need 1 < p < p̄, got p = {p}, p̄ = {p_bar}")));
    }
    Ok(p * p_bar * m_prime * horizon / (p_bar - p) * 4f64.max(2.0 * p / (p - 1.0)))
}

/// `δ′ = δ + κ′ + 1_{M′≠0}`.
pub fn delta_prime(delta: f64, kappa_prime: f64, m_prime: f64) -> f64 {
    delta + kappa_prime + if m_prime != 0.0 { 1.0 } else { 0.0 }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WeightedNorms {
    /// `sup_t ∫ |u(t,x)|^p e^{−δ′|x|} dx`.
    pub sup_t_spatial: f64,
    /// `∫∫ |σ*∇u|^{p∧2} e^{−δ′|x|} dt dx`, when the field carries `z`.
    pub grad_norm: Option<f64>,
    /// Estimated weight mass outside the grid hull times the boundary size.
    pub tail_estimate: f64,
    pub warning: Option<String>,
}

fn weight(x: &[f64], delta: f64) -> f64 {
    (-delta * crate::stats::norm(x)).exp()
}

/// Trapezoid quadrature of the two weighted functionals. Missing nodes are
/// skipped and counted in the warning.
pub fn weighted_lp_norm(field: &PdeField, delta_prime: f64, p: f64) -> Result<WeightedNorms> {
    if !(p >= 1.0) || !(delta_prime >= 0.0) {
        return Err(Error::InvalidExponents(format!("p = {p}, δ′ = {delta_prime}")));
    }
    let nodes = field.x_grid.nodes();
    let wx = field.x_grid.weights();
    let ew: Vec<f64> = nodes.iter().zip(&wx).map(|(x, w)| w * weight(x, delta_prime)).collect();
    let nt = field.t_grid.len();
    let slice_integral = |vals: &dyn Fn(usize) -> Option<f64>| -> f64 {
        (0..nodes.len()).filter_map(|j| vals(j).map(|v| ew[j] * v)).sum()
    };
    let mut sup: f64 = 0.0;
    for ti in 0..nt {
        let s = slice_integral(&|j| {
            (!field.is_missing(ti, j)).then(|| crate::stats::norm(field.u_at(ti, j)).powf(p))
        });
        sup = sup.max(s);
    }
    let q = p.min(2.0);
    let grad_norm = field.z.as_ref().map(|_| {
        let per_slice: Vec<f64> = (0..nt)
            .map(|ti| {
                slice_integral(&|j| {
                    if field.is_missing(ti, j) {
                        None
                    } else {
                        field.z_at(ti, j).map(|z| crate::stats::norm(z).powf(q))
                    }
                })
            })
            .collect();
        if nt < 2 {
            0.0
        } else {
            trapezoid_weights(&field.t_grid).iter().zip(&per_slice).map(|(w, v)| w * v).sum()
        }
    });
    // Tail: per axis, the weight mass beyond each edge times the largest
    // boundary value, assuming the field stays at that level outside.
    let mut tail: f64 = 0.0;
    let axes = field.x_grid.axes();
    if delta_prime > 0.0 {
        let boundary_max = (0..nt)
            .flat_map(|ti| (0..nodes.len()).map(move |j| (ti, j)))
            .filter(|&(ti, j)| !field.is_missing(ti, j) && on_boundary(&field.x_grid, j))
            .map(|(ti, j)| crate::stats::norm(field.u_at(ti, j)).powf(p))
            .fold(0.0, f64::max);
        for axis in axes {
            if axis.len() < 2 {
                continue;
            }
            let lo = axis[0].min(0.0).abs();
            let hi = axis[axis.len() - 1].max(0.0);
            let mass = ((-delta_prime * lo).exp() + (-delta_prime * hi).exp()) / delta_prime;
            let cross: f64 = axes
                .iter()
                .filter(|a| !std::ptr::eq(*a, axis))
                .map(|a| if a.len() < 2 { 1.0 } else { 2.0 / delta_prime })
                .product();
            tail += boundary_max * mass * cross;
        }
    } else if axes.iter().any(|a| a.len() > 1) {
        tail = f64::INFINITY;
    }
    let mut warning = None;
    if tail > 0.01 * sup {
        warning = Some(format!(
            "grid too narrow: tail estimate {tail:.3e} exceeds 1% of the spatial norm {sup:.3e}"
        ));
    }
    let missing = field.n_missing();
    if missing > 0 {
        let m = format!("{missing} missing nodes skipped");
        warning = Some(match warning {
            Some(w) => format!("{w}; {m}"),
            None => m,
        });
    }
    Ok(WeightedNorms {
        sup_t_spatial: sup,
        grad_norm,
        tail_estimate: tail,
        warning,
    })
}

fn on_boundary(grid: &SpaceGrid, mut node: usize) -> bool {
    let mut edge = false;
    for axis in grid.axes().iter().rev() {
        let n = axis.len();
        let i = node % n;
        node /= n;
        if n > 1 && (i == 0 || i == n - 1) {
            edge = true;
        }
    }
    edge
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FieldComparison {
    /// `(∫ |u − u_ref|^p e^{−δ′|x|} dx)^{1/p}` on the compared slice.
    pub weighted_error: f64,
    pub reference_norm: f64,
    /// `weighted_error / reference_norm` (absolute when the norm is 0).
    pub relative: f64,
    pub max_abs: f64,
    pub n_compared: usize,
    pub n_missing: usize,
}

/// Compare `field` with `reference` at time `t` on the nodes of `field`,
/// interpolating the reference multilinearly.
pub fn compare_fields(field: &PdeField, reference: &PdeField, t: f64, delta_prime: f64, p: f64) -> Result<FieldComparison> {
    if field.dim_d != reference.dim_d || field.x_grid.dim() != reference.x_grid.dim() {
        return Err(Error::DimensionMismatch("fields have different dimensions".into()));
    }
    let (ti, tr) = match (field.slice_at(t), reference.slice_at(t)) {
        (Some(a), Some(b)) => (a, b),
        _ => return Err(Error::DimensionMismatch(format!("time {t} is not on both grids"))),
    };
    let nodes = field.x_grid.nodes();
    let w = field.x_grid.weights();
    let (mut err, mut refn, mut max_abs) = (0.0, 0.0, 0.0f64);
    let (mut n_compared, mut n_missing) = (0, 0);
    for (j, x) in nodes.iter().enumerate() {
        let r = match reference.interpolate(tr, x) {
            Some(r) if !field.is_missing(ti, j) => r,
            _ => {
                n_missing += 1;
                continue;
            }
        };
        let u = field.u_at(ti, j);
        let diff: Vec<f64> = u.iter().zip(&r).map(|(a, b)| a - b).collect();
        let ew = w[j] * weight(x, delta_prime);
        let dn = crate::stats::norm(&diff);
        err += ew * dn.powf(p);
        refn += ew * crate::stats::norm(&r).powf(p);
        max_abs = max_abs.max(dn);
        n_compared += 1;
    }
    let weighted_error = err.powf(1.0 / p);
    let reference_norm = refn.powf(1.0 / p);
    Ok(FieldComparison {
        weighted_error,
        reference_norm,
        relative: if reference_norm > 0.0 { weighted_error / reference_norm } else { weighted_error },
        max_abs,
        n_compared,
        n_missing,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ZConsistencyReport {
    /// Weighted L² norms over interior nodes and all shared slices.
    pub mc_norm: f64,
    pub reference_norm: f64,
    pub difference_norm: f64,
    /// `difference_norm / reference_norm`, or the absolute difference when
    /// the reference gradient vanishes.
    pub relative: f64,
    pub n_nodes: usize,
}

/// Compare the Monte Carlo `Z` of `mc` with `σ*∇u_ref`, the gradient taken
/// by central differences on the reference grid at the nodes of `mc`.
pub fn z_consistency(mc: &PdeField, reference: &PdeField, diffusion: &DiffusionSpec, delta_prime: f64) -> Result<ZConsistencyReport> {
    let z_mc = mc
        .z
        .as_ref()
        .ok_or_else(|| Error::DimensionMismatch("Monte Carlo field carries no Z".into()))?;
    let k = mc.x_grid.dim();
    let r = diffusion.dim_r();
    let d = mc.dim_d;
    if reference.x_grid.dim() != k || reference.dim_d != d || mc.dim_z != d * r {
        return Err(Error::DimensionMismatch("Z consistency needs matching fields".into()));
    }
    let ref_axes = reference.x_grid.axes();
    let nodes = mc.x_grid.nodes();
    let wx = mc.x_grid.weights();
    let (mut a2, mut b2, mut c2) = (0.0, 0.0, 0.0);
    let mut count = 0;
    for (ti, &t) in mc.t_grid.iter().enumerate() {
        let Some(tr) = reference.slice_at(t) else { continue };
        'node: for (j, x) in nodes.iter().enumerate() {
            if mc.is_missing(ti, j) || on_boundary(&mc.x_grid, j) && mc.x_grid.len() > 1 {
                continue;
            }
            // ∂u/∂x_a by a central difference of width one reference cell.
            let mut grad = vec![0.0; d * k];
            for a in 0..k {
                let axis = &ref_axes[a];
                if axis.len() < 3 {
                    continue 'node;
                }
                let hstep = (axis[axis.len() - 1] - axis[0]) / (axis.len() - 1) as f64;
                let mut xp = x.clone();
                let mut xm = x.clone();
                xp[a] += hstep;
                xm[a] -= hstep;
                let (Some(up), Some(um)) = (reference.interpolate(tr, &xp), reference.interpolate(tr, &xm)) else {
                    continue 'node;
                };
                for c in 0..d {
                    grad[c * k + a] = (up[c] - um[c]) / (2.0 * hstep);
                }
            }
            let sigma = diffusion.diffusion(x);
            let ew = wx[j] * weight(x, delta_prime);
            let zm = &z_mc[(ti * mc.n_nodes() + j) * d * r..(ti * mc.n_nodes() + j + 1) * d * r];
            for c in 0..d {
                for jr in 0..r {
                    let zr: f64 = (0..k).map(|a| sigma[a * r + jr] * grad[c * k + a]).sum();
                    let zv = zm[c * r + jr];
                    a2 += ew * zv * zv;
                    b2 += ew * zr * zr;
                    c2 += ew * (zv - zr) * (zv - zr);
                }
            }
            count += 1;
        }
    }
    let (mc_norm, reference_norm, difference_norm) = (a2.sqrt(), b2.sqrt(), c2.sqrt());
    Ok(ZConsistencyReport {
        mc_norm,
        reference_norm,
        difference_norm,
        relative: if reference_norm > 0.0 { difference_norm / reference_norm } else { difference_norm },
        n_nodes: count,
    })
}

/// `u(t, x) = E g(x + σ W_{T−t})` for `b = 0`, `F = 0` and scalar `σ` in one
/// dimension, by Gauss–Legendre quadrature of the Gaussian kernel on
/// `±10` standard deviations.
pub fn heat_reference<G: Fn(f64) -> f64>(g: G, sigma: f64, tau: f64, x: f64, nodes: usize) -> f64 {
    if tau <= 0.0 || sigma == 0.0 {
        return g(x);
    }
    let s = sigma * tau.sqrt();
    let gl = GaussLegendre::new(nodes);
    let norm = 1.0 / (2.0 * std::f64::consts::PI).sqrt();
    let panels = 40;
    (0..panels)
        .map(|i| {
            let a = -10.0 + 20.0 * i as f64 / panels as f64;
            let b = a + 20.0 / panels as f64;
            gl.integrate(|xi| norm * (-0.5 * xi * xi).exp() * g(x + s * xi), a, b)
        })
        .sum()
}

/// `∂/∂x` of [`heat_reference`], differentiating the kernel.
pub fn heat_reference_gradient<G: Fn(f64) -> f64>(g: G, sigma: f64, tau: f64, x: f64, nodes: usize) -> f64 {
    if tau <= 0.0 || sigma == 0.0 {
        return f64::NAN;
    }
    let s = sigma * tau.sqrt();
    // E[g(x + sξ) ξ]/s by Gaussian integration by parts.
    heat_reference_weighted(&g, s, x, nodes) / s
}

fn heat_reference_weighted<G: Fn(f64) -> f64>(g: &G, s: f64, x: f64, nodes: usize) -> f64 {
    let gl = GaussLegendre::new(nodes);
    let norm = 1.0 / (2.0 * std::f64::consts::PI).sqrt();
    let panels = 40;
    (0..panels)
        .map(|i| {
            let a = -10.0 + 20.0 * i as f64 / panels as f64;
            let b = a + 20.0 / panels as f64;
            gl.integrate(|xi| norm * xi * (-0.5 * xi * xi).exp() * g(x + s * xi), a, b)
        })
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kappa_prime_formula() {
        assert_eq!(kappa_prime(2.0, 3.0, 1.0, 1.0).unwrap(), 24.0);
        assert_eq!(kappa_prime(2.0, 3.0, 0.0, 1.0).unwrap(), 0.0);
        assert!(kappa_prime(2.0, 2.0, 1.0, 1.0).is_err());
        assert_eq!(delta_prime(1.0, 0.0, 0.0), 1.0);
        assert_eq!(delta_prime(1.0, 24.0, 1.0), 26.0);
    }

    #[test]
    fn heat_reference_of_linear_and_quadratic() {
        let v = heat_reference(|x| x, 2f64.sqrt(), 0.5, 0.3, 16);
        assert!((v - 0.3).abs() < 1e-12);
        // E(x + sξ)² = x² + s², s² = σ²τ = 1.
        let v = heat_reference(|x| x * x, 2f64.sqrt(), 0.5, 0.3, 16);
        assert!((v - 1.09).abs() < 1e-12);
        let g = heat_reference_gradient(|x| x * x, 2f64.sqrt(), 0.5, 0.3, 16);
        assert!((g - 0.6).abs() < 1e-12);
    }

    #[test]
    fn interpolation_is_exact_on_linear_data() {
        let grid = SpaceGrid::uniform(2, -1.0, 1.0, 5).unwrap();
        let mut f = PdeField::empty(vec![0.0], grid.clone(), 1, 1, Provenance::Characteristics);
        for (j, x) in grid.nodes().iter().enumerate() {
            f.u[j] = 2.0 * x[0] - x[1] + 0.5;
        }
        let v = f.interpolate(0, &[0.3, -0.7]).unwrap();
        assert!((v[0] - (0.6 + 0.7 + 0.5)).abs() < 1e-14);
        assert!(f.interpolate(0, &[1.2, 0.0]).is_none());
    }
}
