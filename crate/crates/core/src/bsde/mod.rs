//! Backward least-squares Monte Carlo for `Y_t = ξ + ∫_t^T f ds − ∫_t^T Z dW`
//! on simulated forward paths, plus deterministic oracles.
//!
//! At each step the response is regressed jointly on `φ(X_i)` and
//! `φ(X_i)·ΔW_i/√Δt`: the first block gives the continuation value, the
//! second gives `Z_i`. For the implicit scheme the discrete martingale
//! residual is then the least-squares residual itself, orthogonal to the
//! basis up to the fixed-point tolerance.

mod basis;
mod oracle;

use std::fmt;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forward::{simulate_paths, DiffusionSpec, PathBatch};
use crate::generator::Generator;
use crate::grid::TimeGrid;
use crate::stats::{mean_stderr, norm};

pub use basis::{least_squares, FittedBasis, LsFit, RegressionBasis};
pub use oracle::{log_drift_closed_form, ode_reduction_solve};

pub type TerminalFn = Arc<dyn Fn(&[f64], &mut [f64]) + Send + Sync>;

/// Terminal condition: a constant or `g(X_T)`.
#[derive(Clone)]
pub enum Terminal {
    Constant(Vec<f64>),
    Function { dim_d: usize, g: TerminalFn },
}

impl fmt::Debug for Terminal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Constant(c) => f.debug_tuple("Constant").field(c).finish(),
            Self::Function { dim_d, .. } => f.debug_struct("Function").field("dim_d", dim_d).finish(),
        }
    }
}

impl Terminal {
    pub fn dim_d(&self) -> usize {
        match self {
            Self::Constant(c) => c.len(),
            Self::Function { dim_d, .. } => *dim_d,
        }
    }

    pub fn eval_into(&self, x: &[f64], out: &mut [f64]) {
        match self {
            Self::Constant(c) => out.copy_from_slice(c),
            Self::Function { g, .. } => g(x, out),
        }
    }
}

#[derive(Debug, Clone)]
pub struct BsdeProblem {
    pub generator: Generator,
    pub terminal: Terminal,
    pub diffusion: DiffusionSpec,
    pub grid: TimeGrid,
    pub x0: Vec<f64>,
}

impl BsdeProblem {
    pub fn new(generator: Generator, terminal: Terminal, diffusion: DiffusionSpec, grid: TimeGrid, x0: Vec<f64>) -> Result<Self> {
        if generator.dim_r() != diffusion.dim_r() {
            return Err(Error::DimensionMismatch(format!(
                "generator has r = {}, diffusion has r = {}",
                generator.dim_r(),
                diffusion.dim_r()
            )));
        }
        if terminal.dim_d() != generator.dim_d() {
            return Err(Error::DimensionMismatch(format!(
                "terminal has d = {}, generator has d = {}",
                terminal.dim_d(),
                generator.dim_d()
            )));
        }
        if x0.len() != diffusion.dim_k() {
            return Err(Error::DimensionMismatch(format!("x0 has length {}, diffusion has k = {}", x0.len(), diffusion.dim_k())));
        }
        Ok(Self {
            generator,
            terminal,
            diffusion,
            grid,
            x0,
        })
    }

    pub fn simulate(&self, n_paths: usize, seed: u64) -> Result<PathBatch> {
        simulate_paths(&self.diffusion, &self.grid, &self.x0, n_paths, seed)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    Explicit,
    #[default]
    Implicit,
    /// θ = ½: `f` averaged between both ends of the step.
    Trapezoidal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverConfig {
    pub n_paths: usize,
    pub seed: u64,
    pub scheme: Scheme,
    pub picard_iters: usize,
    pub picard_tol: f64,
    /// Weight of the new iterate in the damped fixed point.
    pub damping: f64,
    pub basis: RegressionBasis,
    /// `None` means `10·(1 + max|ξ|)` over the simulated paths.
    pub y_clip: Option<f64>,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            n_paths: 10_000,
            seed: 0,
            scheme: Scheme::Implicit,
            picard_iters: 500,
            picard_tol: 1e-12,
            damping: 0.5,
            basis: RegressionBasis::default(),
            y_clip: None,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self, k: usize) -> Result<()> {
        let bad = |r: &str| {
            Err(Error::InvalidParameters {
                kind: "solver".into(),
                reason: r.into(),
            })
        };
        if self.n_paths == 0 {
            return bad("n_paths must be at least 1");
        }
        if self.scheme != Scheme::Explicit && self.picard_iters == 0 {
            return bad("picard_iters must be at least 1");
        }
        if !(self.picard_tol > 0.0) || !(self.damping > 0.0 && self.damping <= 1.0) {
            return bad("picard_tol must be positive and damping in ]0, 1]");
        }
        if let Some(c) = self.y_clip {
            if !(c > 0.0) {
                return bad("y_clip must be positive");
            }
        }
        self.basis.validate(k)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepDiagnostics {
    pub t: f64,
    /// RMS of the least-squares residual of the step regression.
    pub residual_rms: f64,
    pub condition: f64,
    pub rank_deficient: bool,
    /// Response identical on all paths; regression skipped.
    pub constant_response: bool,
    pub clip_count: usize,
    pub picard_max_iters: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BsdeSolution {
    pub n_paths: usize,
    pub n_steps: usize,
    pub dim_d: usize,
    pub dim_z: usize,
    pub scheme: Scheme,
    pub grid: TimeGrid,
    /// Step-major: `y[(i·n_paths + p)·d ..]`.
    y: Vec<f64>,
    /// Step-major: `z[(i·n_paths + p)·d·r ..]`.
    z: Vec<f64>,
    /// Per step `0..n_steps`, ordered in time.
    pub diagnostics: Vec<StepDiagnostics>,
    y0_stderr: Vec<f64>,
}

impl BsdeSolution {
    /// Assemble a solution from step-major `Y` (`n_steps+1` blocks) and `Z`
    /// (`n_steps` blocks) arrays.
    pub fn from_parts(grid: TimeGrid, n_paths: usize, dim_d: usize, dim_z: usize, y: Vec<f64>, z: Vec<f64>) -> Result<Self> {
        let n_steps = grid.n_steps();
        if y.len() != (n_steps + 1) * n_paths * dim_d || z.len() != n_steps * n_paths * dim_z {
            return Err(Error::DimensionMismatch("Y/Z array lengths do not match the grid".into()));
        }
        Ok(Self {
            n_paths,
            n_steps,
            dim_d,
            dim_z,
            scheme: Scheme::Implicit,
            diagnostics: Vec::new(),
            y0_stderr: vec![0.0; dim_d],
            grid,
            y,
            z,
        })
    }

    pub fn y(&self, path: usize, step: usize) -> &[f64] {
        let b = (step * self.n_paths + path) * self.dim_d;
        &self.y[b..b + self.dim_d]
    }

    pub fn z(&self, path: usize, step: usize) -> &[f64] {
        let b = (step * self.n_paths + path) * self.dim_z;
        &self.z[b..b + self.dim_z]
    }

    pub fn y_step(&self, step: usize) -> &[f64] {
        let n = self.n_paths * self.dim_d;
        &self.y[step * n..(step + 1) * n]
    }

    pub fn z_step(&self, step: usize) -> &[f64] {
        let n = self.n_paths * self.dim_z;
        &self.z[step * n..(step + 1) * n]
    }

    /// Path average of `Y_0`.
    pub fn y0(&self) -> Vec<f64> {
        (0..self.dim_d)
            .map(|c| crate::stats::stable_mean((0..self.n_paths).map(|p| self.y(p, 0)[c])))
            .collect()
    }

    /// Standard error of `Y_0` from the step-0 regression residuals.
    pub fn y0_stderr(&self) -> &[f64] {
        &self.y0_stderr
    }

    /// Path average of `Z_0`.
    pub fn z0(&self) -> Vec<f64> {
        (0..self.dim_z)
            .map(|c| crate::stats::stable_mean((0..self.n_paths).map(|p| self.z(p, 0)[c])))
            .collect()
    }

    pub fn mean_abs_y(&self, step: usize) -> f64 {
        crate::stats::stable_mean(self.y_step(step).chunks(self.dim_d).map(norm))
    }

    pub fn mean_abs_z(&self, step: usize) -> f64 {
        if step >= self.n_steps || self.dim_z == 0 {
            return 0.0;
        }
        crate::stats::stable_mean(self.z_step(step).chunks(self.dim_z).map(norm))
    }

    /// Test hook: overwrite one `Y` entry.
    pub fn set_y(&mut self, path: usize, step: usize, value: &[f64]) {
        let b = (step * self.n_paths + path) * self.dim_d;
        self.y[b..b + self.dim_d].copy_from_slice(value);
    }
}

struct StepFit {
    cont: Vec<f64>,
    z: Vec<f64>,
    residual_rms: f64,
    stderr: Vec<f64>,
    condition: f64,
    rank_deficient: bool,
    constant: bool,
}

/// Build the joint design `[φ(X), φ(X)·ΔW_1/√Δt, …]`.
fn joint_design(basis: &FittedBasis, paths: &PathBatch, step: usize, dt: f64) -> (Vec<f64>, usize) {
    let l = basis.len();
    let r = paths.dim_r;
    let cols = l * (1 + r);
    let n = paths.n_paths;
    let sq = dt.sqrt();
    let mut design = vec![0.0; n * cols];
    design.par_chunks_mut(cols).enumerate().for_each(|(p, row)| {
        let (phi, rest) = row.split_at_mut(l);
        basis.eval_into(paths.state(p, step), phi);
        let dw = paths.increment(p, step);
        for j in 0..r {
            let s = dw[j] / sq;
            for a in 0..l {
                rest[j * l + a] = phi[a] * s;
            }
        }
    });
    (design, cols)
}

/// Regress `resp` (`[n × d]`) at `step`; returns continuation values and `Z`.
fn regress_step(spec: &RegressionBasis, paths: &PathBatch, step: usize, resp: &[f64], d: usize) -> StepFit {
    let n = paths.n_paths;
    let r = paths.dim_r;
    let dt = paths.grid.dt(step);
    let first = &resp[..d];
    if resp.chunks_exact(d).all(|row| row == first) {
        let mut cont = vec![0.0; n * d];
        for row in cont.chunks_exact_mut(d) {
            row.copy_from_slice(first);
        }
        return StepFit {
            cont,
            z: vec![0.0; n * d * r],
            residual_rms: 0.0,
            stderr: vec![0.0; d],
            condition: 1.0,
            rank_deficient: false,
            constant: true,
        };
    }
    let k = paths.dim_k;
    let xs: Vec<f64> = (0..n).flat_map(|p| paths.state(p, step).iter().copied()).collect();
    let basis = FittedBasis::fit(spec, &xs, n, k);
    let l = basis.len();
    let (design, cols) = joint_design(&basis, paths, step, dt);
    let fit = least_squares(&design, n, cols, resp, d);
    let mut cont = vec![0.0; n * d];
    let mut z = vec![0.0; n * d * r];
    if fit.rank_deficient {
        // Per-cell means of the response and of response·ΔW/Δt.
        let cells = basis.n_cells();
        let mut sums = vec![0.0; cells * d * (1 + r)];
        let mut counts = vec![0usize; cells];
        for p in 0..n {
            let c = basis.cell(paths.state(p, step));
            counts[c] += 1;
            let dw = paths.increment(p, step);
            let base = c * d * (1 + r);
            for a in 0..d {
                sums[base + a] += resp[p * d + a];
                for j in 0..r {
                    sums[base + d + a * r + j] += resp[p * d + a] * dw[j] / dt;
                }
            }
        }
        for p in 0..n {
            let c = basis.cell(paths.state(p, step));
            let base = c * d * (1 + r);
            let cnt = counts[c] as f64;
            for a in 0..d {
                cont[p * d + a] = sums[base + a] / cnt;
                for j in 0..r {
                    z[p * d * r + a * r + j] = sums[base + d + a * r + j] / cnt;
                }
            }
        }
    } else {
        let sq = dt.sqrt();
        for p in 0..n {
            let row = &design[p * cols..(p + 1) * cols];
            for a in 0..d {
                cont[p * d + a] = (0..l).map(|i| row[i] * fit.coef[i * d + a]).sum();
                for j in 0..r {
                    let off = (1 + j) * l;
                    // row[off..] carries the ΔW factor; use φ alone here.
                    let v: f64 = (0..l).map(|i| row[i] * fit.coef[(off + i) * d + a]).sum();
                    z[p * d * r + a * r + j] = v / sq;
                }
            }
        }
    }
    // Residual of the joint fit: resp − cont − Z·ΔW.
    let mut sq_sum = vec![0.0; d];
    for p in 0..n {
        let dw = paths.increment(p, step);
        for a in 0..d {
            let zdw: f64 = (0..r).map(|j| z[p * d * r + a * r + j] * dw[j]).sum();
            let e = resp[p * d + a] - cont[p * d + a] - zdw;
            sq_sum[a] += e * e;
        }
    }
    let residual_rms = (sq_sum.iter().sum::<f64>() / (n * d) as f64).sqrt();
    let stderr = sq_sum
        .iter()
        .map(|s| if n > 1 { (s / ((n - 1) as f64 * n as f64)).sqrt() } else { 0.0 })
        .collect();
    StepFit {
        cont,
        z,
        residual_rms,
        stderr,
        condition: fit.condition,
        rank_deficient: fit.rank_deficient,
        constant: false,
    }
}

/// Solve `y = c + coef·f(y)` by damped fixed-point iteration starting at `c`.
#[allow(clippy::too_many_arguments)]
fn fixed_point(
    g: &Generator,
    t: f64,
    x: &[f64],
    c: &[f64],
    z: &[f64],
    coef: f64,
    cfg: &SolverConfig,
    path: usize,
    step: usize,
) -> Result<(Vec<f64>, usize)> {
    let d = c.len();
    let mut y = c.to_vec();
    let mut fv = vec![0.0; d];
    let mut residual = f64::INFINITY;
    for it in 0..=cfg.picard_iters {
        g.eval_into(t, x, &y, z, &mut fv);
        let mut res2 = 0.0;
        for a in 0..d {
            let target = c[a] + coef * fv[a];
            res2 += (target - y[a]) * (target - y[a]);
        }
        residual = res2.sqrt();
        if !residual.is_finite() {
            break;
        }
        if residual <= cfg.picard_tol * (1.0 + norm(&y)) {
            return Ok((y, it));
        }
        if it == cfg.picard_iters {
            break;
        }
        for a in 0..d {
            let target = c[a] + coef * fv[a];
            y[a] = (1.0 - cfg.damping) * y[a] + cfg.damping * target;
        }
    }
    Err(Error::FixedPointDivergence { path, step, residual })
}

fn clip(y: &mut [f64], bound: f64) -> bool {
    let n = norm(y);
    if n > bound {
        for v in y.iter_mut() {
            *v *= bound / n;
        }
        true
    } else {
        false
    }
}

/// Backward induction over the grid of `paths`.
pub fn solve_backward(problem: &BsdeProblem, paths: &PathBatch, config: &SolverConfig) -> Result<BsdeSolution> {
    config.validate(paths.dim_k)?;
    if paths.dim_k != problem.diffusion.dim_k() || paths.dim_r != problem.diffusion.dim_r() {
        return Err(Error::DimensionMismatch("paths do not match the problem diffusion".into()));
    }
    if paths.grid != problem.grid {
        return Err(Error::DimensionMismatch("paths were simulated on a different grid".into()));
    }
    let g = &problem.generator;
    let d = g.dim_d();
    let r = g.dim_r();
    let dz = d * r;
    let n = paths.n_paths;
    let n_steps = paths.n_steps();
    let times = paths.grid.points();

    let mut y = vec![0.0; (n_steps + 1) * n * d];
    let mut z = vec![0.0; n_steps * n * dz];
    {
        let last = &mut y[n_steps * n * d..];
        last.par_chunks_mut(d)
            .enumerate()
            .for_each(|(p, out)| problem.terminal.eval_into(paths.state(p, n_steps), out));
        if let Some(p) = last.chunks(d).position(|v| v.iter().any(|x| !x.is_finite())) {
            return Err(Error::NumericFault {
                path: p,
                step: n_steps,
                what: "non-finite terminal value".into(),
            });
        }
    }
    let bound = config
        .y_clip
        .unwrap_or_else(|| 10.0 * (1.0 + y[n_steps * n * d..].chunks(d).map(norm).fold(0.0, f64::max)));

    let mut diagnostics = Vec::with_capacity(n_steps);
    let mut y0_stderr = vec![0.0; d];
    for i in (0..n_steps).rev() {
        let dt = paths.grid.dt(i);
        let t = times[i];
        let (head, tail) = y.split_at_mut((i + 1) * n * d);
        let next = &tail[..n * d];
        let resp: Vec<f64> = match config.scheme {
            Scheme::Trapezoidal => {
                let z_next: Option<&[f64]> = (i + 1 < n_steps).then(|| &z[(i + 1) * n * dz..(i + 2) * n * dz]);
                let zero = vec![0.0; dz];
                let mut out = vec![0.0; n * d];
                out.par_chunks_mut(d).enumerate().for_each(|(p, o)| {
                    let yn = &next[p * d..(p + 1) * d];
                    let zn = z_next.map_or(&zero[..], |zz| &zz[p * dz..(p + 1) * dz]);
                    g.eval_into(times[i + 1], paths.state(p, i + 1), yn, zn, o);
                    for (v, yv) in o.iter_mut().zip(yn) {
                        *v = yv + 0.5 * dt * *v;
                    }
                });
                out
            }
            _ => next.to_vec(),
        };
        let fit = regress_step(&config.basis, paths, i, &resp, d);
        if i == 0 {
            y0_stderr = fit.stderr.clone();
        }
        z[i * n * dz..(i + 1) * n * dz].copy_from_slice(&fit.z);
        let cur = &mut head[i * n * d..];
        let zi = &fit.z;
        let outcome: Vec<Result<(bool, usize)>> = cur
            .par_chunks_mut(d)
            .enumerate()
            .map(|(p, out)| {
                let x = paths.state(p, i);
                let c = &fit.cont[p * d..(p + 1) * d];
                let zp = &zi[p * dz..(p + 1) * dz];
                let iters = match config.scheme {
                    Scheme::Explicit => {
                        g.eval_into(t, x, c, zp, out);
                        for (o, cv) in out.iter_mut().zip(c) {
                            *o = cv + dt * *o;
                        }
                        0
                    }
                    Scheme::Implicit | Scheme::Trapezoidal => {
                        let coef = if config.scheme == Scheme::Implicit { dt } else { 0.5 * dt };
                        let (v, it) = fixed_point(g, t, x, c, zp, coef, config, p, i)?;
                        out.copy_from_slice(&v);
                        it
                    }
                };
                if out.iter().any(|v| !v.is_finite()) {
                    return Err(Error::NumericFault {
                        path: p,
                        step: i,
                        what: "non-finite Y".into(),
                    });
                }
                Ok((clip(out, bound), iters))
            })
            .collect();
        let mut clip_count = 0;
        let mut picard_max = 0;
        for o in outcome {
            let (c, it) = o?;
            clip_count += c as usize;
            picard_max = picard_max.max(it);
        }
        diagnostics.push(StepDiagnostics {
            t,
            residual_rms: fit.residual_rms,
            condition: fit.condition,
            rank_deficient: fit.rank_deficient,
            constant_response: fit.constant,
            clip_count,
            picard_max_iters: picard_max,
        });
    }
    diagnostics.reverse();
    Ok(BsdeSolution {
        n_paths: n,
        n_steps,
        dim_d: d,
        dim_z: dz,
        scheme: config.scheme,
        grid: paths.grid.clone(),
        y,
        z,
        diagnostics,
        y0_stderr,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResidualStats {
    pub t: f64,
    /// Path mean of the residual, averaged over components.
    pub mean: f64,
    /// RMS of the residual's projection on the step basis.
    pub projected_norm: f64,
    pub max_abs: f64,
}

/// Discrete dynamic-programming residual
/// `Y_i − Y_{i+1} − f(t_i, X_i, Y_i, Z_i)Δt + Z_iΔW_i` per step (with the
/// two-point average of `f` for the trapezoidal scheme).
pub fn martingale_residual(solution: &BsdeSolution, problem: &BsdeProblem, paths: &PathBatch, basis: &RegressionBasis) -> Vec<ResidualStats> {
    let g = &problem.generator;
    let (n, d, dz, r) = (solution.n_paths, solution.dim_d, solution.dim_z, paths.dim_r);
    let times = paths.grid.points();
    let zero = vec![0.0; dz];
    (0..solution.n_steps)
        .map(|i| {
            let dt = paths.grid.dt(i);
            let mut e = vec![0.0; n * d];
            e.par_chunks_mut(d).enumerate().for_each(|(p, out)| {
                let (yi, yn, zi) = (solution.y(p, i), solution.y(p, i + 1), solution.z(p, i));
                let dw = paths.increment(p, i);
                g.eval_into(times[i], paths.state(p, i), yi, zi, out);
                let mut fnext = vec![0.0; d];
                if solution.scheme == Scheme::Trapezoidal {
                    let zn = if i + 1 < solution.n_steps { solution.z(p, i + 1) } else { &zero[..] };
                    g.eval_into(times[i + 1], paths.state(p, i + 1), yn, zn, &mut fnext);
                }
                for a in 0..d {
                    let drift = match solution.scheme {
                        Scheme::Trapezoidal => 0.5 * dt * (out[a] + fnext[a]),
                        _ => dt * out[a],
                    };
                    let zdw: f64 = (0..r).map(|j| zi[a * r + j] * dw[j]).sum();
                    out[a] = yi[a] - yn[a] - drift + zdw;
                }
            });
            let mean = crate::stats::stable_mean(e.iter().copied());
            let max_abs = e.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            let projected_norm = if max_abs == 0.0 {
                0.0
            } else {
                let xs: Vec<f64> = (0..n).flat_map(|p| paths.state(p, i).iter().copied()).collect();
                let fb = FittedBasis::fit(basis, &xs, n, paths.dim_k);
                let (design, cols) = joint_design(&fb, paths, i, dt);
                let fit = least_squares(&design, n, cols, &e, d);
                let mut s = 0.0;
                for p in 0..n {
                    for a in 0..d {
                        let v: f64 = (0..cols).map(|c| design[p * cols + c] * fit.coef[c * d + a]).sum();
                        s += v * v;
                    }
                }
                (s / (n * d) as f64).sqrt()
            };
            ResidualStats {
                t: times[i],
                mean,
                projected_norm,
                max_abs,
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BaselineRow {
    pub n_steps: usize,
    pub dt: f64,
    pub explicit_y0: f64,
    pub implicit_y0: f64,
    pub difference: f64,
    /// Combined regression standard error of the two estimates.
    pub stderr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BaselineReport {
    pub rows: Vec<BaselineRow>,
    /// Largest sampled difference quotient of the generator in `(y, z)`.
    pub lipschitz_estimate: f64,
    /// Empirical order of `|explicit − implicit|` in Δt (log-log slope).
    pub order: f64,
}

/// Compare explicit and implicit schemes on the same paths for each step count.
pub fn lipschitz_baseline_compare(problem: &BsdeProblem, config: &SolverConfig, step_counts: &[usize]) -> Result<BaselineReport> {
    let lipschitz_estimate = sampled_lipschitz(&problem.generator, problem.diffusion.dim_k(), config.seed);
    let mut rows = Vec::new();
    for &ns in step_counts {
        let grid = TimeGrid::uniform(problem.grid.t0(), problem.grid.t_end(), ns)?;
        let mut prob = problem.clone();
        prob.grid = grid;
        let paths = prob.simulate(config.n_paths, config.seed)?;
        let mut ce = config.clone();
        ce.scheme = Scheme::Explicit;
        let mut ci = config.clone();
        ci.scheme = Scheme::Implicit;
        let se = solve_backward(&prob, &paths, &ce)?;
        let si = solve_backward(&prob, &paths, &ci)?;
        let (e, i) = (se.y0()[0], si.y0()[0]);
        rows.push(BaselineRow {
            n_steps: ns,
            dt: prob.grid.dt(0),
            explicit_y0: e,
            implicit_y0: i,
            difference: (e - i).abs(),
            stderr: se.y0_stderr()[0].hypot(si.y0_stderr()[0]),
        });
    }
    let pts: Vec<(f64, f64)> = rows
        .iter()
        .filter(|r| r.difference > 0.0)
        .map(|r| (r.dt.ln(), r.difference.ln()))
        .collect();
    let order = if pts.len() >= 2 {
        let (mx, my) = (
            pts.iter().map(|p| p.0).sum::<f64>() / pts.len() as f64,
            pts.iter().map(|p| p.1).sum::<f64>() / pts.len() as f64,
        );
        let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
        sxy / sxx
    } else {
        f64::NAN
    };
    Ok(BaselineReport {
        rows,
        lipschitz_estimate,
        order,
    })
}

/// Largest difference quotient over random pairs in `[−5, 5]` boxes.
pub fn sampled_lipschitz(g: &Generator, k: usize, seed: u64) -> f64 {
    use rand::Rng;
    let mut rng = crate::rng::path_stream(crate::rng::derive_seed(seed, "lipschitz"), 0);
    let (d, dz) = (g.dim_d(), g.dim_z());
    let mut best = 0.0f64;
    for _ in 0..2000 {
        let mut u = |s: f64| s * (2.0 * rng.random::<f64>() - 1.0);
        let t = u(0.5) + 0.5;
        let x: Vec<f64> = (0..k).map(|_| u(2.0)).collect();
        let y: Vec<f64> = (0..d).map(|_| u(5.0)).collect();
        let z: Vec<f64> = (0..dz).map(|_| u(5.0)).collect();
        let h = 10f64.powf(u(1.0) * 3.0 - 3.0);
        let y2: Vec<f64> = y.iter().map(|v| v + h * u(1.0)).collect();
        let z2: Vec<f64> = z.iter().map(|v| v + h * u(1.0)).collect();
        let a = g.eval(t, &x, &y, &z);
        let b = g.eval(t, &x, &y2, &z2);
        let num = a.iter().zip(&b).map(|(p, q)| (p - q) * (p - q)).sum::<f64>().sqrt();
        let den = y.iter().chain(&z).zip(y2.iter().chain(&z2)).map(|(p, q)| (p - q) * (p - q)).sum::<f64>().sqrt();
        if den > 0.0 {
            best = best.max(num / den);
        }
    }
    best
}

/// `(mean, stderr)` of a scalar functional of `Y_0` over paths.
pub fn y0_summary(solution: &BsdeSolution) -> (f64, f64) {
    let vals: Vec<f64> = (0..solution.n_paths).map(|p| solution.y(p, 0)[0]).collect();
    let (m, _) = mean_stderr(&vals);
    (m, solution.y0_stderr()[0])
}
