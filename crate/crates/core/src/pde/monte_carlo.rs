use serde::{Deserialize, Serialize};

use crate::bsde::{solve_backward, BsdeProblem, BsdeSolution, SolverConfig};
use crate::forward::PathBatch;
use crate::error::{Error, Result};
use crate::grid::{SpaceGrid, TimeGrid};
use crate::rng::derive_seed;
use crate::stats::sample_variance;

use super::characteristics::check_times;
use super::{PdeField, PdeProblem, Provenance};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McFieldOptions {
    /// Steps on the full horizon `[0, T]`; a node at time `t` gets
    /// `⌈n_steps (T − t)/T⌉` of them.
    pub n_steps: usize,
}

impl Default for McFieldOptions {
    fn default() -> Self {
        Self { n_steps: 50 }
    }
}

/// `u(t, x) := Y_t^{t,x}` from an independent backward solve per node, with
/// `Z_t^{t,x}` stored as `σ*∇u`. Each node draws its paths from a seed derived
/// from `config.seed` and the node position. Failed or clipped solves mark
/// the node missing.
pub fn mc_field(problem: &PdeProblem, x_grid: &SpaceGrid, t_grid: &[f64], config: &SolverConfig, opts: &McFieldOptions) -> Result<PdeField> {
    let k = problem.dim_k();
    if x_grid.dim() != k {
        return Err(Error::DimensionMismatch(format!("grid dimension {} vs k = {k}", x_grid.dim())));
    }
    check_times(t_grid, problem.horizon)?;
    if opts.n_steps == 0 {
        return Err(Error::InvalidResolution("n_steps must be at least 1".into()));
    }
    config.validate(k)?;
    let horizon = problem.horizon;
    let d = problem.dim_d();
    let dz = problem.generator.dim_z();
    let nodes = x_grid.nodes();
    let m = t_grid.len() * nodes.len();
    let mut field = PdeField::empty(t_grid.to_vec(), x_grid.clone(), d, dz, Provenance::MonteCarlo);
    let mut z = vec![0.0; m * dz];
    let mut u_se = vec![0.0; m * d];
    let mut z_se = vec![0.0; m * dz];
    let mut missing = Vec::new();

    for (ti, &t) in t_grid.iter().enumerate() {
        for (j, x) in nodes.iter().enumerate() {
            let idx = ti * nodes.len() + j;
            if t >= horizon {
                field.u[idx * d..(idx + 1) * d].copy_from_slice(&problem.g(x));
                continue;
            }
            let steps = ((opts.n_steps as f64 * (horizon - t) / horizon) - 1e-9).ceil().max(1.0) as usize;
            let grid = TimeGrid::uniform(t, horizon, steps)?;
            let bsde = BsdeProblem::new(problem.generator.clone(), problem.terminal.clone(), problem.diffusion.clone(), grid, x.clone())?;
            let cfg = SolverConfig {
                seed: derive_seed(config.seed, &format!("pde/mc_field/{ti}/{j}")),
                ..config.clone()
            };
            let paths = bsde.simulate(cfg.n_paths, cfg.seed)?;
            let sol = match solve_backward(&bsde, &paths, &cfg) {
                Ok(s) => s,
                Err(e @ (Error::FixedPointDivergence { .. } | Error::NumericFault { .. })) => {
                    missing.push((ti, j, e.to_string()));
                    continue;
                }
                Err(e) => return Err(e),
            };
            let clipped: usize = sol.diagnostics.iter().map(|s| s.clip_count).sum();
            if clipped > 0 {
                missing.push((ti, j, format!("{clipped} clipped values")));
                continue;
            }
            let n = sol.n_paths as f64;
            field.u[idx * d..(idx + 1) * d].copy_from_slice(&sol.y0());
            z[idx * dz..(idx + 1) * dz].copy_from_slice(&sol.z0());
            let real = realised_y0(&bsde, &paths, &sol);
            for c in 0..d {
                let col: Vec<f64> = real.iter().skip(c).step_by(d).copied().collect();
                u_se[idx * d + c] = (sample_variance(&col) / n).sqrt();
            }
            let dt0 = sol.grid.dt(0);
            let zs = sol.diagnostics[0].residual_rms / (n * dt0).sqrt();
            z_se[idx * dz..(idx + 1) * dz].fill(zs);
        }
    }
    field.z = Some(z);
    field.u_stderr = Some(u_se);
    field.z_stderr = Some(z_se);
    for (ti, j, why) in missing {
        field.set_missing(ti, j);
        if let Some(se) = field.u_stderr.as_mut() {
            se[(ti * nodes.len() + j) * d..(ti * nodes.len() + j + 1) * d].fill(f64::NAN);
        }
        field.warnings.push(format!("node t = {}, x = {:?} missing: {why}", t_grid[ti], nodes[j]));
    }
    Ok(field)
}

/// Pathwise `g(X_T) + Σ F(t_i, X_i, Y_i, Z_i) Δt_i − Σ Z_i ΔW_i`. Its path
/// mean tracks `Y_0` and its spread gives the node's standard error.
fn realised_y0(problem: &BsdeProblem, paths: &PathBatch, sol: &BsdeSolution) -> Vec<f64> {
    let (d, r) = (sol.dim_d, problem.generator.dim_r());
    let times = sol.grid.points();
    let mut out = vec![0.0; sol.n_paths * d];
    let mut f = vec![0.0; d];
    for (p, o) in out.chunks_exact_mut(d).enumerate() {
        o.copy_from_slice(sol.y(p, sol.n_steps));
        for i in 0..sol.n_steps {
            let dt = sol.grid.dt(i);
            let z = sol.z(p, i);
            problem.generator.eval_into(times[i], paths.state(p, i), sol.y(p, i), z, &mut f);
            let dw = paths.increment(p, i);
            for c in 0..d {
                let zdw: f64 = (0..r).map(|j| z[c * r + j] * dw[j]).sum();
                o[c] += f[c] * dt - zdw;
            }
        }
    }
    out
}
