use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::SpaceGrid;
use crate::ode::OdeOptions;

use super::characteristics::characteristic_value;
use super::{PdeField, PdeProblem, Provenance};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FdMesh {
    pub nx: usize,
    pub nt: usize,
    pub x_min: f64,
    pub x_max: f64,
}

const NEWTON_ITERS: usize = 100;
const NEWTON_TOL: f64 = 1e-12;

/// Backward Euler in reverse time with central differences, Newton on the
/// reaction term and a Thomas solve per iteration. Dirichlet data at the two
/// edges come from the characteristics of `b`. The `z` argument of `F` is
/// lagged inside the Newton loop.
pub fn fd_reference_1d(problem: &PdeProblem, mesh: &FdMesh) -> Result<PdeField> {
    if problem.dim_k() != 1 || problem.dim_d() != 1 {
        return Err(Error::DimensionMismatch("finite differences need k = d = 1".into()));
    }
    if mesh.nx < 3 || mesh.nt == 0 || !(mesh.x_max > mesh.x_min) {
        return Err(Error::InvalidResolution(format!("bad mesh {mesh:?}")));
    }
    let horizon = problem.horizon;
    let x_grid = SpaceGrid::uniform(1, mesh.x_min, mesh.x_max, mesh.nx)?;
    let xs = x_grid.axes()[0].clone();
    let t_grid: Vec<f64> = (0..=mesh.nt).map(|i| horizon * i as f64 / mesh.nt as f64).collect();
    let r = problem.diffusion.dim_r();
    let nx = mesh.nx;
    let dx = xs[1] - xs[0];
    let dt = horizon / mesh.nt as f64;

    let sig: Vec<Vec<f64>> = xs.iter().map(|x| problem.diffusion.diffusion(&[*x])).collect();
    let a: Vec<f64> = sig.iter().map(|s| s.iter().map(|v| v * v).sum()).collect();
    let b: Vec<f64> = xs.iter().map(|x| problem.diffusion.drift(&[*x])[0]).collect();
    let mut field = PdeField::empty(t_grid.clone(), x_grid, 1, r, Provenance::FiniteDifference);

    let peclet = (1..nx - 1)
        .map(|i| if b[i] == 0.0 { 0.0 } else { b[i].abs() * dx / a[i] })
        .fold(0.0, f64::max);
    if peclet > 2.0 {
        field.warnings.push(format!("mesh Péclet number {peclet:.3e} exceeds 2"));
    }

    let opts = OdeOptions::default();
    let mut u: Vec<f64> = xs.iter().map(|x| problem.g(&[*x])[0]).collect();
    field.u[mesh.nt * nx..].copy_from_slice(&u);
    let g = &problem.generator;
    let mut fy = vec![0.0; 1];
    let mut zbuf = vec![0.0; r];
    let eval = |t: f64, i: usize, y: f64, ux: f64, zbuf: &mut [f64], out: &mut [f64]| {
        for (zj, s) in zbuf.iter_mut().zip(&sig[i]) {
            *zj = s * ux;
        }
        g.eval_into(t, &[xs[i]], &[y], zbuf, out);
        out[0]
    };
    let (mut lo, mut di, mut up, mut rhs) = (vec![0.0; nx], vec![0.0; nx], vec![0.0; nx], vec![0.0; nx]);
    for n in (0..mesh.nt).rev() {
        let t = t_grid[n];
        let prev = u.clone();
        u[0] = characteristic_value(problem, t, &[xs[0]], &opts)?[0];
        u[nx - 1] = characteristic_value(problem, t, &[xs[nx - 1]], &opts)?[0];
        let mut converged = false;
        let mut worst = (0usize, f64::INFINITY);
        for _ in 0..NEWTON_ITERS {
            worst = (0, 0.0);
            let scale = 1.0 + u.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            for i in 1..nx - 1 {
                let diffu = 0.5 * a[i] / (dx * dx);
                let adv = b[i] / (2.0 * dx);
                let ux = (u[i + 1] - u[i - 1]) / (2.0 * dx);
                let lu = diffu * (u[i + 1] - 2.0 * u[i] + u[i - 1]) + adv * (u[i + 1] - u[i - 1]);
                let f = eval(t, i, u[i], ux, &mut zbuf, &mut fy);
                let h = 1e-7 * (1.0 + u[i].abs());
                let f_y = (eval(t, i, u[i] + h, ux, &mut zbuf, &mut fy) - eval(t, i, u[i] - h, ux, &mut zbuf, &mut fy)) / (2.0 * h);
                let res = u[i] - prev[i] - dt * (lu + f);
                let ra = if res.is_finite() { res.abs() } else { f64::INFINITY };
                if ra > worst.1 {
                    worst = (i, ra);
                }
                rhs[i] = -res;
                di[i] = 1.0 + dt * (2.0 * diffu - f_y);
                lo[i] = if i > 1 { -dt * (diffu - adv) } else { 0.0 };
                up[i] = if i < nx - 2 { -dt * (diffu + adv) } else { 0.0 };
            }
            if !worst.1.is_finite() {
                break;
            }
            if worst.1 <= NEWTON_TOL * scale {
                converged = true;
                break;
            }
            let delta = thomas(&lo[1..nx - 1], &di[1..nx - 1], &up[1..nx - 1], &rhs[1..nx - 1]);
            for (ui, dv) in u[1..nx - 1].iter_mut().zip(&delta) {
                *ui += dv;
            }
        }
        if !converged {
            return Err(Error::NewtonFailure {
                t,
                x: xs[worst.0],
                residual: worst.1,
            });
        }
        field.u[n * nx..(n + 1) * nx].copy_from_slice(&u);
    }
    Ok(field)
}

/// Solve a tridiagonal system; `lo[0]` and `up[last]` are ignored.
pub(crate) fn thomas(lo: &[f64], di: &[f64], up: &[f64], rhs: &[f64]) -> Vec<f64> {
    let n = di.len();
    let mut c = vec![0.0; n];
    let mut d = vec![0.0; n];
    c[0] = up[0] / di[0];
    d[0] = rhs[0] / di[0];
    for i in 1..n {
        let m = di[i] - lo[i] * c[i - 1];
        c[i] = up[i] / m;
        d[i] = (rhs[i] - lo[i] * d[i - 1]) / m;
    }
    let mut x = vec![0.0; n];
    x[n - 1] = d[n - 1];
    for i in (0..n - 1).rev() {
        x[i] = d[i] - c[i] * x[i + 1];
    }
    x
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn thomas_matches_dense_solve() {
        let lo = [0.0, -1.0, 0.5, 2.0];
        let di = [4.0, 5.0, 6.0, 7.0];
        let up = [1.0, -2.0, 1.5, 0.0];
        let rhs = [1.0, 2.0, 3.0, 4.0];
        let x = thomas(&lo, &di, &up, &rhs);
        for i in 0..4 {
            let mut s = di[i] * x[i];
            if i > 0 {
                s += lo[i] * x[i - 1];
            }
            if i < 3 {
                s += up[i] * x[i + 1];
            }
            assert!((s - rhs[i]).abs() < 1e-13);
        }
    }
}
