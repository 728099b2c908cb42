use crate::error::{Error, Result};
use crate::grid::SpaceGrid;
use crate::ode::{integrate, OdeOptions};

use super::{PdeField, PdeProblem, Provenance};

/// `u(t, x)` along the characteristic through `(t, x)`: the flow `Ẋ = b(X)`
/// is integrated to `T`, then `(X, Y)` backward with `Y′ = −F(s, X, Y, 0)`
/// from `Y_T = g(X_T)`. The diffusion is ignored.
pub(crate) fn characteristic_value(problem: &PdeProblem, t: f64, x: &[f64], opts: &OdeOptions) -> Result<Vec<f64>> {
    let horizon = problem.horizon;
    if t >= horizon {
        return Ok(problem.g(x));
    }
    let k = problem.dim_k();
    let d = problem.dim_d();
    let diff = &problem.diffusion;
    let x_end = integrate(|_, s, out| diff.drift_into(s, out), t, x, horizon, opts)?;
    let mut state = x_end.clone();
    state.extend(problem.g(&x_end));
    let zero = vec![0.0; problem.generator.dim_z()];
    let back = integrate(
        |s, v, out| {
            let (xs, ys) = v.split_at(k);
            let (ox, oy) = out.split_at_mut(k);
            diff.drift_into(xs, ox);
            problem.generator.eval_into(s, xs, ys, &zero, oy);
            for o in oy.iter_mut() {
                *o = -*o;
            }
        },
        horizon,
        &state,
        t,
        opts,
    )?;
    let y = back[k..k + d].to_vec();
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::Divergence { t, magnitude: f64::INFINITY });
    }
    Ok(y)
}

/// Deterministic field for `σ ≡ 0` by the method of characteristics. Nodes
/// whose flow or backward ODE blows up are marked missing. `σ*∇u ≡ 0` is
/// stored as `z`.
pub fn characteristics_oracle(problem: &PdeProblem, x_grid: &SpaceGrid, t_grid: &[f64], opts: &OdeOptions) -> Result<PdeField> {
    let k = problem.dim_k();
    if x_grid.dim() != k {
        return Err(Error::DimensionMismatch(format!("grid dimension {} vs k = {k}", x_grid.dim())));
    }
    check_times(t_grid, problem.horizon)?;
    let nodes = x_grid.nodes();
    let r = problem.diffusion.dim_r();
    if !problem.diffusion.is_zero_diffusion() && nodes.iter().any(|x| problem.diffusion.diffusion(x).iter().any(|s| *s != 0.0)) {
        return Err(Error::InvalidParameters {
            kind: "characteristics".into(),
            reason: "the diffusion matrix must vanish on the grid".into(),
        });
    }
    let d = problem.dim_d();
    let dz = d * r;
    let mut field = PdeField::empty(t_grid.to_vec(), x_grid.clone(), d, dz, Provenance::Characteristics);
    field.z = Some(vec![0.0; t_grid.len() * nodes.len() * dz]);
    for (ti, &t) in t_grid.iter().enumerate() {
        for (j, x) in nodes.iter().enumerate() {
            match characteristic_value(problem, t, x, opts) {
                Ok(y) => {
                    let b = (ti * nodes.len() + j) * d;
                    field.u[b..b + d].copy_from_slice(&y);
                }
                Err(Error::Divergence { .. }) => {
                    field.set_missing(ti, j);
                    field.warnings.push(format!("characteristic blow-up at t = {t}, x = {x:?}"));
                }
                Err(e) => return Err(e),
            }
        }
    }
    Ok(field)
}

pub(crate) fn check_times(t_grid: &[f64], horizon: f64) -> Result<()> {
    if t_grid.is_empty() || t_grid.iter().any(|t| !t.is_finite() || *t < 0.0 || *t > horizon) {
        return Err(Error::InvalidResolution(format!("times must lie in [0, {horizon}]")));
    }
    if t_grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidResolution("times must be strictly increasing".into()));
    }
    Ok(())
}
