//! Deterministic references for z-free, x-free drivers.

use crate::error::{Error, Result};
use crate::grid::TimeGrid;
use crate::ode::{integrate_dense, OdeOptions};

/// Backward ODE `Y' = −f(Y)`, `Y(T) = ξ`, returned at every grid point.
pub fn ode_reduction_solve<F>(f_y: F, xi: &[f64], grid: &TimeGrid, tol: f64) -> Result<Vec<Vec<f64>>>
where
    F: Fn(&[f64], &mut [f64]),
{
    if !(tol > 0.0) {
        return Err(Error::InvalidParameters {
            kind: "ode_reduction".into(),
            reason: "tolerance must be positive".into(),
        });
    }
    let opts = OdeOptions {
        rtol: tol,
        atol: tol * 1e-2,
        ..OdeOptions::default()
    };
    let mut times: Vec<f64> = grid.points().to_vec();
    times.reverse();
    let mut out = integrate_dense(
        |_, y, dy| {
            f_y(y, dy);
            for v in dy.iter_mut() {
                *v = -*v;
            }
        },
        &times,
        xi,
        &opts,
    )?;
    out.reverse();
    Ok(out)
}

/// `Y_t = exp(e^{−K(T−t)} log ξ)` for `f(y) = −K y log y`, `ξ > 0`.
pub fn log_drift_closed_form(k: f64, xi: f64, t: f64, t_end: f64) -> f64 {
    ((-k * (t_end - t)).exp() * xi.ln()).exp()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::E;

    fn log_drift(y: &[f64], out: &mut [f64]) {
        out[0] = if y[0] == 0.0 { 0.0 } else { -y[0] * y[0].abs().ln() };
    }

    #[test]
    fn closed_form_match() {
        let grid = TimeGrid::uniform(0.0, 1.0, 10).unwrap();
        let ys = ode_reduction_solve(log_drift, &[E], &grid, 1e-12).unwrap();
        assert!((ys[0][0] - (1.0 / E).exp()).abs() < 1e-10);
        for (t, y) in grid.points().iter().zip(&ys) {
            assert!((y[0] - log_drift_closed_form(1.0, E, *t, 1.0)).abs() < 1e-10);
        }
        assert_eq!(ys[10][0], E);
    }

    #[test]
    fn equilibrium_and_zero_drift() {
        let grid = TimeGrid::uniform(0.0, 1.0, 4).unwrap();
        let ys = ode_reduction_solve(log_drift, &[1.0], &grid, 1e-12).unwrap();
        assert!(ys.iter().all(|y| y[0] == 1.0));
        let ys = ode_reduction_solve(|_: &[f64], o: &mut [f64]| o.fill(0.0), &[2.0, -1.0], &grid, 1e-12).unwrap();
        assert!(ys.iter().all(|y| y == &vec![2.0, -1.0]));
    }

    #[test]
    fn blow_up_is_reported() {
        let grid = TimeGrid::uniform(0.0, 2.0, 4).unwrap();
        let res = ode_reduction_solve(|y: &[f64], o: &mut [f64]| o[0] = y[0] * y[0], &[1.0], &grid, 1e-10);
        assert!(matches!(res, Err(Error::Divergence { .. })));
    }
}
