//! Adaptive Dormand–Prince 5(4) integrator used by the deterministic oracles.

use crate::error::{Error, Result};

/// Tolerances and guards for [`integrate`].
#[derive(Debug, Clone, Copy)]
pub struct OdeOptions {
    pub rtol: f64,
    pub atol: f64,
    pub max_steps: usize,
    /// States whose norm exceeds this are reported as divergent.
    pub blowup: f64,
}

impl Default for OdeOptions {
    fn default() -> Self {
        Self {
            rtol: 1e-12,
            atol: 1e-14,
            max_steps: 1_000_000,
            blowup: 1e10,
        }
    }
}

const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const B5: [f64; 7] = [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0, 0.0];
const B4: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

/// Integrate `y' = rhs(t, y)` from `t0` to `t1` (either direction).
pub fn integrate<F>(rhs: F, t0: f64, y0: &[f64], t1: f64, opts: &OdeOptions) -> Result<Vec<f64>>
where
    F: Fn(f64, &[f64], &mut [f64]),
{
    let n = y0.len();
    let mut y = y0.to_vec();
    if t1 == t0 {
        return Ok(y);
    }
    let dir = (t1 - t0).signum();
    let span = (t1 - t0).abs();
    let mut t = t0;
    let mut h = dir * (span * 1e-3).max(1e-12).min(span);
    let mut k = vec![vec![0.0; n]; 7];
    let mut stage = vec![0.0; n];
    let mut y5 = vec![0.0; n];
    for _ in 0..opts.max_steps {
        if (t1 - t) * dir <= 0.0 {
            return Ok(y);
        }
        if (t + h - t1) * dir > 0.0 {
            h = t1 - t;
        }
        rhs(t, &y, &mut k[0]);
        for s in 1..7 {
            for i in 0..n {
                let mut acc = y[i];
                for j in 0..s {
                    acc += h * A[s][j] * k[j][i];
                }
                stage[i] = acc;
            }
            let (before, after) = k.split_at_mut(s);
            let _ = before;
            rhs(t + C[s] * h, &stage, &mut after[0]);
        }
        let mut err = 0.0f64;
        for i in 0..n {
            let mut s5 = y[i];
            let mut s4 = y[i];
            for s in 0..7 {
                s5 += h * B5[s] * k[s][i];
                s4 += h * B4[s] * k[s][i];
            }
            y5[i] = s5;
            let scale = opts.atol + opts.rtol * y[i].abs().max(s5.abs());
            err = err.max(((s5 - s4) / scale).abs());
        }
        if !err.is_finite() {
            h *= 0.25;
            if h.abs() < 1e-300 {
                return Err(Error::Divergence { t, magnitude: f64::INFINITY });
            }
            continue;
        }
        if err <= 1.0 {
            t = if (t + h - t1) * dir >= 0.0 { t1 } else { t + h };
            y.copy_from_slice(&y5);
            let mag = y.iter().map(|v| v * v).sum::<f64>().sqrt();
            if !mag.is_finite() || mag > opts.blowup {
                return Err(Error::Divergence { t, magnitude: mag });
            }
        }
        let factor = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
        h *= factor;
        if h.abs() < 1e-14 * span.max(1.0) && err > 1.0 {
            return Err(Error::Divergence {
                t,
                magnitude: y.iter().map(|v| v * v).sum::<f64>().sqrt(),
            });
        }
    }
    Err(Error::Divergence {
        t,
        magnitude: y.iter().map(|v| v * v).sum::<f64>().sqrt(),
    })
}

/// Integrate and record the state at each of `times` (monotone, starting at
/// the initial time).
pub fn integrate_dense<F>(rhs: F, times: &[f64], y0: &[f64], opts: &OdeOptions) -> Result<Vec<Vec<f64>>>
where
    F: Fn(f64, &[f64], &mut [f64]),
{
    let mut out = Vec::with_capacity(times.len());
    let mut y = y0.to_vec();
    out.push(y.clone());
    for w in times.windows(2) {
        y = integrate(&rhs, w[0], &y, w[1], opts)?;
        out.push(y.clone());
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exponential_growth_forward_and_backward() {
        let opts = OdeOptions::default();
        let y = integrate(|_, y, out| out[0] = y[0], 0.0, &[1.0], 1.0, &opts).unwrap();
        assert!((y[0] - std::f64::consts::E).abs() < 1e-11);
        let back = integrate(|_, y, out| out[0] = y[0], 1.0, &[std::f64::consts::E], 0.0, &opts).unwrap();
        assert!((back[0] - 1.0).abs() < 1e-11);
    }

    #[test]
    fn blowup_is_reported() {
        let opts = OdeOptions::default();
        let r = integrate(|_, y, out| out[0] = y[0] * y[0], 0.0, &[1.0], 2.0, &opts);
        assert!(matches!(r, Err(Error::Divergence { .. })));
    }

    #[test]
    fn rotation_preserves_norm() {
        let opts = OdeOptions::default();
        let y = integrate(
            |_, y, out| {
                out[0] = -y[1];
                out[1] = y[0];
            },
            0.0,
            &[1.0, 0.0],
            std::f64::consts::PI,
            &opts,
        )
        .unwrap();
        assert!((y[0] + 1.0).abs() < 1e-10 && y[1].abs() < 1e-10);
    }
}
