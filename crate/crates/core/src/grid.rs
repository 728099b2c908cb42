//! Time and space grids.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::trapezoid_weights;

/// Strictly increasing discretization of `[t0, T]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    t0: f64,
    t_end: f64,
    points: Vec<f64>,
}

impl TimeGrid {
    /// Uniform grid with `n_steps` intervals. `t0 == T` gives the single-point
    /// grid `{t0}`.
    pub fn uniform(t0: f64, t_end: f64, n_steps: usize) -> Result<Self> {
        if !(t0.is_finite() && t_end.is_finite()) || t_end < t0 {
            return Err(Error::InvalidInterval { t0, t_end });
        }
        if t_end == t0 {
            return Ok(Self {
                t0,
                t_end,
                points: vec![t0],
            });
        }
        if n_steps == 0 {
            return Err(Error::InvalidResolution(format!(
                "n_steps must be positive on [{t0}, {t_end}]"
            )));
        }
        let span = t_end - t0;
        let mut points: Vec<f64> = (0..=n_steps)
            .map(|i| t0 + span * (i as f64 / n_steps as f64))
            .collect();
        points[n_steps] = t_end;
        Ok(Self { t0, t_end, points })
    }

    /// Grid from explicit points; must be strictly increasing.
    pub fn from_points(points: Vec<f64>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::InvalidResolution("empty time grid".into()));
        }
        if points.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidResolution("time grid must be strictly increasing".into()));
        }
        Ok(Self {
            t0: points[0],
            t_end: *points.last().unwrap(),
            points,
        })
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn t_end(&self) -> f64 {
        self.t_end
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn n_steps(&self) -> usize {
        self.points.len() - 1
    }

    pub fn dt(&self, i: usize) -> f64 {
        self.points[i + 1] - self.points[i]
    }

    pub fn horizon(&self) -> f64 {
        self.t_end - self.t0
    }
}

/// Uniform grid; the plain `make_time_grid` entry point.
pub fn make_time_grid(t0: f64, t_end: f64, n_steps: usize) -> Result<TimeGrid> {
    TimeGrid::uniform(t0, t_end, n_steps)
}

/// Tensor-product spatial grid with trapezoid weights per axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpaceGrid {
    axes: Vec<Vec<f64>>,
}

impl SpaceGrid {
    pub fn new(axes: Vec<Vec<f64>>) -> Result<Self> {
        if axes.is_empty() || axes.iter().any(|a| a.is_empty()) {
            return Err(Error::InvalidResolution("space grid needs non-empty axes".into()));
        }
        if axes.iter().any(|a| a.windows(2).any(|w| !(w[1] > w[0]))) {
            return Err(Error::InvalidResolution("space grid axes must be strictly increasing".into()));
        }
        Ok(Self { axes })
    }

    /// `n` uniformly spaced points on `[lo, hi]` along each of `k` axes.
    pub fn uniform(k: usize, lo: f64, hi: f64, n: usize) -> Result<Self> {
        if n == 0 || !(hi >= lo) {
            return Err(Error::InvalidResolution(format!("bad axis [{lo}, {hi}] with {n} points")));
        }
        let axis: Vec<f64> = if n == 1 {
            vec![lo]
        } else {
            (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
        };
        Self::new(vec![axis; k])
    }

    pub fn dim(&self) -> usize {
        self.axes.len()
    }

    pub fn axes(&self) -> &[Vec<f64>] {
        &self.axes
    }

    pub fn len(&self) -> usize {
        self.axes.iter().map(Vec::len).product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Node `idx` in row-major order (last axis fastest).
    pub fn node(&self, mut idx: usize) -> Vec<f64> {
        let mut x = vec![0.0; self.axes.len()];
        for (a, axis) in self.axes.iter().enumerate().rev() {
            x[a] = axis[idx % axis.len()];
            idx /= axis.len();
        }
        x
    }

    pub fn nodes(&self) -> Vec<Vec<f64>> {
        (0..self.len()).map(|i| self.node(i)).collect()
    }

    /// Product trapezoid weights in node order. A single-point axis gets
    /// weight 1.
    pub fn weights(&self) -> Vec<f64> {
        let per_axis: Vec<Vec<f64>> = self
            .axes
            .iter()
            .map(|a| if a.len() == 1 { vec![1.0] } else { trapezoid_weights(a) })
            .collect();
        (0..self.len())
            .map(|mut idx| {
                let mut w = 1.0;
                for (a, axis) in self.axes.iter().enumerate().rev() {
                    w *= per_axis[a][idx % axis.len()];
                    idx /= axis.len();
                }
                w
            })
            .collect()
    }
}
