//! Small sample-statistics helpers shared by the estimators.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::rng::path_stream;

/// Running mean `m_{i+1} = m_i + (v - m_i)/(i+1)`.
///
/// A constant sequence returns that constant bit-exactly, which keeps the
/// trivial identities (`exp(0) = 1`, identity flows, constant terminal data)
/// exact instead of tolerance-level.
pub fn stable_mean<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    let mut mean = 0.0;
    let mut count = 0.0;
    for v in values {
        count += 1.0;
        mean += (v - mean) / count;
    }
    mean
}

/// Mean and standard error of the mean.
pub fn mean_stderr(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = stable_mean(values.iter().copied());
    if n < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n as f64 - 1.0);
    (mean, (var / n as f64).sqrt())
}

/// Unbiased sample variance.
pub fn sample_variance(values: &[f64]) -> f64 {
    let n = values.len();
    if n < 2 {
        return 0.0;
    }
    let mean = stable_mean(values.iter().copied());
    values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n as f64 - 1.0)
}

/// Percentile bootstrap interval for the mean.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BootstrapInterval {
    pub estimate: f64,
    pub lower: f64,
    pub upper: f64,
}

impl BootstrapInterval {
    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }
}

pub fn bootstrap_mean(values: &[f64], n_boot: usize, seed: u64, level: f64) -> BootstrapInterval {
    let estimate = stable_mean(values.iter().copied());
    let n = values.len();
    if n < 2 || n_boot == 0 || values.iter().all(|v| *v == values[0]) {
        return BootstrapInterval {
            estimate,
            lower: estimate,
            upper: estimate,
        };
    }
    let mut rng = path_stream(seed, 0);
    let mut means: Vec<f64> = (0..n_boot)
        .map(|_| {
            let mut acc = 0.0;
            for _ in 0..n {
                acc += values[rng.random_range(0..n)];
            }
            acc / n as f64
        })
        .collect();
    means.sort_by(|a, b| a.total_cmp(b));
    let alpha = (1.0 - level) / 2.0;
    let pick = |q: f64| {
        let idx = ((q * (n_boot - 1) as f64).round() as usize).min(n_boot - 1);
        means[idx]
    };
    BootstrapInterval {
        estimate,
        lower: pick(alpha),
        upper: pick(1.0 - alpha),
    }
}

/// Smallest fraction of samples whose values make up more than half of the
/// total. Values are assumed non-negative. A small share flags a heavy tail.
pub fn tail_share(values: &[f64]) -> f64 {
    let total: f64 = values.iter().sum();
    if values.is_empty() || total <= 0.0 || !total.is_finite() {
        return 0.0;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut acc = 0.0;
    for (i, v) in sorted.iter().enumerate() {
        acc += v;
        if acc > 0.5 * total {
            return (i + 1) as f64 / values.len() as f64;
        }
    }
    1.0
}

pub fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
