//! Gauss–Legendre rules, adaptive integration and trapezoid weights.

use std::f64::consts::PI;

/// Gauss–Legendre nodes and weights on `[-1, 1]`.
#[derive(Debug, Clone)]
pub struct GaussLegendre {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussLegendre {
    /// Nodes are found by Newton iteration on `P_n`, started from the
    /// Chebyshev-like guess `cos(pi (i + 3/4) / (n + 1/2))`.
    pub fn new(n: usize) -> Self {
        assert!(n >= 1, "Gauss-Legendre rule needs at least one node");
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let half = n.div_ceil(2);
        for i in 0..half {
            let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre_with_derivative(n, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre_with_derivative(n, x);
            if d != 0.0 {
                dp = d;
            }
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[n - 1 - i] = x;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        if n % 2 == 1 {
            nodes[n / 2] = 0.0;
        }
        Self { nodes, weights }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Integrate `f` over `[a, b]`.
    pub fn integrate<F: Fn(f64) -> f64>(&self, f: F, a: f64, b: f64) -> f64 {
        let mid = 0.5 * (a + b);
        let half = 0.5 * (b - a);
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(x, w)| w * f(mid + half * x))
            .sum::<f64>()
            * half
    }
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    if n == 0 {
        return (1.0, 0.0);
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Adaptive bisection with a 15-point Gauss–Legendre rule.
pub fn adaptive_integrate<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64) -> f64 {
    let rule = GaussLegendre::new(15);
    let whole = rule.integrate(f, a, b);
    refine(f, &rule, a, b, whole, tol, 0)
}

fn refine<F: Fn(f64) -> f64>(
    f: &F,
    rule: &GaussLegendre,
    a: f64,
    b: f64,
    whole: f64,
    tol: f64,
    depth: usize,
) -> f64 {
    let mid = 0.5 * (a + b);
    let left = rule.integrate(f, a, mid);
    let right = rule.integrate(f, mid, b);
    if (left + right - whole).abs() <= tol || depth >= 40 {
        return left + right;
    }
    refine(f, rule, a, mid, left, 0.5 * tol, depth + 1)
        + refine(f, rule, mid, b, right, 0.5 * tol, depth + 1)
}

/// Trapezoid weights for an increasing (possibly non-uniform) grid.
pub fn trapezoid_weights(points: &[f64]) -> Vec<f64> {
    let n = points.len();
    let mut w = vec![0.0; n];
    for i in 0..n.saturating_sub(1) {
        let h = points[i + 1] - points[i];
        w[i] += 0.5 * h;
        w[i + 1] += 0.5 * h;
    }
    w
}

/// Trapezoid rule on an increasing grid.
pub fn trapezoid(points: &[f64], values: &[f64]) -> f64 {
    trapezoid_weights(points)
        .iter()
        .zip(values)
        .map(|(w, v)| w * v)
        .sum()
}

/// Cumulative trapezoid integral, starting at 0.
pub fn cumulative_trapezoid(points: &[f64], values: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(points.len());
    let mut acc = 0.0;
    out.push(0.0);
    for i in 1..points.len() {
        acc += 0.5 * (points[i] - points[i - 1]) * (values[i] + values[i - 1]);
        out.push(acc);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_legendre_integrates_polynomials_exactly() {
        for n in [1usize, 2, 5, 8, 16] {
            let rule = GaussLegendre::new(n);
            assert!((rule.weights.iter().sum::<f64>() - 2.0).abs() < 1e-13);
            let deg = 2 * n - 1;
            let exact = if deg % 2 == 1 { 0.0 } else { 2.0 / (deg as f64 + 1.0) };
            let got = rule.integrate(|x| x.powi(deg as i32), -1.0, 1.0);
            assert!((got - exact).abs() < 1e-12, "n={n}");
            let even = rule.integrate(|x| x.powi(2 * n as i32 - 2), -1.0, 1.0);
            assert!((even - 2.0 / (2.0 * n as f64 - 1.0)).abs() < 1e-12, "n={n}");
        }
    }

    #[test]
    fn adaptive_handles_smooth_integrands() {
        let v = adaptive_integrate(&|x: f64| x.exp(), 0.0, 1.0, 1e-14);
        assert!((v - (std::f64::consts::E - 1.0)).abs() < 1e-13);
    }

    #[test]
    fn trapezoid_matches_linear_functions() {
        let pts = [0.0, 0.1, 0.5, 1.0];
        let vals: Vec<f64> = pts.iter().map(|x| 2.0 * x + 1.0).collect();
        assert!((trapezoid(&pts, &vals) - 2.0).abs() < 1e-15);
        let cum = cumulative_trapezoid(&pts, &vals);
        assert!((cum[3] - 2.0).abs() < 1e-15);
    }
}
