//! Estimate functionals on solved BSDEs and the inequality / stability
//! experiments built on them.
//!
//! Continuous-time suprema are grid maxima. `dt`-integrals of quantities
//! defined at every grid point use the trapezoid rule; integrals of `Z`,
//! which the scheme holds constant on `[t_i, t_{i+1})`, use left sums.

use rayon::prelude::*;
use serde::Serialize;

use crate::bsde::{solve_backward, BsdeProblem, BsdeSolution, SolverConfig, Terminal};
use crate::error::{Error, Result};
use crate::forward::PathBatch;
use crate::generator::{lambda_weight, rho_n, AssumptionEnvelope, Generator, ScalarField};
use crate::grid::TimeGrid;
use crate::mollify::{mollify_generator, truncate_terminal};
use crate::quadrature::cumulative_trapezoid;
use crate::stats::{bootstrap_mean, norm, stable_mean, tail_share, BootstrapInterval};

/// Weighted processes along one path.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WeightedProcesses {
    /// `e_t = exp(∫₀ᵗ λ_s ds)`.
    pub e: Vec<f64>,
    /// `Λ_t = |Y_t|² e_t + 2∫₀ᵗ e η ds + (∫₀ᵗ e^{1/2} f⁰ ds)²`.
    pub lambda: Vec<f64>,
    /// `2∫₀ᵗ e η ds`.
    pub eta_part: Vec<f64>,
    /// `(∫₀ᵗ e^{1/2} f⁰ ds)²`.
    pub f0_part: Vec<f64>,
    pub p: f64,
    pub gamma: f64,
}

/// `y_path` is `[(n+1) × d]`, `x_path` is `[(n+1) × k]`.
pub fn lambda_path(y_path: &[f64], d: usize, x_path: &[f64], k: usize, env: &AssumptionEnvelope, grid: &TimeGrid) -> Result<WeightedProcesses> {
    let ts = grid.points();
    let m = ts.len();
    if y_path.len() != m * d || x_path.len() != m * k {
        return Err(Error::DimensionMismatch("path lengths do not match the grid".into()));
    }
    let x = |i: usize| &x_path[i * k..(i + 1) * k];
    let lam: Vec<f64> = (0..m).map(|i| lambda_weight(env, ts[i], x(i))).collect::<Result<_>>()?;
    let e: Vec<f64> = cumulative_trapezoid(ts, &lam).iter().map(|v| v.exp()).collect();
    let eta: Vec<f64> = (0..m).map(|i| e[i] * (env.eta)(ts[i], x(i))).collect();
    let f0: Vec<f64> = (0..m).map(|i| e[i].sqrt() * (env.f0)(ts[i], x(i))).collect();
    let eta_part: Vec<f64> = cumulative_trapezoid(ts, &eta).iter().map(|v| 2.0 * v).collect();
    let f0_part: Vec<f64> = cumulative_trapezoid(ts, &f0).iter().map(|v| v * v).collect();
    let lambda = (0..m)
        .map(|i| {
            let y = &y_path[i * d..(i + 1) * d];
            y.iter().map(|v| v * v).sum::<f64>() * e[i] + eta_part[i] + f0_part[i]
        })
        .collect();
    Ok(WeightedProcesses {
        e,
        lambda,
        eta_part,
        f0_part,
        p: env.p,
        gamma: env.gamma,
    })
}

/// Per-path `sup_t |Y_t|^p + (∫|Z|² ds)^{p/2}`.
fn theta_samples(solution: &BsdeSolution, p: f64) -> Vec<f64> {
    let dts: Vec<f64> = (0..solution.n_steps).map(|i| solution.grid.dt(i)).collect();
    (0..solution.n_paths)
        .map(|q| {
            let sup = (0..=solution.n_steps).map(|i| norm(solution.y(q, i)).powf(p)).fold(0.0, f64::max);
            let zint: f64 = (0..solution.n_steps).map(|i| norm(solution.z(q, i)).powi(2) * dts[i]).sum();
            sup + zint.powf(p / 2.0)
        })
        .collect()
}

/// `Θ_p = E sup|Y|^p + E(∫|Z|²)^{p/2}` with a 95 % bootstrap interval.
pub fn theta_p(solution: &BsdeSolution, p: f64, seed: u64) -> Result<BootstrapInterval> {
    if !(p > 1.0) {
        return Err(Error::InvalidExponents(format!("p = {p} must exceed 1")));
    }
    let vals = theta_samples(solution, p);
    if vals.windows(2).all(|w| w[0] == w[1]) {
        let v = vals[0];
        return Ok(BootstrapInterval {
            estimate: v,
            lower: v,
            upper: v,
        });
    }
    Ok(bootstrap_mean(&vals, 500, seed, 0.95))
}

/// `β̂ = (2/α′) ∧ (p/α) ∧ (p/α′) ∧ q`.
pub fn beta_hat(p: f64, q: f64, alpha: f64, alpha_prime: f64) -> Result<f64> {
    if !(p > 1.0 && q > 1.0) {
        return Err(Error::InvalidExponents(format!("need p > 1 and q > 1, got p = {p}, q = {q}")));
    }
    if !(alpha > 1.0 && alpha < p) {
        return Err(Error::InvalidExponents(format!("alpha = {alpha} outside ]1, p[")));
    }
    if !(alpha_prime > 1.0 && alpha_prime < p.min(2.0)) {
        return Err(Error::InvalidExponents(format!("alpha' = {alpha_prime} outside ]1, p∧2[")));
    }
    Ok((2.0 / alpha_prime).min(p / alpha).min(p / alpha_prime).min(q))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IntegrabilityReport {
    pub beta_hat: f64,
    /// `E∫|f(s, Y, Z)|^β̂ ds`.
    pub lhs: f64,
    /// `9^{p+q}(1+T)[1 + E∫η̄^q + E sup|Y|^p + E(∫|Z|²)^{p/2}]`.
    pub rhs: f64,
    pub passed: bool,
}

pub fn integrability_check(solution: &BsdeSolution, generator: &Generator, env: &AssumptionEnvelope, paths: &PathBatch) -> Result<IntegrabilityReport> {
    let (p, q) = (env.p, env.q);
    let bh = beta_hat(p, q, env.alpha, env.alpha_prime)?;
    let grid = &solution.grid;
    let ts = grid.points();
    let n = solution.n_steps;
    let per_path: Vec<(f64, f64)> = (0..solution.n_paths)
        .into_par_iter()
        .map(|path| {
            let mut fv = vec![0.0; solution.dim_d];
            let mut f_int = 0.0;
            for i in 0..n {
                generator.eval_into(ts[i], paths.state(path, i), solution.y(path, i), solution.z(path, i), &mut fv);
                f_int += norm(&fv).powf(bh) * grid.dt(i);
            }
            let eb: Vec<f64> = (0..=n).map(|i| (env.eta_bar)(ts[i], paths.state(path, i)).powf(q)).collect();
            let eb_int = crate::quadrature::trapezoid(ts, &eb);
            (f_int, eb_int)
        })
        .collect();
    let lhs = stable_mean(per_path.iter().map(|v| v.0));
    let eb = stable_mean(per_path.iter().map(|v| v.1));
    let theta = stable_mean(theta_samples(solution, p));
    let rhs = 9f64.powf(p + q) * (1.0 + grid.horizon()) * (1.0 + eb + theta);
    Ok(IntegrabilityReport {
        beta_hat: bh,
        lhs,
        rhs,
        passed: lhs.is_finite() && lhs <= rhs,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Pass,
    Fail,
    Inconclusive,
}

impl Verdict {
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Pass => "pass",
            Self::Fail => "fail",
            Self::Inconclusive => "inconclusive",
        }
    }
}

#[derive(Debug, Clone)]
pub struct AprioriInstance {
    pub label: String,
    pub problem: BsdeProblem,
    pub env: AssumptionEnvelope,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AprioriRow {
    pub label: String,
    pub lhs: f64,
    pub rhs: f64,
    pub ratio: f64,
    /// Non-finite values or fewer than 1 % of paths carrying half the mass.
    pub heavy_tail: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EstimateReport {
    pub calibration: AprioriRow,
    pub rows: Vec<AprioriRow>,
    pub fitted_c: f64,
    pub worst_ratio: f64,
    pub verdict: Verdict,
}

/// `(LHS, RHS)` sample vectors of the weighted estimate, one entry per path.
fn apriori_samples(inst: &AprioriInstance, sol: &BsdeSolution, paths: &PathBatch) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>)> {
    let env = &inst.env;
    let p = env.p;
    let grid = &sol.grid;
    let (n, d, k) = (sol.n_steps, sol.dim_d, paths.dim_k);
    let rows: Vec<Result<(f64, f64, f64, f64)>> = (0..sol.n_paths)
        .into_par_iter()
        .map(|q| {
            let x_path: Vec<f64> = (0..=n).flat_map(|i| paths.state(q, i).to_vec()).collect();
            let y_path: Vec<f64> = (0..=n).flat_map(|i| sol.y(q, i).to_vec()).collect();
            let w = lambda_path(&y_path, d, &x_path, k, env, grid)?;
            let sup = (0..=n).map(|i| norm(sol.y(q, i)).powf(p) * w.e[i].powf(p / 2.0)).fold(0.0, f64::max);
            let zint: f64 = (0..n).map(|i| w.e[i] * norm(sol.z(q, i)).powi(2) * grid.dt(i)).sum();
            let lhs = sup + zint.powf(p / 2.0);
            let xi = norm(sol.y(q, n)).powf(p) * w.e[n].powf(p / 2.0);
            let eta = (0.5 * w.eta_part[n]).powf(p / 2.0);
            let f0 = w.f0_part[n].sqrt().powf(p);
            Ok((lhs, xi, eta, f0))
        })
        .collect();
    let mut out = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for r in rows {
        let (a, b, c, e) = r?;
        out.0.push(a);
        out.1.push(b);
        out.2.push(c);
        out.3.push(e);
    }
    Ok(out)
}

fn apriori_row(inst: &AprioriInstance, config: &SolverConfig) -> Result<AprioriRow> {
    let paths = inst.problem.simulate(config.n_paths, config.seed)?;
    let sol = solve_backward(&inst.problem, &paths, config)?;
    let (lhs_s, xi_s, eta_s, f0_s) = apriori_samples(inst, &sol, &paths)?;
    let lhs = stable_mean(lhs_s.iter().copied());
    let rhs = stable_mean(xi_s.iter().copied()) + stable_mean(eta_s.iter().copied()) + stable_mean(f0_s.iter().copied());
    let heavy = !lhs.is_finite() || !rhs.is_finite() || (lhs_s.len() >= 100 && lhs > 0.0 && tail_share(&lhs_s) < 0.01);
    let ratio = if rhs > 0.0 {
        lhs / rhs
    } else if lhs == 0.0 {
        0.0
    } else {
        f64::INFINITY
    };
    Ok(AprioriRow {
        label: inst.label.clone(),
        lhs,
        rhs,
        ratio,
        heavy_tail: heavy,
    })
}

/// Fit `C = safety · LHS/RHS` on the calibration instance and require
/// `LHS ≤ C·RHS` on every sweep instance.
pub fn apriori_check(calibration: &AprioriInstance, sweep: &[AprioriInstance], config: &SolverConfig, safety: f64) -> Result<EstimateReport> {
    if !(safety >= 1.0) {
        return Err(Error::InvalidParameters {
            kind: "apriori".into(),
            reason: format!("safety factor {safety} must be at least 1"),
        });
    }
    let cal = apriori_row(calibration, config)?;
    let fitted_c = safety * cal.ratio;
    let rows: Vec<AprioriRow> = sweep.iter().map(|i| apriori_row(i, config)).collect::<Result<_>>()?;
    let worst_ratio = rows.iter().map(|r| r.ratio).fold(cal.ratio, f64::max);
    let verdict = if cal.heavy_tail || rows.iter().any(|r| r.heavy_tail) || !fitted_c.is_finite() {
        Verdict::Inconclusive
    } else if rows.iter().all(|r| r.lhs <= fitted_c * r.rhs * (1.0 + 1e-12)) {
        Verdict::Pass
    } else {
        Verdict::Fail
    };
    Ok(EstimateReport {
        calibration: cal,
        rows,
        fitted_c,
        worst_ratio,
        verdict,
    })
}

/// Reference `(Y, Z)` for [`stability_sweep`].
#[derive(Debug, Clone)]
pub enum StabilityReference {
    /// Solve the unapproximated problem on the same paths.
    Solver,
    /// Deterministic `Y` at every grid point, `Z ≡ 0`.
    Deterministic(Vec<Vec<f64>>),
}

#[derive(Clone)]
pub struct StabilityOptions {
    pub schedule: Vec<f64>,
    pub p_prime: f64,
    /// Level `N` for ρ_N.
    pub level: f64,
    pub quad_nodes: usize,
    pub rho_density: usize,
    pub threshold: f64,
    /// Rows before this index are exempt from the monotonicity check.
    pub burn_in: usize,
    pub h: ScalarField,
}

impl std::fmt::Debug for StabilityOptions {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("StabilityOptions")
            .field("schedule", &self.schedule)
            .field("p_prime", &self.p_prime)
            .field("level", &self.level)
            .finish()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StabilityRow {
    pub n: f64,
    /// `E sup_t |Yⁿ − Y|^{p′}`.
    pub y_error: f64,
    /// `E(∫|Zⁿ − Z|² ds)^{p′/2}`.
    pub z_error: f64,
    pub rho: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StabilityReport {
    pub rows: Vec<StabilityRow>,
    pub monotone: bool,
    pub final_below_threshold: bool,
    pub passed: bool,
}

/// Solve the problem with `(ξⁿ, f_n)` for every `n` of the schedule and
/// measure the distance to the reference.
pub fn stability_sweep(
    problem: &BsdeProblem,
    env: &AssumptionEnvelope,
    opts: &StabilityOptions,
    config: &SolverConfig,
    reference: &StabilityReference,
) -> Result<StabilityReport> {
    if opts.schedule.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidParameters {
            kind: "stability".into(),
            reason: "schedule must be increasing".into(),
        });
    }
    if !(opts.p_prime >= 1.0 && opts.p_prime < env.p) {
        return Err(Error::InvalidExponents(format!("p' = {} must lie in [1, p[", opts.p_prime)));
    }
    let paths = problem.simulate(config.n_paths, config.seed)?;
    let (d, dz) = (problem.generator.dim_d(), problem.generator.dim_z());
    let n_steps = paths.n_steps();
    let ref_sol = match reference {
        StabilityReference::Solver => solve_backward(problem, &paths, config)?,
        StabilityReference::Deterministic(ys) => {
            if ys.len() != n_steps + 1 || ys.iter().any(|v| v.len() != d) {
                return Err(Error::DimensionMismatch("reference path does not match the grid".into()));
            }
            let mut y = Vec::with_capacity((n_steps + 1) * paths.n_paths * d);
            for v in ys {
                for _ in 0..paths.n_paths {
                    y.extend_from_slice(v);
                }
            }
            BsdeSolution::from_parts(paths.grid.clone(), paths.n_paths, d, dz, y, vec![0.0; n_steps * paths.n_paths * dz])?
        }
    };
    let centre_x = problem.x0.clone();
    let t0 = problem.grid.t0();
    let pp = opts.p_prime;
    let mut rows = Vec::with_capacity(opts.schedule.len());
    for &n in &opts.schedule {
        let approx = mollify_generator(&problem.generator, env, n, opts.h.clone(), opts.quad_nodes)?;
        let fg = approx.to_generator();
        let base_terminal = problem.terminal.clone();
        let terminal = Terminal::Function {
            dim_d: d,
            g: std::sync::Arc::new(move |x, out| {
                base_terminal.eval_into(x, out);
                let v = truncate_terminal(out, n);
                out.copy_from_slice(&v);
            }),
        };
        let prob_n = BsdeProblem::new(fg.clone(), terminal, problem.diffusion.clone(), problem.grid.clone(), problem.x0.clone())?;
        let sol = solve_backward(&prob_n, &paths, config)?;
        let ys: Vec<f64> = (0..paths.n_paths)
            .map(|q| {
                (0..=n_steps)
                    .map(|i| {
                        let diff: f64 = sol.y(q, i).iter().zip(ref_sol.y(q, i)).map(|(a, b)| (a - b) * (a - b)).sum();
                        diff.sqrt()
                    })
                    .fold(0.0, f64::max)
                    .powf(pp)
            })
            .collect();
        let zs: Vec<f64> = (0..paths.n_paths)
            .map(|q| {
                let s: f64 = (0..n_steps)
                    .map(|i| {
                        let diff: f64 = sol.z(q, i).iter().zip(ref_sol.z(q, i)).map(|(a, b)| (a - b) * (a - b)).sum();
                        diff * paths.grid.dt(i)
                    })
                    .sum();
                s.powf(pp / 2.0)
            })
            .collect();
        let rho = rho_n(&fg, &problem.generator, opts.level, t0, &centre_x, opts.rho_density)?;
        rows.push(StabilityRow {
            n,
            y_error: stable_mean(ys),
            z_error: stable_mean(zs),
            rho,
        });
    }
    let tail = &rows[opts.burn_in.min(rows.len())..];
    let monotone = tail.windows(2).all(|w| w[1].y_error <= w[0].y_error);
    let final_below_threshold = rows.last().is_none_or(|r| r.y_error < opts.threshold);
    Ok(StabilityReport {
        passed: monotone && final_below_threshold,
        rows,
        monotone,
        final_below_threshold,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generator::constant_field;

    #[test]
    fn beta_hat_examples() {
        assert!((beta_hat(2.0, 2.0, 1.5, 1.5).unwrap() - 4.0 / 3.0).abs() < 1e-15);
        assert!((beta_hat(3.0, 10.0, 2.0, 1.2).unwrap() - 1.5).abs() < 1e-15);
        let lim = beta_hat(3.0, 100.0, 1.0 + 1e-12, 1.0 + 1e-12).unwrap();
        assert!((lim - 2.0).abs() < 1e-9);
        assert!(beta_hat(2.0, 2.0, 2.5, 1.5).is_err());
        assert!(beta_hat(2.0, 2.0, 1.5, 2.0).is_err());
    }

    #[test]
    fn lambda_trivial_cases() {
        let grid = TimeGrid::uniform(0.0, 1.0, 1000).unwrap();
        let m = 1001;
        let env = AssumptionEnvelope::trivial(2.0, 0.2);
        let w = lambda_path(&vec![0.0; m], 1, &vec![0.0; m], 1, &env, &grid).unwrap();
        assert!(w.lambda.iter().all(|v| *v == 0.0));
        let w = lambda_path(&vec![1.0; m], 1, &vec![0.0; m], 1, &env, &grid).unwrap();
        assert!(w.lambda.iter().all(|v| *v == 1.0));
        let mut env = env;
        env.m = constant_field(0.5);
        let w = lambda_path(&vec![1.0; m], 1, &vec![0.0; m], 1, &env, &grid).unwrap();
        assert!((w.lambda[m - 1] - 1f64.exp()).abs() < 1e-6);
    }
}
