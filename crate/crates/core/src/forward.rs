//! Forward diffusion `dX = b(X) dt + σ(X) dW` and its moment diagnostics.
//!
//! Paths are simulated with explicit Euler–Maruyama on a [`TimeGrid`]. The
//! Brownian increments are stored alongside the states because the backward
//! solver regresses against them.

use std::fmt;
use std::io::{self, Read, Write};
use std::sync::Arc;

use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{SpaceGrid, TimeGrid};
use crate::rng::{derive_seed, path_stream};
use crate::stats::{stable_mean, tail_share};

pub type VectorField = Arc<dyn Fn(&[f64], &mut [f64]) + Send + Sync>;

/// Declared regularity of the coefficients.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Smoothness {
    /// σ ∈ C³_b and b ∈ C²_b.
    SmoothBounded,
    /// Globally Lipschitz but possibly unbounded (e.g. linear drift).
    Lipschitz,
    Unspecified,
}

/// Coefficients of the forward diffusion in dimension `k` driven by an
/// `r`-dimensional Brownian motion. The diffusion matrix is `k × r`,
/// row-major.
#[derive(Clone)]
pub struct DiffusionSpec {
    dim_k: usize,
    dim_r: usize,
    drift: VectorField,
    diffusion: VectorField,
    smoothness: Smoothness,
    zero_diffusion: bool,
}

impl fmt::Debug for DiffusionSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DiffusionSpec")
            .field("dim_k", &self.dim_k)
            .field("dim_r", &self.dim_r)
            .field("smoothness", &self.smoothness)
            .field("zero_diffusion", &self.zero_diffusion)
            .finish()
    }
}

impl DiffusionSpec {
    pub fn new(dim_k: usize, dim_r: usize, drift: VectorField, diffusion: VectorField, smoothness: Smoothness) -> Self {
        Self {
            dim_k,
            dim_r,
            drift,
            diffusion,
            smoothness,
            zero_diffusion: false,
        }
    }

    /// σ ≡ 0 and b ≡ 0.
    pub fn zero(dim_k: usize, dim_r: usize) -> Self {
        Self::constant(vec![0.0; dim_k], vec![0.0; dim_k * dim_r], dim_r)
    }

    /// Constant drift vector and constant `k × r` diffusion matrix.
    pub fn constant(drift: Vec<f64>, sigma: Vec<f64>, dim_r: usize) -> Self {
        let dim_k = drift.len();
        assert_eq!(sigma.len(), dim_k * dim_r, "diffusion matrix must be k x r");
        let zero_diffusion = sigma.iter().all(|s| *s == 0.0);
        let b = drift.clone();
        let s = sigma.clone();
        Self {
            dim_k,
            dim_r,
            drift: Arc::new(move |_, out| out.copy_from_slice(&b)),
            diffusion: Arc::new(move |_, out| out.copy_from_slice(&s)),
            smoothness: Smoothness::SmoothBounded,
            zero_diffusion,
        }
    }

    /// Scaled Brownian motion `X = x + scale·W` in dimension `k = r`.
    pub fn brownian(dim_k: usize, scale: f64) -> Self {
        let mut sigma = vec![0.0; dim_k * dim_k];
        for i in 0..dim_k {
            sigma[i * dim_k + i] = scale;
        }
        Self::constant(vec![0.0; dim_k], sigma, dim_k)
    }

    /// Linear drift `b(x) = -θ x` with constant isotropic noise `scale·I`.
    pub fn ornstein_uhlenbeck(dim_k: usize, theta: f64, scale: f64) -> Self {
        let mut spec = Self::brownian(dim_k, scale);
        spec.drift = Arc::new(move |x, out| {
            for (o, xi) in out.iter_mut().zip(x) {
                *o = -theta * xi;
            }
        });
        spec.smoothness = Smoothness::Lipschitz;
        spec
    }

    pub fn dim_k(&self) -> usize {
        self.dim_k
    }

    pub fn dim_r(&self) -> usize {
        self.dim_r
    }

    pub fn smoothness(&self) -> Smoothness {
        self.smoothness
    }

    /// True when the diffusion was declared identically zero at construction.
    pub fn is_zero_diffusion(&self) -> bool {
        self.zero_diffusion
    }

    pub fn drift_into(&self, x: &[f64], out: &mut [f64]) {
        (self.drift)(x, out)
    }

    pub fn diffusion_into(&self, x: &[f64], out: &mut [f64]) {
        (self.diffusion)(x, out)
    }

    pub fn drift(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim_k];
        self.drift_into(x, &mut out);
        out
    }

    pub fn diffusion(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim_k * self.dim_r];
        self.diffusion_into(x, &mut out);
        out
    }
}

/// Simulated trajectories and their Brownian increments.
#[derive(Debug, Clone, PartialEq)]
pub struct PathBatch {
    pub grid: TimeGrid,
    pub n_paths: usize,
    pub dim_k: usize,
    pub dim_r: usize,
    pub x0: Vec<f64>,
    pub seed: u64,
    /// `[n_paths × (n_steps+1) × k]`, row-major.
    pub states: Vec<f64>,
    /// `[n_paths × n_steps × r]`, row-major.
    pub increments: Vec<f64>,
}

impl PathBatch {
    pub fn n_steps(&self) -> usize {
        self.grid.n_steps()
    }

    pub fn state(&self, path: usize, step: usize) -> &[f64] {
        let k = self.dim_k;
        let base = (path * (self.n_steps() + 1) + step) * k;
        &self.states[base..base + k]
    }

    pub fn increment(&self, path: usize, step: usize) -> &[f64] {
        let r = self.dim_r;
        let base = (path * self.n_steps() + step) * r;
        &self.increments[base..base + r]
    }

    /// Binary dump: magic, dims, seed, grid, then row-major states (all
    /// little-endian).
    pub fn write_dump<W: Write>(&self, mut w: W) -> io::Result<()> {
        w.write_all(DUMP_MAGIC)?;
        w.write_all(&(self.dim_k as u32).to_le_bytes())?;
        w.write_all(&(self.dim_r as u32).to_le_bytes())?;
        w.write_all(&(self.n_paths as u64).to_le_bytes())?;
        w.write_all(&(self.n_steps() as u64).to_le_bytes())?;
        w.write_all(&self.seed.to_le_bytes())?;
        for t in self.grid.points() {
            w.write_all(&t.to_le_bytes())?;
        }
        for v in &self.states {
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }
}

const DUMP_MAGIC: &[u8; 8] = b"LBSDEPB1";

/// Contents of a path dump (increments are not part of the dump).
#[derive(Debug, Clone, PartialEq)]
pub struct PathDump {
    pub dim_k: usize,
    pub dim_r: usize,
    pub n_paths: usize,
    pub seed: u64,
    pub grid: Vec<f64>,
    pub states: Vec<f64>,
}

pub fn read_dump<R: Read>(mut r: R) -> io::Result<PathDump> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != DUMP_MAGIC {
        return Err(io::Error::new(io::ErrorKind::InvalidData, "not a path dump"));
    }
    let mut b4 = [0u8; 4];
    let mut b8 = [0u8; 8];
    r.read_exact(&mut b4)?;
    let dim_k = u32::from_le_bytes(b4) as usize;
    r.read_exact(&mut b4)?;
    let dim_r = u32::from_le_bytes(b4) as usize;
    r.read_exact(&mut b8)?;
    let n_paths = u64::from_le_bytes(b8) as usize;
    r.read_exact(&mut b8)?;
    let n_steps = u64::from_le_bytes(b8) as usize;
    r.read_exact(&mut b8)?;
    let seed = u64::from_le_bytes(b8);
    let mut read_f64s = |n: usize| -> io::Result<Vec<f64>> {
        let mut v = Vec::with_capacity(n);
        for _ in 0..n {
            r.read_exact(&mut b8)?;
            v.push(f64::from_le_bytes(b8));
        }
        Ok(v)
    };
    let grid = read_f64s(n_steps + 1)?;
    let states = read_f64s(n_paths * (n_steps + 1) * dim_k)?;
    Ok(PathDump {
        dim_k,
        dim_r,
        n_paths,
        seed,
        grid,
        states,
    })
}

/// Euler–Maruyama paths `X_{i+1} = X_i + b(X_i)Δt + σ(X_i)ΔW_i`, one
/// ChaCha stream per path.
pub fn simulate_paths(spec: &DiffusionSpec, grid: &TimeGrid, x0: &[f64], n_paths: usize, seed: u64) -> Result<PathBatch> {
    let k = spec.dim_k;
    let r = spec.dim_r;
    if x0.len() != k {
        return Err(Error::DimensionMismatch(format!("x0 has length {}, expected {k}", x0.len())));
    }
    if n_paths == 0 {
        return Err(Error::InvalidResolution("n_paths must be at least 1".into()));
    }
    let n_steps = grid.n_steps();
    let stride_s = (n_steps + 1) * k;
    let stride_w = n_steps * r;
    let mut states = vec![0.0; n_paths * stride_s];
    let mut increments = vec![0.0; n_paths * stride_w];

    let simulate_one = |p: usize, xs: &mut [f64], dw: &mut [f64]| -> Result<()> {
        xs[..k].copy_from_slice(x0);
        if n_steps == 0 {
            return Ok(());
        }
        let mut rng = path_stream(seed, p as u64);
        let mut b = vec![0.0; k];
        let mut sig = vec![0.0; k * r];
        for i in 0..n_steps {
            let dt = grid.dt(i);
            let sq = dt.sqrt();
            for j in 0..r {
                let z: f64 = StandardNormal.sample(&mut rng);
                dw[i * r + j] = z * sq;
            }
            let (cur, next) = xs[i * k..(i + 2) * k].split_at_mut(k);
            spec.drift_into(cur, &mut b);
            spec.diffusion_into(cur, &mut sig);
            if b.iter().chain(sig.iter()).any(|v| !v.is_finite()) {
                return Err(Error::NumericFault {
                    path: p,
                    step: i,
                    what: "non-finite drift or diffusion".into(),
                });
            }
            for a in 0..k {
                let mut noise = 0.0;
                for j in 0..r {
                    noise += sig[a * r + j] * dw[i * r + j];
                }
                next[a] = cur[a] + b[a] * dt + noise;
            }
            if next.iter().any(|v| !v.is_finite()) {
                return Err(Error::NumericFault {
                    path: p,
                    step: i + 1,
                    what: "state overflowed".into(),
                });
            }
        }
        Ok(())
    };

    let outcome: Vec<Result<()>> = if n_steps == 0 {
        states
            .par_chunks_mut(stride_s)
            .enumerate()
            .map(|(p, xs)| simulate_one(p, xs, &mut []))
            .collect()
    } else {
        states
            .par_chunks_mut(stride_s)
            .zip(increments.par_chunks_mut(stride_w))
            .enumerate()
            .map(|(p, (xs, dw))| simulate_one(p, xs, dw))
            .collect()
    };
    if let Some(err) = outcome.into_iter().find_map(|r| r.err()) {
        return Err(err);
    }
    Ok(PathBatch {
        grid: grid.clone(),
        n_paths,
        dim_k: k,
        dim_r: r,
        x0: x0.to_vec(),
        seed,
        states,
        increments,
    })
}

/// Monte Carlo estimate of `E exp(κ · max_i |X_i − x0|²)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExpMomentReport {
    pub estimate: f64,
    /// Smallest fraction of paths carrying more than half of the mean.
    pub tail_share: f64,
    /// Some path overflowed; `estimate` is then `+∞`.
    pub divergent: bool,
}

pub fn exp_moment_estimate(batch: &PathBatch, kappa: f64, x0: &[f64]) -> Result<ExpMomentReport> {
    if !(kappa >= 0.0) {
        return Err(Error::InvalidParameters {
            kind: "exp_moment_estimate".into(),
            reason: format!("kappa must be non-negative, got {kappa}"),
        });
    }
    let values: Vec<f64> = (0..batch.n_paths)
        .into_par_iter()
        .map(|p| {
            let sup = (0..=batch.n_steps())
                .map(|i| {
                    batch
                        .state(p, i)
                        .iter()
                        .zip(x0)
                        .map(|(a, b)| (a - b) * (a - b))
                        .sum::<f64>()
                })
                .fold(0.0, f64::max);
            (kappa * sup).exp()
        })
        .collect();
    if values.iter().any(|v| !v.is_finite()) {
        return Ok(ExpMomentReport {
            estimate: f64::INFINITY,
            tail_share: 0.0,
            divergent: true,
        });
    }
    let estimate = stable_mean(values.iter().copied());
    Ok(ExpMomentReport {
        estimate,
        tail_share: tail_share(&values),
        divergent: !estimate.is_finite(),
    })
}

/// Bisection for the largest `κ ≤ kappa_max` whose exponential moment is
/// finite and not dominated by a handful of paths (`tail_share ≥ min_share`).
pub fn find_working_kappa(batch: &PathBatch, kappa_max: f64, min_share: f64, iterations: usize) -> Result<f64> {
    let ok = |kappa: f64| -> Result<bool> {
        let r = exp_moment_estimate(batch, kappa, &batch.x0)?;
        Ok(!r.divergent && r.tail_share >= min_share)
    };
    if ok(kappa_max)? {
        return Ok(kappa_max);
    }
    let (mut lo, mut hi) = (0.0, kappa_max);
    for _ in 0..iterations {
        let mid = 0.5 * (lo + hi);
        if ok(mid)? {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(lo)
}

/// Outcome of the weighted norm-equivalence sandwich.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormEquivalenceReport {
    /// `E∫φ(X_s^{t,x}) e^{-δ|x|}dx / ∫φ(x) e^{-δ|x|}dx`.
    pub ratio: f64,
    /// `ratio · C`; the lower half of the sandwich holds iff this is ≥ 1.
    pub lower_ratio: f64,
    /// `ratio / C`; the upper half holds iff this is ≤ 1.
    pub upper_ratio: f64,
    pub constant: f64,
    pub within_bounds: bool,
}

/// Parameters of [`norm_equivalence_check`] other than the diffusion and φ.
#[derive(Debug, Clone, Copy)]
pub struct NormEquivalenceSetup {
    pub delta: f64,
    pub t: f64,
    pub s: f64,
    pub n_steps: usize,
    pub n_paths: usize,
    pub seed: u64,
    /// The sandwich constant `C_{δ,T} > 1`.
    pub constant: f64,
}

pub fn norm_equivalence_check(
    spec: &DiffusionSpec,
    phi: &(dyn Fn(&[f64]) -> f64 + Sync),
    x_grid: &SpaceGrid,
    setup: &NormEquivalenceSetup,
) -> Result<NormEquivalenceReport> {
    if setup.s < setup.t {
        return Err(Error::InvalidInterval {
            t0: setup.t,
            t_end: setup.s,
        });
    }
    if x_grid.dim() != spec.dim_k() {
        return Err(Error::DimensionMismatch("space grid dimension differs from k".into()));
    }
    let grid = TimeGrid::uniform(setup.t, setup.s, setup.n_steps)?;
    let weights = x_grid.weights();
    let mut numerator = 0.0;
    let mut denominator = 0.0;
    for (j, w) in weights.iter().enumerate() {
        let x = x_grid.node(j);
        let damp = (-setup.delta * crate::stats::norm(&x)).exp();
        let node_seed = derive_seed(setup.seed, &format!("norm-equivalence/{j}"));
        let batch = simulate_paths(spec, &grid, &x, setup.n_paths, node_seed)?;
        let last = batch.n_steps();
        let mean = stable_mean((0..batch.n_paths).map(|p| phi(batch.state(p, last)).abs()));
        numerator += w * mean * damp;
        denominator += w * phi(&x).abs() * damp;
    }
    if denominator == 0.0 {
        return Err(Error::DegenerateTestFunction);
    }
    let ratio = numerator / denominator;
    let c = setup.constant;
    Ok(NormEquivalenceReport {
        ratio,
        lower_ratio: ratio * c,
        upper_ratio: ratio / c,
        constant: c,
        within_bounds: ratio >= 1.0 / c && ratio <= c,
    })
}
