use std::sync::Arc;

use nalgebra::DMatrix;

use crate::bsde::Terminal;
use crate::error::{Error, Result};
use crate::forward::DiffusionSpec;
use crate::generator::examples::{certified_sup, young_linear};
use crate::generator::{constant_field, default_exponents, AssumptionEnvelope, Generator};
use crate::stats::norm;

use super::{PdeProblem, PdeWeights};

/// `(t, x) ↦` row-major `d × d` matrix.
pub type MatrixField = Arc<dyn Fn(f64, &[f64]) -> Vec<f64> + Send + Sync>;
/// `(t, x) ↦ B` with `B_ij ∈ R^d` stored at `[(i·r + j)·d ..]`.
pub type TensorField = Arc<dyn Fn(f64, &[f64]) -> Vec<f64> + Send + Sync>;

const COEFF_SAMPLES: usize = 2000;
const SAMPLE_BOX: f64 = 3.0;

fn op_norm(m: &[f64], d: usize) -> f64 {
    DMatrix::from_row_slice(d, d, m).singular_values().max()
}

fn sym_min_eig(m: &[f64], d: usize) -> f64 {
    let a = DMatrix::from_row_slice(d, d, m);
    let s = (&a + a.transpose()) * 0.5;
    s.symmetric_eigenvalues().min()
}

/// Wrap `F(t,x,y,z) = A y + ⟨⟨B; z⟩⟩ − C y log|y|`, where `⟨⟨B; z⟩⟩ = Σ B_ij Z_ij`
/// and `Z_ij` is entry `(i, j)` of the `d × r` matrix `z`.
///
/// The bounds `‖A‖ + ‖B‖² ≤ K(1+|x|)` and `0 ≤ C ≤ K` are verified on a
/// low-discrepancy sample of `[0, T] × [−3, 3]^k` (operator norms for `A`
/// and `C`, Frobenius norm for `B`). The envelope carries
/// `⟨y,F⟩ ≤ K + K(1+|x|)|y|² + √(K(1+|x|))|y||z|`, a growth bound obtained by
/// Young's inequality, and the log-Lipschitz constant `K″ = 1 + 4Kd + K²`
/// with `A_N = N` on `{e^{|x|} ≤ N}`.
#[allow(clippy::too_many_arguments)]
pub fn make_linear_log_pde(
    dim_d: usize,
    a: MatrixField,
    b: TensorField,
    c: MatrixField,
    k_bound: f64,
    terminal: Terminal,
    diffusion: DiffusionSpec,
    horizon: f64,
    weights: PdeWeights,
    p: f64,
    gamma: f64,
) -> Result<PdeProblem> {
    let d = dim_d;
    let r = diffusion.dim_r();
    let k = diffusion.dim_k();
    if d == 0 || !(k_bound > 0.0) {
        return Err(Error::InvalidCoefficients("need d ≥ 1 and K > 0".into()));
    }
    let primes = [2.0f64, 3.0, 5.0, 7.0, 11.0, 13.0, 17.0, 19.0, 23.0, 29.0, 31.0];
    let mut x = vec![0.0; k];
    for s in 0..COEFF_SAMPLES {
        let frac = |i: usize| ((s as f64 + 0.5) * primes[i % primes.len()].sqrt()).fract();
        let t = horizon * frac(0);
        for (i, xi) in x.iter_mut().enumerate() {
            *xi = SAMPLE_BOX * (2.0 * frac(i + 1) - 1.0);
        }
        let (am, bm, cm) = (a(t, &x), b(t, &x), c(t, &x));
        if am.len() != d * d || bm.len() != d * d * r || cm.len() != d * d {
            return Err(Error::DimensionMismatch("coefficient shapes do not match d and r".into()));
        }
        let bound = k_bound * (1.0 + norm(&x));
        let lhs = op_norm(&am, d) + bm.iter().map(|v| v * v).sum::<f64>();
        if !(lhs <= bound * (1.0 + 1e-12)) {
            return Err(Error::InvalidCoefficients(format!(
                "‖A‖ + ‖B‖² = {lhs} exceeds K(1+|x|) = {bound} at t = {t}, x = {x:?}"
            )));
        }
        let cn = op_norm(&cm, d);
        let cmin = sym_min_eig(&cm, d);
        if !(cn <= k_bound * (1.0 + 1e-12)) || !(cmin >= -1e-12) {
            return Err(Error::InvalidCoefficients(format!(
                "C must satisfy 0 ≤ C ≤ K: ‖C‖ = {cn}, min eigenvalue {cmin} at t = {t}, x = {x:?}"
            )));
        }
    }

    let (af, bf, cf) = (a.clone(), b.clone(), c.clone());
    let driver = Arc::new(move |t: f64, x: &[f64], y: &[f64], z: &[f64], out: &mut [f64]| {
        let (am, bm, cm) = (af(t, x), bf(t, x), cf(t, x));
        let ny = norm(y);
        let l = if ny > 0.0 { ny.ln() } else { 0.0 };
        for i in 0..d {
            let mut v = 0.0;
            for j in 0..d {
                v += (am[i * d + j] - l * cm[i * d + j]) * y[j];
            }
            out[i] = v;
        }
        for i in 0..d {
            for j in 0..r {
                let zij = z[i * r + j];
                let base = (i * r + j) * d;
                for (o, bv) in out.iter_mut().zip(&bm[base..base + d]) {
                    *o += bv * zij;
                }
            }
        }
    });
    let generator = Generator::new(d, r, "linear_log", driver);

    let kk = k_bound;
    let (alpha, alpha_prime) = default_exponents(p);
    let log_part = certified_sup(|s| if s > 0.0 { kk * s * s.ln().abs() - 0.5 * s.powf(alpha) } else { 0.0 });
    let mut env = AssumptionEnvelope::trivial(p, gamma);
    env.alpha = alpha;
    env.alpha_prime = alpha_prime;
    env.eta = constant_field(kk);
    env.m = Arc::new(move |_, x| kk * (1.0 + norm(x)));
    env.k_proc = Arc::new(move |_, x| (kk * (1.0 + norm(x))).sqrt());
    env.eta_bar = Arc::new(move |_, x| {
        let lin = kk * (1.0 + norm(x));
        (young_linear(lin, alpha, 0.5) + young_linear(lin.sqrt(), alpha_prime, 1.0) + log_part) * 1.05 + 1e-9
    });
    env.v = Arc::new(|_, x| norm(x).exp());
    env.k_prime = 1.0 + 4.0 * kk * d as f64 + kk * kk;
    env.a_n = Arc::new(|n| n);
    env.validate()?;
    // The monotonicity bound grows like K|x|, so M′ = K.
    let weights = PdeWeights { m_prime: kk, ..weights };
    PdeProblem::new(diffusion, terminal, generator, horizon, env, weights)
}
