//! Sampled checks of the structural inequalities.
//!
//! Samples come from a shifted Kronecker sequence over the box, with a share
//! of points pulled radially towards `y = 0` / `z = 0` where the logarithmic
//! drivers are least regular. The worst sample is then refined by a short
//! random hill-climb. A pass is evidence over the sampled box, not a proof.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;

use super::{AssumptionEnvelope, Generator};
use crate::rng::{derive_seed, path_stream};
use crate::stats::{dot, norm};

const SLACK: f64 = 1e-9;
const CLIMB_ITERS: usize = 400;

/// Axis-aligned box for `(t, x, y, z)`; `y` and `z` use the same interval on
/// every coordinate.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoxSampler {
    pub dim_k: usize,
    pub t: (f64, f64),
    pub x: (f64, f64),
    pub y: (f64, f64),
    pub z: (f64, f64),
    pub seed: u64,
}

impl BoxSampler {
    /// `[0,1] × [−2,2]^k × [−5,5]^d × [−5,5]^{dr}`.
    pub fn standard(dim_k: usize, seed: u64) -> Self {
        Self {
            dim_k,
            t: (0.0, 1.0),
            x: (-2.0, 2.0),
            y: (-5.0, 5.0),
            z: (-5.0, 5.0),
            seed,
        }
    }

    pub fn describe(&self) -> String {
        format!(
            "t in [{}, {}], x in [{}, {}]^{}, y in [{}, {}]^d, z in [{}, {}]^(dr)",
            self.t.0, self.t.1, self.x.0, self.x.1, self.dim_k, self.y.0, self.y.1, self.z.0, self.z.1
        )
    }
}

/// Sample point at which an inequality `lhs ≤ rhs` was evaluated.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Witness {
    pub t: f64,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub z: Vec<f64>,
    pub y_prime: Option<Vec<f64>>,
    pub z_prime: Option<Vec<f64>>,
    /// Truncation level `N` for the (H.4) check.
    pub level: Option<f64>,
    pub lhs: f64,
    pub rhs: f64,
}

impl Witness {
    /// `lhs − rhs`; positive means the inequality is violated.
    pub fn margin(&self) -> f64 {
        self.lhs - self.rhs
    }

    pub fn violates(&self) -> bool {
        violated(self.lhs, self.rhs)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckReport {
    pub assumption: String,
    pub passed: bool,
    /// Sample with the largest relative margin, violating or not.
    pub worst: Option<Witness>,
    pub n_samples: usize,
    pub sampled_box: String,
}

fn violated(lhs: f64, rhs: f64) -> bool {
    !(lhs.is_finite() && rhs.is_finite()) || lhs - rhs > SLACK * (1.0 + lhs.abs().max(rhs.abs()))
}

fn score(lhs: f64, rhs: f64) -> f64 {
    if !(lhs.is_finite() && rhs.is_finite()) {
        return f64::INFINITY;
    }
    (lhs - rhs) / (1.0 + lhs.abs().max(rhs.abs()))
}

/// Layout of a flat sample vector.
#[derive(Debug, Clone, Copy)]
struct Layout {
    k: usize,
    d: usize,
    dz: usize,
    pair: bool,
}

impl Layout {
    fn len(&self) -> usize {
        let base = 1 + self.k + self.d + self.dz;
        if self.pair {
            base + self.d + self.dz
        } else {
            base
        }
    }
    fn t(&self, p: &[f64]) -> f64 {
        p[0]
    }
    fn x<'a>(&self, p: &'a [f64]) -> &'a [f64] {
        &p[1..1 + self.k]
    }
    fn y<'a>(&self, p: &'a [f64]) -> &'a [f64] {
        let s = 1 + self.k;
        &p[s..s + self.d]
    }
    fn z<'a>(&self, p: &'a [f64]) -> &'a [f64] {
        let s = 1 + self.k + self.d;
        &p[s..s + self.dz]
    }
    fn y2<'a>(&self, p: &'a [f64]) -> &'a [f64] {
        let s = 1 + self.k + self.d + self.dz;
        &p[s..s + self.d]
    }
    fn z2<'a>(&self, p: &'a [f64]) -> &'a [f64] {
        let s = 1 + self.k + 2 * self.d + self.dz;
        &p[s..s + self.dz]
    }
}

/// Fractional parts of square roots of primes: a cheap Kronecker basis.
fn kronecker_alphas(n: usize) -> Vec<f64> {
    let mut primes = Vec::with_capacity(n);
    let mut c = 2u64;
    while primes.len() < n {
        if (2..c).take_while(|q| q * q <= c).all(|q| !c.is_multiple_of(q)) {
            primes.push(c);
        }
        c += 1;
    }
    primes.iter().map(|&p| (p as f64).sqrt().fract()).collect()
}

struct Engine<'a> {
    layout: Layout,
    n_samples: usize,
    seed: u64,
    /// Unit-cube point → sample.
    build: &'a (dyn Fn(usize, &[f64], &mut [f64]) + Sync),
    /// Pull a perturbed sample back into the admissible set.
    project: &'a (dyn Fn(&mut [f64]) + Sync),
    /// Per-coordinate perturbation scale for the hill-climb.
    scales: Vec<f64>,
    eval: &'a (dyn Fn(&[f64]) -> (f64, f64) + Sync),
}

impl Engine<'_> {
    /// Returns the worst sample with its `(lhs, rhs)`.
    fn run(&self) -> (Vec<f64>, f64, f64) {
        let dim = self.layout.len();
        // One extra coordinate drives the radial pull towards the origin.
        let alphas = kronecker_alphas(dim + 1);
        let mut shift_rng = path_stream(self.seed, 0);
        let shifts: Vec<f64> = (0..=dim).map(|_| shift_rng.random::<f64>()).collect();
        let point = |i: usize, buf: &mut Vec<f64>, out: &mut Vec<f64>| {
            buf.clear();
            buf.extend((0..=dim).map(|j| (shifts[j] + (i as f64 + 1.0) * alphas[j]).fract()));
            out.resize(dim, 0.0);
            (self.build)(i, buf, out);
        };
        let (best_i, _) = (0..self.n_samples)
            .into_par_iter()
            .fold(
                || (Vec::new(), Vec::new(), (usize::MAX, f64::NEG_INFINITY)),
                |(mut buf, mut out, best), i| {
                    point(i, &mut buf, &mut out);
                    let (l, r) = (self.eval)(&out);
                    let s = score(l, r);
                    let best = if s > best.1 || (s == best.1 && i < best.0) { (i, s) } else { best };
                    (buf, out, best)
                },
            )
            .map(|(_, _, b)| b)
            .reduce(
                || (usize::MAX, f64::NEG_INFINITY),
                |a, b| if b.1 > a.1 || (b.1 == a.1 && b.0 < a.0) { b } else { a },
            );
        let (mut buf, mut cur) = (Vec::new(), Vec::new());
        point(best_i.min(self.n_samples.saturating_sub(1)), &mut buf, &mut cur);
        let (mut l, mut r) = (self.eval)(&cur);
        let mut s = score(l, r);
        if !s.is_finite() {
            return (cur, l, r);
        }
        let mut rng = path_stream(self.seed, 1);
        let mut step = 0.1;
        let mut cand = cur.clone();
        for _ in 0..CLIMB_ITERS {
            for ((c, x), sc) in cand.iter_mut().zip(&cur).zip(&self.scales) {
                let g: f64 = rng.sample(StandardNormal);
                *c = x + step * sc * g;
            }
            (self.project)(&mut cand);
            let (cl, cr) = (self.eval)(&cand);
            let cs = score(cl, cr);
            if cs > s {
                cur.copy_from_slice(&cand);
                (l, r, s) = (cl, cr, cs);
                step = (step * 1.5).min(0.5);
                if !s.is_finite() {
                    break;
                }
            } else {
                step = (step * 0.9).max(1e-6);
            }
        }
        (cur, l, r)
    }
}

fn lerp(range: (f64, f64), u: f64) -> f64 {
    range.0 + (range.1 - range.0) * u
}

fn clamp(v: &mut f64, range: (f64, f64)) {
    *v = v.clamp(range.0, range.1);
}

/// Map `u ∈ [0,1)` to a radial factor concentrating near 0 on a log scale.
fn radial_pull(u: f64) -> f64 {
    10f64.powf(-8.0 * u)
}

/// Cube sampler for single-point checks. `i % 4` selects which of `y`, `z`
/// is pulled towards the origin.
fn cube_builder(s: &BoxSampler, lay: Layout) -> impl Fn(usize, &[f64], &mut [f64]) + Sync + '_ {
    move |i, u, out| {
        let radial = radial_pull(u[lay.len()]);
        out[0] = lerp(s.t, u[0]);
        for j in 0..lay.k {
            out[1 + j] = lerp(s.x, u[1 + j]);
        }
        let (fy, fz) = match i % 4 {
            1 => (radial, 1.0),
            2 => (1.0, radial),
            3 => (radial, radial),
            _ => (1.0, 1.0),
        };
        let ys = 1 + lay.k;
        for j in 0..lay.d {
            out[ys + j] = fy * lerp(s.y, u[ys + j]);
        }
        let zs = ys + lay.d;
        for j in 0..lay.dz {
            out[zs + j] = fz * lerp(s.z, u[zs + j]);
        }
    }
}

fn cube_project(s: &BoxSampler, lay: Layout) -> impl Fn(&mut [f64]) + Sync + '_ {
    move |p| {
        clamp(&mut p[0], s.t);
        for v in &mut p[1..1 + lay.k] {
            clamp(v, s.x);
        }
        for v in &mut p[1 + lay.k..1 + lay.k + lay.d] {
            clamp(v, s.y);
        }
        for v in &mut p[1 + lay.k + lay.d..] {
            clamp(v, s.z);
        }
    }
}

fn cube_scales(s: &BoxSampler, lay: Layout) -> Vec<f64> {
    let mut v = vec![s.t.1 - s.t.0];
    v.extend(std::iter::repeat_n(s.x.1 - s.x.0, lay.k));
    v.extend(std::iter::repeat_n(s.y.1 - s.y.0, lay.d));
    v.extend(std::iter::repeat_n(s.z.1 - s.z.0, lay.dz));
    v
}

fn witness(lay: Layout, p: &[f64], lhs: f64, rhs: f64, level: Option<f64>) -> Witness {
    Witness {
        t: lay.t(p),
        x: lay.x(p).to_vec(),
        y: lay.y(p).to_vec(),
        z: lay.z(p).to_vec(),
        y_prime: lay.pair.then(|| lay.y2(p).to_vec()),
        z_prime: lay.pair.then(|| lay.z2(p).to_vec()),
        level,
        lhs,
        rhs,
    }
}

fn single_point_check(
    name: &str,
    g: &Generator,
    sampler: &BoxSampler,
    n_samples: usize,
    eval: &(dyn Fn(&[f64]) -> (f64, f64) + Sync),
) -> CheckReport {
    let lay = Layout {
        k: sampler.dim_k,
        d: g.dim_d(),
        dz: g.dim_z(),
        pair: false,
    };
    let build = cube_builder(sampler, lay);
    let project = cube_project(sampler, lay);
    let engine = Engine {
        layout: lay,
        n_samples: n_samples.max(1),
        seed: derive_seed(sampler.seed, name),
        build: &build,
        project: &project,
        scales: cube_scales(sampler, lay),
        eval,
    };
    let (p, l, r) = engine.run();
    let w = witness(lay, &p, l, r, None);
    CheckReport {
        assumption: name.into(),
        passed: !w.violates(),
        worst: Some(w),
        n_samples,
        sampled_box: sampler.describe(),
    }
}

/// Continuity in `(y, z)`: the change under perturbations of size `1e-9`
/// must stay below `1e-3·(1 + |f|)`. Non-finite values also fail.
pub fn check_h1(g: &Generator, sampler: &BoxSampler, n_samples: usize) -> CheckReport {
    let lay = Layout {
        k: sampler.dim_k,
        d: g.dim_d(),
        dz: g.dim_z(),
        pair: false,
    };
    let eval = move |p: &[f64]| {
        let (t, x, y, z) = (lay.t(p), lay.x(p), lay.y(p), lay.z(p));
        let f = g.eval(t, x, y, z);
        let eps = 1e-9;
        let mut worst = 0.0f64;
        for dir in [1.0, -1.0] {
            let yp: Vec<f64> = y.iter().enumerate().map(|(i, v)| v + dir * eps * if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
            let zp: Vec<f64> = z.iter().map(|v| v + dir * eps).collect();
            let fp = g.eval(t, x, &yp, &zp);
            let diff: f64 = f.iter().zip(&fp).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
            worst = worst.max(if diff.is_nan() { f64::INFINITY } else { diff });
        }
        (worst, 1e-3 * (1.0 + norm(&f)))
    };
    single_point_check("H.1", g, sampler, n_samples, &eval)
}

/// ⟨y, f⟩ ≤ η + f⁰|y| + M|y|² + K|y||z|.
pub fn check_h2(g: &Generator, env: &AssumptionEnvelope, sampler: &BoxSampler, n_samples: usize) -> CheckReport {
    let lay = Layout {
        k: sampler.dim_k,
        d: g.dim_d(),
        dz: g.dim_z(),
        pair: false,
    };
    let eval = move |p: &[f64]| {
        let (t, x, y, z) = (lay.t(p), lay.x(p), lay.y(p), lay.z(p));
        let f = g.eval(t, x, y, z);
        let (ny, nz) = (norm(y), norm(z));
        let rhs = (env.eta)(t, x) + (env.f0)(t, x) * ny + (env.m)(t, x) * ny * ny + (env.k_proc)(t, x) * ny * nz;
        (dot(y, &f), rhs)
    };
    single_point_check("H.2", g, sampler, n_samples, &eval)
}

/// |f| ≤ η̄ + |y|^α + |z|^α′.
pub fn check_h3(g: &Generator, env: &AssumptionEnvelope, sampler: &BoxSampler, n_samples: usize) -> CheckReport {
    let lay = Layout {
        k: sampler.dim_k,
        d: g.dim_d(),
        dz: g.dim_z(),
        pair: false,
    };
    let eval = move |p: &[f64]| {
        let (t, x, y, z) = (lay.t(p), lay.x(p), lay.y(p), lay.z(p));
        let f = g.eval(t, x, y, z);
        let rhs = (env.eta_bar)(t, x) + norm(y).powf(env.alpha) + norm(z).powf(env.alpha_prime);
        (norm(&f), rhs)
    };
    single_point_check("H.3", g, sampler, n_samples, &eval)
}

/// Write a point of the radius-`level` ball from unit-cube coordinates.
fn ball_point(u: &[f64], level: f64, out: &mut [f64]) {
    let n = out.len();
    if n == 0 {
        return;
    }
    let mut s = 0.0;
    for (o, ui) in out.iter_mut().zip(u) {
        *o = 2.0 * ui - 1.0;
        s += *o * *o;
    }
    let s = s.sqrt();
    if s > 1.0 {
        for o in out.iter_mut() {
            *o /= s;
        }
    }
    for o in out.iter_mut() {
        *o *= level;
    }
}

fn project_ball(v: &mut [f64], level: f64) {
    let n = norm(v);
    if n > level {
        for x in v.iter_mut() {
            *x *= level / n;
        }
    }
}

/// Log-Lipschitz monotonicity at every level in `levels`:
///
/// ⟨y−y′, f(y,z) − f(y′,z′)⟩·1{v ≤ N} ≤ K′|y−y′|² log A_N
///     + √(K′ log A_N)|y−y′||z−z′| + K′ log A_N / A_N
///
/// for `|y|, |y′|, |z|, |z′| ≤ N`, with `(t, x)` drawn from the sampler.
/// Pairs mix uniform draws, near-diagonal pairs and pairs close to the
/// origin. Levels with `N ≤ 1` or `A_N ≤ 1` are skipped. `n_samples` is per
/// level.
pub fn check_h4(
    g: &Generator,
    env: &AssumptionEnvelope,
    sampler: &BoxSampler,
    n_samples: usize,
    levels: &[f64],
) -> CheckReport {
    let lay = Layout {
        k: sampler.dim_k,
        d: g.dim_d(),
        dz: g.dim_z(),
        pair: true,
    };
    let mut worst: Option<Witness> = None;
    let mut passed = true;
    let mut total = 0;
    for &level in levels {
        let a_n = (env.a_n)(level);
        if !(level > 1.0 && a_n > 1.0) {
            continue;
        }
        let log_a = a_n.ln();
        let kp = env.k_prime;
        let (d, dz) = (lay.d, lay.dz);
        let build = move |i: usize, u: &[f64], out: &mut [f64]| {
            let extra = u[lay.len()];
            out[0] = lerp(sampler.t, u[0]);
            for j in 0..lay.k {
                out[1 + j] = lerp(sampler.x, u[1 + j]);
            }
            let ys = 1 + lay.k;
            let (head, tail) = out.split_at_mut(ys + d + dz);
            ball_point(&u[ys..ys + d], level, &mut head[ys..ys + d]);
            ball_point(&u[ys + d..ys + d + dz], level, &mut head[ys + d..]);
            let us = ys + d + dz;
            ball_point(&u[us..us + d], level, &mut tail[..d]);
            ball_point(&u[us + d..us + d + dz], level, &mut tail[d..]);
            match i % 4 {
                // y′ = y + small offset, z′ = z + small offset.
                1 => {
                    let r = radial_pull(extra);
                    for j in 0..d {
                        tail[j] = head[ys + j] + r * tail[j];
                    }
                    for j in 0..dz {
                        tail[d + j] = head[ys + d + j] + r * tail[d + j];
                    }
                }
                // Everything pulled towards the origin.
                2 => {
                    let r = radial_pull(extra);
                    for v in head[ys..].iter_mut().chain(tail.iter_mut()) {
                        *v *= r;
                    }
                }
                // Same z, different y.
                3 => {
                    for j in 0..dz {
                        tail[d + j] = head[ys + d + j];
                    }
                }
                _ => {}
            }
            project_ball(&mut head[ys..ys + d], level);
            project_ball(&mut head[ys + d..], level);
            project_ball(&mut tail[..d], level);
            project_ball(&mut tail[d..], level);
        };
        let project = move |p: &mut [f64]| {
            clamp(&mut p[0], sampler.t);
            for v in &mut p[1..1 + lay.k] {
                clamp(v, sampler.x);
            }
            let ys = 1 + lay.k;
            project_ball(&mut p[ys..ys + d], level);
            project_ball(&mut p[ys + d..ys + d + dz], level);
            project_ball(&mut p[ys + d + dz..ys + 2 * d + dz], level);
            project_ball(&mut p[ys + 2 * d + dz..], level);
        };
        let eval = move |p: &[f64]| {
            let (t, x) = (lay.t(p), lay.x(p));
            let rhs_of = |dy: f64, dzn: f64| kp * dy * dy * log_a + (kp * log_a).sqrt() * dy * dzn + kp * log_a / a_n;
            let (y, z, y2, z2) = (lay.y(p), lay.z(p), lay.y2(p), lay.z2(p));
            let dy: Vec<f64> = y.iter().zip(y2).map(|(a, b)| a - b).collect();
            let dzn = z.iter().zip(z2).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
            let rhs = rhs_of(norm(&dy), dzn);
            if (env.v)(t, x) > level {
                return (0.0, rhs);
            }
            let f1 = g.eval(t, x, y, z);
            let f2 = g.eval(t, x, y2, z2);
            let df: Vec<f64> = f1.iter().zip(&f2).map(|(a, b)| a - b).collect();
            (dot(&dy, &df), rhs)
        };
        let mut scales = vec![sampler.t.1 - sampler.t.0];
        scales.extend(std::iter::repeat_n(sampler.x.1 - sampler.x.0, lay.k));
        scales.extend(std::iter::repeat_n(level, 2 * (d + dz)));
        let engine = Engine {
            layout: lay,
            n_samples: n_samples.max(1),
            seed: derive_seed(sampler.seed, &format!("H.4/{level}")),
            build: &build,
            project: &project,
            scales,
            eval: &eval,
        };
        let (p, l, r) = engine.run();
        total += n_samples;
        let w = witness(lay, &p, l, r, Some(level));
        if w.violates() {
            passed = false;
        }
        let replace = match &worst {
            None => true,
            Some(old) => score(w.lhs, w.rhs) > score(old.lhs, old.rhs),
        };
        if replace {
            worst = Some(w);
        }
    }
    CheckReport {
        assumption: "H.4".into(),
        passed,
        worst,
        n_samples: total,
        sampled_box: format!("{}; pairs in the N-ball for N in {levels:?}", sampler.describe()),
    }
}
