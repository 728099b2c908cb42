//! Regression bases on the forward state and the least-squares fit used for
//! conditional expectations.

use nalgebra::{DMatrix, SymmetricEigen};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Rows per partial sum when assembling normal equations. Fixed so the
/// summation order does not depend on the thread count.
const CHUNK_ROWS: usize = 2048;

/// Eigenvalues below this fraction of the largest count as rank loss.
const RANK_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum RegressionBasis {
    /// All monomials of total degree ≤ `degree` in the standardised state.
    GlobalPoly { degree: usize },
    /// Tensor grid of per-axis quantile cells, constant or affine per cell.
    LocalPartition { n_cells: usize, degree: usize },
}

impl Default for RegressionBasis {
    fn default() -> Self {
        Self::GlobalPoly { degree: 3 }
    }
}

impl RegressionBasis {
    pub fn validate(&self, k: usize) -> Result<()> {
        let bad = |r: String| {
            Err(Error::InvalidParameters {
                kind: "basis".into(),
                reason: r,
            })
        };
        match *self {
            Self::GlobalPoly { degree } if degree > 12 => bad(format!("degree {degree} is too large")),
            Self::LocalPartition { degree, .. } if degree > 1 => bad("local_partition supports degree 0 or 1".into()),
            Self::LocalPartition { n_cells, .. } if n_cells == 0 || (n_cells as f64).powi(k as i32) > 4096.0 => {
                bad(format!("{n_cells}^{k} cells is out of range"))
            }
            _ => Ok(()),
        }
    }
}

/// Basis with standardisation and cell edges fitted to one sample of states.
#[derive(Debug, Clone)]
pub struct FittedBasis {
    k: usize,
    mean: Vec<f64>,
    /// 0 marks an axis without spread; its standardised value is 0.
    inv_std: Vec<f64>,
    kind: Fitted,
}

#[derive(Debug, Clone)]
enum Fitted {
    Poly { exps: Vec<Vec<u32>> },
    Local { edges: Vec<Vec<f64>>, n_cells: usize, affine: bool },
}

fn multi_indices(k: usize, degree: usize) -> Vec<Vec<u32>> {
    let mut out = vec![vec![0u32; k]];
    for total in 1..=degree {
        let mut cur = vec![0u32; k];
        fn rec(a: usize, left: u32, cur: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
            if a + 1 == cur.len() {
                cur[a] = left;
                out.push(cur.clone());
                return;
            }
            for e in (0..=left).rev() {
                cur[a] = e;
                rec(a + 1, left - e, cur, out);
            }
        }
        if k > 0 {
            rec(0, total as u32, &mut cur, &mut out);
        }
    }
    out
}

impl FittedBasis {
    /// `xs` is `[n × k]` row-major.
    pub fn fit(spec: &RegressionBasis, xs: &[f64], n: usize, k: usize) -> Self {
        let mut mean = vec![0.0; k];
        let mut inv_std = vec![0.0; k];
        for a in 0..k {
            let m = xs.iter().skip(a).step_by(k.max(1)).take(n).sum::<f64>() / n as f64;
            let v = xs.iter().skip(a).step_by(k.max(1)).take(n).map(|x| (x - m) * (x - m)).sum::<f64>() / n as f64;
            mean[a] = m;
            let sd = v.sqrt();
            inv_std[a] = if sd > 1e-12 * (1.0 + m.abs()) { 1.0 / sd } else { 0.0 };
        }
        let kind = match *spec {
            RegressionBasis::GlobalPoly { degree } => Fitted::Poly {
                exps: multi_indices(k, degree),
            },
            RegressionBasis::LocalPartition { n_cells, degree } => {
                let edges = (0..k)
                    .map(|a| {
                        let mut col: Vec<f64> = (0..n).map(|p| xs[p * k + a]).collect();
                        col.sort_by(f64::total_cmp);
                        (1..n_cells).map(|j| col[(j * n / n_cells).min(n - 1)]).collect()
                    })
                    .collect();
                Fitted::Local {
                    edges,
                    n_cells,
                    affine: degree == 1,
                }
            }
        };
        Self { k, mean, inv_std, kind }
    }

    pub fn len(&self) -> usize {
        match &self.kind {
            Fitted::Poly { exps } => exps.len(),
            Fitted::Local { n_cells, affine, .. } => n_cells.pow(self.k as u32) * (1 + if *affine { self.k } else { 0 }),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn n_cells(&self) -> usize {
        match &self.kind {
            Fitted::Poly { .. } => 1,
            Fitted::Local { n_cells, .. } => n_cells.pow(self.k as u32),
        }
    }

    pub fn cell(&self, x: &[f64]) -> usize {
        match &self.kind {
            Fitted::Poly { .. } => 0,
            Fitted::Local { edges, n_cells, .. } => edges.iter().zip(x).fold(0, |acc, (e, xi)| {
                acc * n_cells + e.partition_point(|v| v <= xi)
            }),
        }
    }

    fn standardise(&self, a: usize, x: f64) -> f64 {
        (x - self.mean[a]) * self.inv_std[a]
    }

    pub fn eval_into(&self, x: &[f64], out: &mut [f64]) {
        match &self.kind {
            Fitted::Poly { exps } => {
                for (o, e) in out.iter_mut().zip(exps) {
                    *o = e
                        .iter()
                        .enumerate()
                        .map(|(a, &p)| if p == 0 { 1.0 } else { self.standardise(a, x[a]).powi(p as i32) })
                        .product();
                }
            }
            Fitted::Local { affine, .. } => {
                out.fill(0.0);
                let width = 1 + if *affine { self.k } else { 0 };
                let base = self.cell(x) * width;
                out[base] = 1.0;
                if *affine {
                    for a in 0..self.k {
                        out[base + 1 + a] = self.standardise(a, x[a]);
                    }
                }
            }
        }
    }
}

/// Least-squares coefficients for `resp ≈ design · coef`.
#[derive(Debug, Clone)]
pub struct LsFit {
    /// `[cols × d]`; rows of dropped columns are zero.
    pub coef: Vec<f64>,
    pub condition: f64,
    pub rank_deficient: bool,
}

/// Row-major `[n × cols]` design, `[n × d]` responses.
pub fn least_squares(design: &[f64], n: usize, cols: usize, resp: &[f64], d: usize) -> LsFit {
    let parts: Vec<(Vec<f64>, Vec<f64>)> = design
        .par_chunks(CHUNK_ROWS * cols)
        .zip(resp.par_chunks(CHUNK_ROWS * d))
        .map(|(rows, rs)| {
            let mut g = vec![0.0; cols * cols];
            let mut b = vec![0.0; cols * d];
            for (row, r) in rows.chunks_exact(cols).zip(rs.chunks_exact(d)) {
                for i in 0..cols {
                    let ri = row[i];
                    if ri == 0.0 {
                        continue;
                    }
                    for j in i..cols {
                        g[i * cols + j] += ri * row[j];
                    }
                    for c in 0..d {
                        b[i * d + c] += ri * r[c];
                    }
                }
            }
            (g, b)
        })
        .collect();
    let mut g = vec![0.0; cols * cols];
    let mut b = vec![0.0; cols * d];
    for (pg, pb) in parts {
        for (x, y) in g.iter_mut().zip(pg) {
            *x += y;
        }
        for (x, y) in b.iter_mut().zip(pb) {
            *x += y;
        }
    }
    debug_assert_eq!(design.len(), n * cols);
    let kept: Vec<usize> = (0..cols).filter(|&i| g[i * cols + i] > 0.0).collect();
    let m = kept.len();
    let mut coef = vec![0.0; cols * d];
    if m == 0 {
        return LsFit {
            coef,
            condition: f64::INFINITY,
            rank_deficient: true,
        };
    }
    let gm = DMatrix::from_fn(m, m, |i, j| {
        let (a, c) = (kept[i.min(j)], kept[i.max(j)]);
        g[a * cols + c]
    });
    let eig = SymmetricEigen::new(gm);
    let lmax = eig.eigenvalues.iter().cloned().fold(0.0, f64::max);
    let lmin = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
    let cut = lmax * RANK_TOL;
    let rank_deficient = lmin <= cut;
    for c in 0..d {
        let rhs = nalgebra::DVector::from_fn(m, |i, _| b[kept[i] * d + c]);
        let proj = eig.eigenvectors.transpose() * rhs;
        let scaled = nalgebra::DVector::from_fn(m, |i, _| {
            let l = eig.eigenvalues[i];
            if l > cut {
                proj[i] / l
            } else {
                0.0
            }
        });
        let sol = &eig.eigenvectors * scaled;
        for (i, &col) in kept.iter().enumerate() {
            coef[col * d + c] = sol[i];
        }
    }
    LsFit {
        coef,
        condition: if lmin > 0.0 { lmax / lmin } else { f64::INFINITY },
        rank_deficient,
    }
}
