//! Regularized least-squares surface fitting on a regular grid from scattered
//! samples.

use std::collections::BTreeMap;

use faer::prelude::*;
use faer::sparse::linalg::solvers::Llt;
use faer::sparse::{SparseColMat, Triplet};
use faer::Side;
use serde::{Deserialize, Serialize};

use crate::error::RenderError;

pub const DEFAULT_SMOOTHNESS: f64 = 1e-2;
pub const RESIDUAL_TOL: f64 = 1e-8;
/// Smoothness used when `smoothness == 0` leaves nodes without data
/// undetermined; approximates the smoothest exact fit.
pub const ZERO_SMOOTHNESS_FLOOR: f64 = 1e-6;
const REFINE_STEPS: usize = 3;

/// Regular grid. Node `(col, row)` sits at
/// `(origin.0 + col * spacing, origin.1 + row * spacing)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub width: usize,
    pub height: usize,
    pub spacing: f64,
    pub origin: (f64, f64),
    pub smoothness: f64,
}

impl GridSpec {
    pub fn validate(&self) -> Result<(), RenderError> {
        if self.width < 8 || self.height < 8 {
            return Err(RenderError::InvalidSpec(format!(
                "grid {}x{} is smaller than 8x8",
                self.width, self.height
            )));
        }
        if !(self.spacing > 0.0 && self.spacing.is_finite()) {
            return Err(RenderError::InvalidSpec(format!("spacing {}", self.spacing)));
        }
        if !(self.smoothness >= 0.0 && self.smoothness.is_finite()) {
            return Err(RenderError::InvalidSpec(format!("smoothness {}", self.smoothness)));
        }
        if !(self.origin.0.is_finite() && self.origin.1.is_finite()) {
            return Err(RenderError::InvalidSpec("non-finite origin".into()));
        }
        Ok(())
    }

    pub fn node_count(&self) -> usize {
        self.width * self.height
    }

    pub fn node_xy(&self, col: usize, row: usize) -> (f64, f64) {
        (
            self.origin.0 + col as f64 * self.spacing,
            self.origin.1 + row as f64 * self.spacing,
        )
    }

    /// Bilinear stencil of a point inside the grid extent.
    fn stencil(&self, x: f64, y: f64) -> Option<[(usize, f64); 4]> {
        let u = (x - self.origin.0) / self.spacing;
        let v = (y - self.origin.1) / self.spacing;
        let (wmax, hmax) = ((self.width - 1) as f64, (self.height - 1) as f64);
        if !(0.0..=wmax).contains(&u) || !(0.0..=hmax).contains(&v) {
            return None;
        }
        let c = (u.floor() as usize).min(self.width - 2);
        let r = (v.floor() as usize).min(self.height - 2);
        let (tx, ty) = (u - c as f64, v - r as f64);
        let i = r * self.width + c;
        Some([
            (i, (1.0 - tx) * (1.0 - ty)),
            (i + 1, tx * (1.0 - ty)),
            (i + self.width, (1.0 - tx) * ty),
            (i + self.width + 1, tx * ty),
        ])
    }
}

/// Row-major real grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f64>,
}

impl Grid {
    pub fn get(&self, col: usize, row: usize) -> f64 {
        self.data[row * self.width + col]
    }

    /// Bilinear interpolation at fractional node coordinates.
    pub fn sample(&self, u: f64, v: f64) -> f64 {
        let c = (u.floor().max(0.0) as usize).min(self.width - 2);
        let r = (v.floor().max(0.0) as usize).min(self.height - 2);
        let (tx, ty) = (u - c as f64, v - r as f64);
        self.get(c, r) * (1.0 - tx) * (1.0 - ty)
            + self.get(c + 1, r) * tx * (1.0 - ty)
            + self.get(c, r + 1) * (1.0 - tx) * ty
            + self.get(c + 1, r + 1) * tx * ty
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridFit {
    /// One grid per value channel, in input order.
    pub grids: Vec<Grid>,
    /// True where some sample lies within one cell of the node.
    pub mask: Vec<bool>,
    /// Worst relative residual of the normal equations over channels.
    pub residual: f64,
    /// Samples that fell inside the grid.
    pub used_samples: usize,
}

/// Lower triangle of a symmetric sparse matrix being assembled.
#[derive(Default, Clone)]
struct Lower(BTreeMap<(usize, usize), f64>);

impl Lower {
    fn add_outer(&mut self, row: &[(usize, f64)], scale: f64) {
        for &(a, va) in row {
            for &(b, vb) in row {
                if a >= b {
                    *self.0.entry((a, b)).or_default() += scale * va * vb;
                }
            }
        }
    }

    fn mul(&self, x: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|o| *o = 0.0);
        for (&(r, c), &v) in &self.0 {
            out[r] += v * x[c];
            if r != c {
                out[c] += v * x[r];
            }
        }
    }
}

fn regularizer(spec: &GridSpec, lam: f64, a: &mut Lower) {
    let (w, h) = (spec.width, spec.height);
    if lam == 0.0 {
        return;
    }
    for r in 1..h - 1 {
        for c in 1..w - 1 {
            let i = r * w + c;
            a.add_outer(&[(i, 4.0), (i - 1, -1.0), (i + 1, -1.0), (i - w, -1.0), (i + w, -1.0)], lam);
        }
    }
    for c in 1..w - 1 {
        for r in [0, h - 1] {
            let i = r * w + c;
            a.add_outer(&[(i - 1, 1.0), (i, -2.0), (i + 1, 1.0)], lam);
        }
    }
    for r in 1..h - 1 {
        for c in [0, w - 1] {
            let i = r * w + c;
            a.add_outer(&[(i - w, 1.0), (i, -2.0), (i + w, 1.0)], lam);
        }
    }
    for (c, r) in [(0, 0), (w - 2, 0), (0, h - 2), (w - 2, h - 2)] {
        let i = r * w + c;
        a.add_outer(&[(i, 1.0), (i + 1, -1.0), (i + w, -1.0), (i + w + 1, 1.0)], lam);
    }
}

fn factor(a: &Lower, n: usize) -> Result<Llt<usize, f64>, RenderError> {
    let triplets: Vec<Triplet<usize, usize, f64>> =
        a.0.iter().map(|(&(r, c), &v)| Triplet::new(r, c, v)).collect();
    let mat = SparseColMat::<usize, f64>::try_new_from_triplets(n, n, &triplets)
        .map_err(|e| RenderError::Factorization(format!("{e:?}")))?;
    mat.sp_cholesky(Side::Lower)
        .map_err(|e| RenderError::Factorization(format!("{e:?}")))
}

/// Fits one surface per value channel over shared sample positions. All
/// channels reuse a single factorization.
pub fn fit_grid_surfaces(xy: &[(f64, f64)], values: &[&[f64]], spec: &GridSpec) -> Result<GridFit, RenderError> {
    spec.validate()?;
    if values.iter().any(|v| v.len() != xy.len()) {
        return Err(RenderError::InvalidSpec("value channel length differs from sample count".into()));
    }
    let n = spec.node_count();
    let mut a = Lower::default();
    let mut rhs = vec![vec![0.0; n]; values.len()];
    let mut mask = vec![false; n];
    let mut used = 0;
    for (s, &(x, y)) in xy.iter().enumerate() {
        if !(x.is_finite() && y.is_finite()) || values.iter().any(|v| !v[s].is_finite()) {
            continue;
        }
        let Some(st) = spec.stencil(x, y) else { continue };
        used += 1;
        a.add_outer(&st, 1.0);
        for (ch, v) in values.iter().enumerate() {
            for &(i, wt) in &st {
                rhs[ch][i] += wt * v[s];
            }
        }
        mark_support(spec, x, y, &mut mask);
    }
    if used < 3 {
        return Err(RenderError::NoSamples);
    }
    let data = a.clone();
    regularizer(spec, spec.smoothness, &mut a);
    let llt = match factor(&a, n) {
        Err(_) if spec.smoothness == 0.0 => {
            log::debug!("unregularized grid system singular; using smoothness {ZERO_SMOOTHNESS_FLOOR:e}");
            a = data;
            regularizer(spec, ZERO_SMOOTHNESS_FLOOR, &mut a);
            factor(&a, n)?
        }
        r => r?,
    };

    let k = values.len();
    let b = Mat::<f64>::from_fn(n, k, |i, j| rhs[j][i]);
    let mut x = llt.solve(&b);
    let mut ax = vec![0.0; n];
    let mut worst = 0.0f64;
    for j in 0..k {
        let bnorm = rhs[j].iter().map(|v| v * v).sum::<f64>().sqrt();
        let mut res = f64::INFINITY;
        for step in 0..=REFINE_STEPS {
            let col: Vec<f64> = (0..n).map(|i| x[(i, j)]).collect();
            a.mul(&col, &mut ax);
            let r: Vec<f64> = (0..n).map(|i| rhs[j][i] - ax[i]).collect();
            let rnorm = r.iter().map(|v| v * v).sum::<f64>().sqrt();
            res = if bnorm > 0.0 { rnorm / bnorm } else { rnorm };
            if res <= RESIDUAL_TOL * 1e-2 || step == REFINE_STEPS {
                break;
            }
            let corr = llt.solve(Mat::<f64>::from_fn(n, 1, |i, _| r[i]));
            for i in 0..n {
                x[(i, j)] += corr[(i, 0)];
            }
        }
        worst = worst.max(res);
    }
    if !(worst <= RESIDUAL_TOL) {
        return Err(RenderError::SolverDiverged { residual: worst });
    }
    let grids = (0..k)
        .map(|j| Grid {
            width: spec.width,
            height: spec.height,
            data: (0..n).map(|i| x[(i, j)]).collect(),
        })
        .collect();
    Ok(GridFit {
        grids,
        mask,
        residual: worst,
        used_samples: used,
    })
}

/// Single-channel convenience over `(x, y, value)` samples.
pub fn fit_grid_surface(samples: &[(f64, f64, f64)], spec: &GridSpec) -> Result<(Grid, Vec<bool>), RenderError> {
    let xy: Vec<(f64, f64)> = samples.iter().map(|s| (s.0, s.1)).collect();
    let v: Vec<f64> = samples.iter().map(|s| s.2).collect();
    let mut fit = fit_grid_surfaces(&xy, &[&v], spec)?;
    Ok((fit.grids.remove(0), fit.mask))
}

fn mark_support(spec: &GridSpec, x: f64, y: f64, mask: &mut [bool]) {
    let u = (x - spec.origin.0) / spec.spacing;
    let v = (y - spec.origin.1) / spec.spacing;
    let c0 = (u - 1.0).ceil().max(0.0) as usize;
    let c1 = ((u + 1.0).floor() as usize).min(spec.width - 1);
    let r0 = (v - 1.0).ceil().max(0.0) as usize;
    let r1 = ((v + 1.0).floor() as usize).min(spec.height - 1);
    for r in r0..=r1 {
        for c in c0..=c1 {
            mask[r * spec.width + c] = true;
        }
    }
}

/// Sum of squared regularizer terms of a grid (without the smoothness factor).
pub fn roughness(grid: &Grid) -> f64 {
    let (w, h) = (grid.width, grid.height);
    let z = |c: usize, r: usize| grid.data[r * w + c];
    let mut s = 0.0;
    for r in 1..h - 1 {
        for c in 1..w - 1 {
            let l = 4.0 * z(c, r) - z(c - 1, r) - z(c + 1, r) - z(c, r - 1) - z(c, r + 1);
            s += l * l;
        }
    }
    for c in 1..w - 1 {
        for r in [0, h - 1] {
            let d = z(c - 1, r) - 2.0 * z(c, r) + z(c + 1, r);
            s += d * d;
        }
    }
    for r in 1..h - 1 {
        for c in [0, w - 1] {
            let d = z(c, r - 1) - 2.0 * z(c, r) + z(c, r + 1);
            s += d * d;
        }
    }
    for (c, r) in [(0, 0), (w - 2, 0), (0, h - 2), (w - 2, h - 2)] {
        let t = z(c, r) - z(c + 1, r) - z(c, r + 1) + z(c + 1, r + 1);
        s += t * t;
    }
    s
}
