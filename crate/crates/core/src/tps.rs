//! Thin-plate-spline bending energy between corresponded faces.
//!
//! For a source face with subsampled points `F^a`, the kernel matrix is
//! `K(a,b) = r² ln r` with `r = ‖F^a − F^b‖` and `K(a,a) = 0`, and the affine
//! basis is `S = [1 | x | y | z]`. The bending matrix `B` is the upper-left
//! `P'×P'` block of the inverse of
//!
//! ```text
//! | K   S |
//! | Sᵀ  0 |
//! ```
//!
//! and the energy to warp the source onto a target is
//! `γ = xᵀBx + yᵀBy + zᵀBz` over the target's coordinates. `B` annihilates
//! affine functions of the source points, so rigid and affine changes cost
//! nothing.
//!
//! The inverse is formed on a rescaled system: the upper-left block is
//! unchanged when `S` is right-multiplied by any invertible matrix (so its
//! columns are centered and scaled), and scaling `K` by `1/α` scales the block
//! by `α`, which is undone afterward. This keeps the condition estimate
//! meaningful for millimeter-scale coordinates.

use nalgebra::{DMatrix, DVector, Point3, SVD};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cloud::{CorrespondedFace, PointCloud};
use crate::error::TpsError;

/// Condition estimate (1-norm) above which the stacked system is singular.
pub const MAX_CONDITION: f64 = 1e14;
/// Points closer than this (mm) count as duplicates.
pub const DUPLICATE_TOL: f64 = 1e-9;
/// Relative size of the diagonal shift used on a singular retry.
pub const RETRY_SHIFT: f64 = 1e-10;

/// Which face supplies the affine columns `[1 | x | y | z]` of the stacked
/// system. The standard construction uses the source face.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AffineBasis {
    #[default]
    Source,
    Target,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FaceRef {
    pub identity_id: u32,
    pub expression_id: u32,
}

impl From<&CorrespondedFace> for FaceRef {
    fn from(f: &CorrespondedFace) -> Self {
        Self {
            identity_id: f.identity_id,
            expression_id: f.expression_id,
        }
    }
}

#[derive(Debug, Clone)]
pub struct BendingMatrix {
    matrix: DMatrix<f64>,
    source_indices: Vec<usize>,
    source_face: Option<FaceRef>,
    condition: f64,
    regularized: bool,
}

impl BendingMatrix {
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn source_indices(&self) -> &[usize] {
        &self.source_indices
    }

    pub fn source_face(&self) -> Option<FaceRef> {
        self.source_face
    }

    /// 1-norm condition estimate of the (rescaled) stacked system.
    pub fn condition(&self) -> f64 {
        self.condition
    }

    /// True when the diagonal shift retry was needed.
    pub fn regularized(&self) -> bool {
        self.regularized
    }

    pub fn size(&self) -> usize {
        self.matrix.nrows()
    }

    /// `γ` for target coordinates already gathered at the subsample indices.
    pub fn energy_of_points(&self, target: &[Point3<f64>]) -> f64 {
        assert_eq!(target.len(), self.size(), "target length must match subsample size");
        let n = target.len() as f64;
        let mean = target.iter().fold(nalgebra::Vector3::zeros(), |a, p| a + p.coords) / n;
        let mut gamma = 0.0;
        for axis in 0..3 {
            // B annihilates constants; centering only reduces cancellation.
            let v = DVector::from_iterator(target.len(), target.iter().map(|p| p[axis] - mean[axis]));
            gamma += v.dot(&(&self.matrix * &v));
        }
        if gamma < 0.0 {
            if gamma < -1e-9 * self.scale_hint(target) {
                log::warn!("bending energy {gamma:e} below zero; clamped");
            }
            gamma = 0.0;
        }
        gamma
    }

    fn scale_hint(&self, target: &[Point3<f64>]) -> f64 {
        let c2: f64 = target.iter().map(|p| p.coords.norm_squared()).sum();
        (self.matrix.norm() * c2).max(1.0)
    }
}

fn tps_kernel(r: f64) -> f64 {
    if r == 0.0 {
        0.0
    } else {
        r * r * r.ln()
    }
}

fn gather(cloud: &PointCloud, indices: &[usize]) -> Result<Vec<Point3<f64>>, TpsError> {
    indices
        .iter()
        .map(|&i| {
            cloud.points().get(i).copied().ok_or(TpsError::IndexMismatch {
                index: i,
                vertices: cloud.len(),
            })
        })
        .collect()
}

fn check_duplicates(points: &[Point3<f64>]) -> Result<(), TpsError> {
    for a in 0..points.len() {
        for b in a + 1..points.len() {
            if (points[a] - points[b]).norm() <= DUPLICATE_TOL {
                return Err(TpsError::DuplicatePoints(a, b));
            }
        }
    }
    Ok(())
}

/// Centered, RMS-scaled coordinates; errors when the points are coplanar.
fn affine_columns(points: &[Point3<f64>]) -> Result<DMatrix<f64>, TpsError> {
    let n = points.len();
    let mean = points.iter().fold(nalgebra::Vector3::zeros(), |a, p| a + p.coords) / n as f64;
    let rms = (points.iter().map(|p| (p.coords - mean).norm_squared()).sum::<f64>() / n as f64).sqrt();
    if rms == 0.0 {
        return Err(TpsError::Coplanar);
    }
    let mut s = DMatrix::zeros(n, 4);
    for (a, p) in points.iter().enumerate() {
        let d = (p.coords - mean) / rms;
        s[(a, 0)] = 1.0;
        s[(a, 1)] = d.x;
        s[(a, 2)] = d.y;
        s[(a, 3)] = d.z;
    }
    let sv = SVD::new(s.columns(1, 3).into_owned(), false, false).singular_values;
    let (lo, hi) = (sv.min(), sv.max());
    if hi == 0.0 || lo <= 1e-10 * hi {
        return Err(TpsError::Coplanar);
    }
    Ok(s)
}

fn one_norm(m: &DMatrix<f64>) -> f64 {
    m.column_iter()
        .map(|c| c.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Builds `B` with `K` from `kernel_points` and `S` from `basis_points`.
fn build(
    kernel_points: &[Point3<f64>],
    basis_points: &[Point3<f64>],
) -> Result<(DMatrix<f64>, f64, bool), TpsError> {
    let n = kernel_points.len();
    if n < 5 {
        return Err(TpsError::TooFewPoints(n));
    }
    check_duplicates(kernel_points)?;
    let s = affine_columns(basis_points)?;

    let mut k = DMatrix::zeros(n, n);
    let mut kmax = 0.0f64;
    for a in 0..n {
        for b in a + 1..n {
            let v = tps_kernel((kernel_points[a] - kernel_points[b]).norm());
            k[(a, b)] = v;
            k[(b, a)] = v;
            kmax = kmax.max(v.abs());
        }
    }
    let alpha = if kmax > 0.0 { kmax } else { 1.0 };
    k /= alpha;

    let solve = |shift: f64| -> Option<(DMatrix<f64>, f64)> {
        let mut m = DMatrix::zeros(n + 4, n + 4);
        m.view_mut((0, 0), (n, n)).copy_from(&k);
        m.view_mut((0, n), (n, 4)).copy_from(&s);
        m.view_mut((n, 0), (4, n)).copy_from(&s.transpose());
        for a in 0..n {
            m[(a, a)] += shift;
        }
        let inv = m.clone().lu().try_inverse()?;
        if !inv.iter().all(|v| v.is_finite()) {
            return None;
        }
        let cond = one_norm(&m) * one_norm(&inv);
        (cond <= MAX_CONDITION).then_some((inv, cond))
    };

    let (inv, cond, regularized) = match solve(0.0) {
        Some((inv, cond)) => (inv, cond, false),
        None => {
            let scale = k.iter().map(|v| v.abs()).sum::<f64>() / (n * n) as f64;
            let shift = RETRY_SHIFT * scale.max(f64::MIN_POSITIVE);
            log::warn!("stacked TPS system singular; retrying with diagonal shift {shift:e}");
            match solve(shift) {
                Some((inv, cond)) => (inv, cond, true),
                None => {
                    return Err(TpsError::SingularSystem {
                        condition: f64::INFINITY,
                    })
                }
            }
        }
    };
    let block = inv.view((0, 0), (n, n));
    let b = (&block + block.transpose()) * (0.5 / alpha);
    Ok((b, cond, regularized))
}

/// Bending matrix of `source` over the subsampled vertex indices, with the
/// affine basis taken from the source itself.
pub fn bending_matrix(
    source: &CorrespondedFace,
    subsample: &[usize],
) -> Result<BendingMatrix, TpsError> {
    let pts = gather(&source.cloud, subsample)?;
    let (matrix, condition, regularized) = build(&pts, &pts)?;
    Ok(BendingMatrix {
        matrix,
        source_indices: subsample.to_vec(),
        source_face: Some(source.into()),
        condition,
        regularized,
    })
}

/// Bending matrix from raw points (kernel and basis both from `points`).
pub fn bending_matrix_from_points(points: &[Point3<f64>]) -> Result<BendingMatrix, TpsError> {
    let (matrix, condition, regularized) = build(points, points)?;
    Ok(BendingMatrix {
        matrix,
        source_indices: (0..points.len()).collect(),
        source_face: None,
        condition,
        regularized,
    })
}

/// Bending matrix with `K` from `source` and `S` from `basis_face`.
pub fn bending_matrix_with_basis(
    source: &CorrespondedFace,
    basis_face: &CorrespondedFace,
    subsample: &[usize],
) -> Result<BendingMatrix, TpsError> {
    let pts = gather(&source.cloud, subsample)?;
    let basis = gather(&basis_face.cloud, subsample)?;
    let (matrix, condition, regularized) = build(&pts, &basis)?;
    Ok(BendingMatrix {
        matrix,
        source_indices: subsample.to_vec(),
        source_face: Some(source.into()),
        condition,
        regularized,
    })
}

/// `γ = xᵀBx + yᵀBy + zᵀBz` over the target's subsampled coordinates,
/// clamped at zero.
pub fn bending_energy(b: &BendingMatrix, target: &CorrespondedFace) -> Result<f64, TpsError> {
    let pts = gather(&target.cloud, &b.source_indices)?;
    Ok(b.energy_of_points(&pts))
}

/// Energy required to deform `from` onto `to`.
pub fn directed_energy(
    from: &CorrespondedFace,
    to: &CorrespondedFace,
    subsample: &[usize],
    basis: AffineBasis,
) -> Result<f64, TpsError> {
    if from.vertex_count() != to.vertex_count() {
        return Err(TpsError::VertexCountMismatch(from.vertex_count(), to.vertex_count()));
    }
    if gather(&from.cloud, subsample)? == gather(&to.cloud, subsample)? {
        return Ok(0.0);
    }
    let b = match basis {
        AffineBasis::Source => bending_matrix(from, subsample)?,
        AffineBasis::Target => bending_matrix_with_basis(from, to, subsample)?,
    };
    bending_energy(&b, to)
}

/// Symmetrized shape distance `(γ_ij + γ_ji) / 2`.
pub fn shape_distance(
    face_i: &CorrespondedFace,
    face_j: &CorrespondedFace,
    subsample: &[usize],
    basis: AffineBasis,
) -> Result<f64, TpsError> {
    let gij = directed_energy(face_i, face_j, subsample, basis)?;
    let gji = directed_energy(face_j, face_i, subsample, basis)?;
    Ok(symmetrize(gij, gji))
}

/// Floating-point addition commutes, so argument order does not change the bits.
#[inline]
pub fn symmetrize(gij: f64, gji: f64) -> f64 {
    (gij + gji) / 2.0
}

/// Farthest-point subsample of `count` indices, started from a seeded random
/// vertex. Returned sorted ascending; all indices when `count >= len`.
pub fn farthest_point_subsample(points: &[Point3<f64>], count: usize, seed: u64) -> Vec<usize> {
    let n = points.len();
    if count >= n {
        return (0..n).collect();
    }
    if count == 0 {
        return Vec::new();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let start = rng.random_range(0..n);
    let mut chosen = vec![start];
    let mut min_d2: Vec<f64> = points.iter().map(|p| (p - points[start]).norm_squared()).collect();
    while chosen.len() < count {
        let mut best = 0usize;
        let mut best_d = f64::NEG_INFINITY;
        for (i, &d) in min_d2.iter().enumerate() {
            if d > best_d {
                best_d = d;
                best = i;
            }
        }
        chosen.push(best);
        let pb = points[best];
        for (i, d) in min_d2.iter_mut().enumerate() {
            let nd = (points[i] - pb).norm_squared();
            if nd < *d {
                *d = nd;
            }
        }
    }
    chosen.sort_unstable();
    chosen
}
