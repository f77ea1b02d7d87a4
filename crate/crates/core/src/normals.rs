//! PCA surface normals over exact k-nearest neighborhoods.

use nalgebra::{Matrix3, SymmetricEigen, Vector3};

use crate::cloud::PointCloud;
use crate::error::GeometryError;
use crate::kdtree::KdTree;
use crate::par;

/// Rank test for a neighborhood covariance: the middle eigenvalue must exceed
/// this fraction of the largest one.
const RANK_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct NormalEstimate {
    /// Input cloud with normals attached.
    pub cloud: PointCloud,
    /// Indices whose neighborhood was rank-deficient; their normal is +z.
    pub flagged: Vec<usize>,
}

/// Estimates a unit normal per point from the covariance of the point and its
/// `k` nearest neighbors. Normals are oriented toward +z (`n_z >= 0`).
pub fn compute_normals(cloud: &PointCloud, k: usize) -> Result<NormalEstimate, GeometryError> {
    if k < 3 {
        return Err(GeometryError::InvalidK(k));
    }
    if cloud.len() < k + 1 {
        return Err(GeometryError::TooFewPoints {
            needed: k + 1,
            found: cloud.len(),
        });
    }
    let points = cloud.points();
    let tree = KdTree::new(points);
    let results = par::map(points, |p| {
        let nbrs = tree.nearest(p, k + 1);
        local_normal(nbrs.iter().map(|&i| points[i].coords))
    });
    let mut normals = Vec::with_capacity(results.len());
    let mut flagged = Vec::new();
    for (i, r) in results.into_iter().enumerate() {
        match r {
            Some(n) => normals.push(n),
            None => {
                normals.push(Vector3::z());
                flagged.push(i);
            }
        }
    }
    if !flagged.is_empty() {
        log::warn!("{} points have degenerate neighborhoods; normals set to +z", flagged.len());
    }
    let mut out = cloud.clone();
    out.set_normals(normals)?;
    Ok(NormalEstimate {
        cloud: out,
        flagged,
    })
}

/// Smallest-eigenvalue eigenvector of the neighborhood covariance, or `None`
/// when the covariance has rank < 2.
pub(crate) fn local_normal(nbrs: impl Iterator<Item = Vector3<f64>> + Clone) -> Option<Vector3<f64>> {
    let (n, sum) = nbrs
        .clone()
        .fold((0usize, Vector3::zeros()), |(n, s), p| (n + 1, s + p));
    let mean = sum / n as f64;
    let cov = nbrs.fold(Matrix3::zeros(), |acc, p| {
        let d = p - mean;
        acc + d * d.transpose()
    }) / n as f64;
    let eig = SymmetricEigen::new(cov);
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let (mid, hi) = (eig.eigenvalues[order[1]], eig.eigenvalues[order[2]]);
    if hi <= 0.0 || mid <= RANK_TOL * hi {
        return None;
    }
    let mut normal: Vector3<f64> = eig.eigenvectors.column(order[0]).into_owned();
    normal.normalize_mut();
    if normal.z < 0.0 {
        normal = -normal;
    }
    Some(normal)
}
