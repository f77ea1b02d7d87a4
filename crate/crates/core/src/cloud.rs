//! Point clouds, corresponded faces and the rigid/spherical helpers around them.
//!
//! Coordinates are millimeters. Normals, when present, are unit vectors and
//! follow the sensor-facing convention (`n_z >= 0` in the frame they were
//! estimated in).

use nalgebra::{Matrix3, Point3, Vector3};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

use crate::error::GeometryError;

/// Tolerance on `|‖n‖ - 1|` accepted when storing normals.
pub const UNIT_TOL: f64 = 1e-6;
/// Tolerance on `RᵀR = I` and `det R = 1` for rigid transforms.
pub const ROTATION_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Default)]
pub struct PointCloud {
    points: Vec<Point3<f64>>,
    normals: Option<Vec<Vector3<f64>>>,
}

impl PointCloud {
    /// Builds a cloud without normals, rejecting non-finite coordinates.
    pub fn new(points: Vec<Point3<f64>>) -> Result<Self, GeometryError> {
        if let Some(i) = points.iter().position(|p| !p.coords.iter().all(|c| c.is_finite())) {
            return Err(GeometryError::NonFinite(i));
        }
        Ok(Self {
            points,
            normals: None,
        })
    }

    /// Builds a cloud with normals. Normals are renormalized; zero or
    /// non-finite normals are rejected.
    pub fn with_normals(
        points: Vec<Point3<f64>>,
        normals: Vec<Vector3<f64>>,
    ) -> Result<Self, GeometryError> {
        let mut cloud = Self::new(points)?;
        cloud.set_normals(normals)?;
        Ok(cloud)
    }

    pub fn set_normals(&mut self, normals: Vec<Vector3<f64>>) -> Result<(), GeometryError> {
        if normals.len() != self.points.len() {
            return Err(GeometryError::NormalCount {
                points: self.points.len(),
                normals: normals.len(),
            });
        }
        let mut out = Vec::with_capacity(normals.len());
        for (i, n) in normals.into_iter().enumerate() {
            let norm = n.norm();
            if !norm.is_finite() || norm == 0.0 {
                return Err(GeometryError::BadNormal(i));
            }
            out.push(n / norm);
        }
        self.normals = Some(out);
        Ok(())
    }

    pub fn clear_normals(&mut self) {
        self.normals = None;
    }

    pub fn points(&self) -> &[Point3<f64>] {
        &self.points
    }

    pub fn normals(&self) -> Option<&[Vector3<f64>]> {
        self.normals.as_deref()
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn centroid(&self) -> Point3<f64> {
        if self.points.is_empty() {
            return Point3::origin();
        }
        let sum = self
            .points
            .iter()
            .fold(Vector3::zeros(), |acc, p| acc + p.coords);
        Point3::from(sum / self.points.len() as f64)
    }

    /// Axis-aligned bounding box `(min, max)`.
    pub fn bounds(&self) -> Option<(Point3<f64>, Point3<f64>)> {
        let first = *self.points.first()?;
        Some(self.points.iter().fold((first, first), |(lo, hi), p| {
            (lo.inf(p), hi.sup(p))
        }))
    }

    /// Sub-cloud made of the given indices, normals carried along.
    pub fn select(&self, indices: &[usize]) -> PointCloud {
        PointCloud {
            points: indices.iter().map(|&i| self.points[i]).collect(),
            normals: self
                .normals
                .as_ref()
                .map(|n| indices.iter().map(|&i| n[i]).collect()),
        }
    }
}

/// A face whose vertex `p` denotes the same anatomical point on every face of
/// its set.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrespondedFace {
    pub cloud: PointCloud,
    pub identity_id: u32,
    /// 0 is the neutral expression.
    pub expression_id: u32,
}

impl CorrespondedFace {
    pub fn new(cloud: PointCloud, identity_id: u32, expression_id: u32) -> Self {
        Self {
            cloud,
            identity_id,
            expression_id,
        }
    }

    pub fn vertex_count(&self) -> usize {
        self.cloud.len()
    }

    pub fn is_neutral(&self) -> bool {
        self.expression_id == 0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FaceSet {
    faces: Vec<CorrespondedFace>,
    vertex_count: usize,
}

impl FaceSet {
    /// Validates a common vertex count. Identity labels must form `[0, N)`.
    pub fn new(faces: Vec<CorrespondedFace>) -> Result<Self, GeometryError> {
        let set = Self::new_unlabelled(faces)?;
        let ids = set.identity_ids();
        if ids.iter().enumerate().any(|(k, &id)| k as u32 != id) {
            return Err(GeometryError::NonContiguousIdentities);
        }
        Ok(set)
    }

    /// Like [`FaceSet::new`] but accepts arbitrary identity labels, e.g. a
    /// synthetic set numbered above its parents.
    pub fn new_unlabelled(faces: Vec<CorrespondedFace>) -> Result<Self, GeometryError> {
        let vertex_count = faces.first().map(|f| f.vertex_count()).unwrap_or(0);
        for f in &faces {
            if f.vertex_count() != vertex_count {
                return Err(GeometryError::VertexCountMismatch {
                    expected: vertex_count,
                    found: f.vertex_count(),
                });
            }
        }
        Ok(Self {
            faces,
            vertex_count,
        })
    }

    pub fn faces(&self) -> &[CorrespondedFace] {
        &self.faces
    }

    pub fn into_faces(self) -> Vec<CorrespondedFace> {
        self.faces
    }

    pub fn vertex_count(&self) -> usize {
        self.vertex_count
    }

    pub fn len(&self) -> usize {
        self.faces.len()
    }

    pub fn is_empty(&self) -> bool {
        self.faces.is_empty()
    }

    /// Sorted distinct identity labels.
    pub fn identity_ids(&self) -> Vec<u32> {
        let mut ids: Vec<u32> = self.faces.iter().map(|f| f.identity_id).collect();
        ids.sort_unstable();
        ids.dedup();
        ids
    }

    pub fn identity_count(&self) -> usize {
        self.identity_ids().len()
    }

    pub fn max_identity(&self) -> Option<u32> {
        self.faces.iter().map(|f| f.identity_id).max()
    }

    pub fn find(&self, identity: u32, expression: u32) -> Option<&CorrespondedFace> {
        self.faces
            .iter()
            .find(|f| f.identity_id == identity && f.expression_id == expression)
    }

    /// One representative per identity: the neutral scan when present,
    /// otherwise the lowest expression id. Ordered by identity.
    pub fn representatives(&self) -> Vec<&CorrespondedFace> {
        let mut best: BTreeMap<u32, &CorrespondedFace> = BTreeMap::new();
        for f in &self.faces {
            best.entry(f.identity_id)
                .and_modify(|cur| {
                    if f.expression_id < cur.expression_id {
                        *cur = f;
                    }
                })
                .or_insert(f);
        }
        best.into_values().collect()
    }

    /// Expression ids available for an identity, sorted.
    pub fn expressions_of(&self, identity: u32) -> Vec<u32> {
        let mut e: Vec<u32> = self
            .faces
            .iter()
            .filter(|f| f.identity_id == identity)
            .map(|f| f.expression_id)
            .collect();
        e.sort_unstable();
        e.dedup();
        e
    }
}

/// Proper rotation plus translation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidTransform {
    rotation: Matrix3<f64>,
    translation: Vector3<f64>,
}

impl RigidTransform {
    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Result<Self, GeometryError> {
        if !rotation.iter().all(|v| v.is_finite()) || !translation.iter().all(|v| v.is_finite()) {
            return Err(GeometryError::NotRotation);
        }
        let gram = rotation.transpose() * rotation - Matrix3::identity();
        if gram.amax() > ROTATION_TOL || (rotation.determinant() - 1.0).abs() > ROTATION_TOL {
            return Err(GeometryError::NotRotation);
        }
        Ok(Self {
            rotation,
            translation,
        })
    }

    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    pub fn rotation(&self) -> &Matrix3<f64> {
        &self.rotation
    }

    pub fn translation(&self) -> &Vector3<f64> {
        &self.translation
    }

    /// Rotates points and normals; translates points only.
    pub fn apply(&self, cloud: &PointCloud) -> PointCloud {
        let points = cloud
            .points
            .iter()
            .map(|p| Point3::from(self.rotation * p.coords + self.translation))
            .collect();
        let normals = cloud
            .normals
            .as_ref()
            .map(|ns| ns.iter().map(|n| self.rotation * n).collect());
        PointCloud { points, normals }
    }
}

/// Applies a rigid transform after validating the rotation.
pub fn apply_rigid(
    cloud: &PointCloud,
    rotation: Matrix3<f64>,
    translation: Vector3<f64>,
) -> Result<PointCloud, GeometryError> {
    Ok(RigidTransform::new(rotation, translation)?.apply(cloud))
}

/// Azimuth/elevation of a unit normal, in radians.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Spherical {
    /// `atan2(n_y, n_x)` in `(-π, π]`, 0 at the poles.
    pub theta: f64,
    /// `asin(n_z)` in `[-π/2, π/2]`.
    pub phi: f64,
}

pub fn to_spherical(n: &Vector3<f64>) -> Result<Spherical, GeometryError> {
    let norm = n.norm();
    if !norm.is_finite() || (norm - 1.0).abs() > 1e-3 {
        return Err(GeometryError::NotUnit(norm));
    }
    let u = n / norm;
    let theta = if u.x == 0.0 && u.y == 0.0 {
        0.0
    } else {
        let t = u.y.atan2(u.x);
        // atan2(-0.0, x<0) gives -π; fold onto the half-open range.
        if t == -std::f64::consts::PI {
            std::f64::consts::PI
        } else {
            t
        }
    };
    Ok(Spherical {
        theta,
        phi: u.z.clamp(-1.0, 1.0).asin(),
    })
}

pub fn from_spherical(s: Spherical) -> Vector3<f64> {
    let (st, ct) = s.theta.sin_cos();
    let (sp, cp) = s.phi.sin_cos();
    Vector3::new(cp * ct, cp * st, sp)
}

/// Rotation about the z axis by `angle` radians.
pub fn rotation_z(angle: f64) -> Matrix3<f64> {
    let (s, c) = angle.sin_cos();
    Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0)
}
