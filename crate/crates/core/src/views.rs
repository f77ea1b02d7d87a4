//! Hemisphere camera layouts and self-occlusion by hidden point removal.

use std::path::Path;

use nalgebra::{Matrix3, Point3, Vector3};
use serde::{Deserialize, Serialize};

use crate::cloud::{PointCloud, RigidTransform};
use crate::error::ViewError;
use crate::hull::convex_hull;
use crate::io;

pub const DEFAULT_CAMERA_RADIUS: f64 = 800.0;
pub const DEFAULT_RADIUS_EXPONENT: f64 = 2.0;

/// Camera position on the viewing hemisphere around a face centroid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraPose {
    /// Degrees, positive toward +x.
    pub longitude: f64,
    /// Degrees, positive toward +y.
    pub latitude: f64,
    /// Millimeters from the centroid.
    pub radius: f64,
}

impl CameraPose {
    pub fn new(longitude: f64, latitude: f64, radius: f64) -> Result<Self, ViewError> {
        let pose = Self {
            longitude,
            latitude,
            radius,
        };
        pose.validate()?;
        Ok(pose)
    }

    pub fn validate(&self) -> Result<(), ViewError> {
        let multiple = |a: f64| (a / 15.0).fract() == 0.0;
        let ok = self.longitude.is_finite()
            && self.latitude.is_finite()
            && self.radius.is_finite()
            && self.radius > 0.0
            && (-90.0..=90.0).contains(&self.longitude)
            && (-30.0..=30.0).contains(&self.latitude)
            && multiple(self.longitude)
            && multiple(self.latitude)
            && self.longitude.abs() != 75.0;
        if ok {
            Ok(())
        } else {
            Err(ViewError::InvalidCustomPose {
                longitude: self.longitude,
                latitude: self.latitude,
                radius: self.radius,
            })
        }
    }

    /// Unit vector from the centroid toward the camera; (0, 0) looks down -z
    /// from +z.
    pub fn direction(&self) -> Vector3<f64> {
        let (lon, lat) = (self.longitude.to_radians(), self.latitude.to_radians());
        Vector3::new(lat.cos() * lon.sin(), lat.sin(), lat.cos() * lon.cos())
    }

    /// World-to-camera transform for a camera looking at `target`. The camera
    /// frame has +y up and looks down its own -z axis.
    pub fn world_to_camera(&self, target: &Point3<f64>) -> RigidTransform {
        let back = self.direction();
        let right = Vector3::y().cross(&back).normalize();
        let up = back.cross(&right);
        let rotation = Matrix3::from_rows(&[right.transpose(), up.transpose(), back.transpose()]);
        let eye = target.coords + back * self.radius;
        RigidTransform::new(rotation, -(rotation * eye)).expect("orthonormal by construction")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CameraLayout {
    /// Eleven yaw steps at zero pitch plus four pitch steps at zero yaw.
    Paper15,
    Custom(Vec<CameraPose>),
}

pub fn camera_poses(layout: &CameraLayout, radius: f64) -> Result<Vec<CameraPose>, ViewError> {
    match layout {
        CameraLayout::Paper15 => {
            let mut poses = Vec::with_capacity(15);
            for lon in [-90.0, -60.0, -45.0, -30.0, -15.0, 0.0, 15.0, 30.0, 45.0, 60.0, 90.0] {
                poses.push(CameraPose::new(lon, 0.0, radius)?);
            }
            for lat in [-30.0, -15.0, 15.0, 30.0] {
                poses.push(CameraPose::new(0.0, lat, radius)?);
            }
            Ok(poses)
        }
        CameraLayout::Custom(list) => {
            for p in list {
                p.validate()?;
            }
            Ok(list.clone())
        }
    }
}

/// Indices of points visible from `viewpoint`, by spherical flipping about the
/// viewpoint followed by a convex hull.
pub fn hidden_point_removal(
    cloud: &PointCloud,
    viewpoint: &Point3<f64>,
    radius_exponent: f64,
) -> Result<Vec<usize>, ViewError> {
    let pts = cloud.points();
    match pts.len() {
        0 => return Err(ViewError::EmptyCloud),
        1 => return Ok(vec![0]),
        _ => {}
    }
    let centroid = cloud.centroid();
    let extent = pts.iter().map(|p| (p - centroid).norm()).fold(0.0, f64::max);
    if (viewpoint - centroid).norm() <= extent {
        return Err(ViewError::ViewpointInside);
    }
    let rel: Vec<Vector3<f64>> = pts.iter().map(|p| p - viewpoint).collect();
    let max_norm = rel.iter().map(|p| p.norm()).fold(0.0, f64::max);
    let r = 10f64.powf(radius_exponent) * max_norm;
    let mut flipped: Vec<Vector3<f64>> = rel
        .iter()
        .map(|p| {
            let n = p.norm();
            p + p * (2.0 * (r - n) / n)
        })
        .collect();
    flipped.push(Vector3::zeros());
    match convex_hull(&flipped) {
        Some(h) => Ok(h.vertices.into_iter().filter(|&i| i < pts.len()).collect()),
        None => {
            log::warn!("degenerate hull in hidden point removal; all points kept");
            Ok((0..pts.len()).collect())
        }
    }
}

/// Surviving points of one scan seen from one pose, in camera coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct ViewCloud {
    pub cloud: PointCloud,
    pub pose: CameraPose,
    pub visible_indices: Vec<usize>,
    pub source_ref: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoseSidecar {
    pub scan_id: String,
    pub longitude: f64,
    pub latitude: f64,
    pub radius: f64,
    pub visible_count: usize,
}

impl ViewCloud {
    pub fn sidecar(&self) -> PoseSidecar {
        PoseSidecar {
            scan_id: self.source_ref.clone(),
            longitude: self.pose.longitude,
            latitude: self.pose.latitude,
            radius: self.pose.radius,
            visible_count: self.visible_indices.len(),
        }
    }

    pub fn write(&self, ply_path: &Path, json_path: &Path) -> Result<(), crate::Error> {
        io::write_ply(ply_path, &self.cloud)?;
        std::fs::write(json_path, serde_json::to_vec_pretty(&self.sidecar())?)?;
        Ok(())
    }
}

/// Moves `scan` into the frame of a camera at `pose` aimed at its centroid and
/// keeps the points visible from the camera.
pub fn render_view(
    scan: &PointCloud,
    pose: &CameraPose,
    radius_exponent: f64,
    source_ref: &str,
) -> Result<ViewCloud, ViewError> {
    pose.validate()?;
    if scan.is_empty() {
        return Err(ViewError::EmptyCloud);
    }
    let cam = pose.world_to_camera(&scan.centroid()).apply(scan);
    let visible = hidden_point_removal(&cam, &Point3::origin(), radius_exponent)?;
    Ok(ViewCloud {
        cloud: cam.select(&visible),
        pose: *pose,
        visible_indices: visible,
        source_ref: source_ref.to_string(),
    })
}
