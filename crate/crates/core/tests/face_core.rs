use faceforge_core::cloud::{from_spherical, rotation_z, to_spherical, PointCloud, RigidTransform, Spherical};
use faceforge_core::io::{load_cloud_auto, ply_bytes, write_ply, write_xyz};
use faceforge_core::normals::compute_normals;
use faceforge_core::synthetic;
use nalgebra::{Matrix3, Point3, Rotation3, Vector3};
use proptest::prelude::*;

/// Fibonacci sphere of radius 50.
fn sphere(n: usize) -> PointCloud {
    let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
    let pts = (0..n)
        .map(|i| {
            let z = 1.0 - 2.0 * (i as f64 + 0.5) / n as f64;
            let theta = golden * i as f64;
            Point3::from(from_spherical(Spherical { theta, phi: z.asin() }) * 50.0)
        })
        .collect();
    PointCloud::new(pts).unwrap()
}

#[test]
fn files_roundtrip_through_every_writer() {
    let set = synthetic::face_set(1, 1, 12, 3);
    let cloud = &set.faces()[0].cloud;
    let dir = tempfile::tempdir().unwrap();
    let ply = dir.path().join("a.ply");
    write_ply(&ply, cloud).unwrap();
    assert_eq!(&load_cloud_auto(&ply).unwrap(), cloud);
    let xyz = dir.path().join("a.xyz");
    write_xyz(&xyz, cloud).unwrap();
    let back = load_cloud_auto(&xyz).unwrap();
    for (a, b) in back.points().iter().zip(cloud.points()) {
        assert!((a - b).norm() < 1e-9);
    }
    assert!(load_cloud_auto(&dir.path().join("a.stl")).is_err());
    assert_eq!(ply_bytes(cloud), std::fs::read(&ply).unwrap());
}

#[test]
fn obj_vertices_only() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("t.obj");
    std::fs::write(&p, "# tri\nv 0 0 0\nv 1 0 0\nv 0 1 0\nvn 0 0 1\nf 1 2 3\n").unwrap();
    let c = load_cloud_auto(&p).unwrap();
    assert_eq!(c.len(), 3);
    assert_eq!(c.points()[1], Point3::new(1.0, 0.0, 0.0));
}

#[test]
fn sphere_normals_are_radial() {
    let est = compute_normals(&sphere(3000), 10).unwrap();
    let normals = est.cloud.normals().unwrap();
    for (p, n) in est.cloud.points().iter().zip(normals) {
        let radial = p.coords.normalize();
        assert!((n.norm() - 1.0).abs() < 1e-12);
        assert!(n.dot(&radial).abs() > 0.99, "{p} {n}");
        assert!(n.z >= 0.0);
    }
}

#[test]
fn rejects_non_rotations() {
    assert!(RigidTransform::new(Matrix3::identity() * 2.0, Vector3::zeros()).is_err());
    let reflect = Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, -1.0));
    assert!(RigidTransform::new(reflect, Vector3::zeros()).is_err());
}

fn unit() -> impl Strategy<Value = Vector3<f64>> {
    (-1.0f64..1.0, -1.0f64..1.0, -1.0f64..1.0)
        .prop_filter("nonzero", |(x, y, z)| x * x + y * y + z * z > 1e-4)
        .prop_map(|(x, y, z)| Vector3::new(x, y, z).normalize())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn rigid_motion_preserves_distances(
        axis in unit(), angle in -3.0f64..3.0,
        t in (-100.0f64..100.0, -100.0f64..100.0, -100.0f64..100.0),
        seed in any::<u64>(),
    ) {
        let cloud = synthetic::face_set(1, 1, 6, seed).into_faces().remove(0).cloud;
        let rot = Rotation3::from_axis_angle(&nalgebra::Unit::new_normalize(axis), angle).into_inner();
        let moved = RigidTransform::new(rot, Vector3::new(t.0, t.1, t.2)).unwrap().apply(&cloud);
        let (p, q) = (cloud.points(), moved.points());
        for i in 0..p.len() {
            for j in (i + 1..p.len()).step_by(7) {
                prop_assert!(((p[i] - p[j]).norm() - (q[i] - q[j]).norm()).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn spherical_roundtrip(n in unit()) {
        let s = to_spherical(&n).unwrap();
        prop_assert!(s.theta > -std::f64::consts::PI && s.theta <= std::f64::consts::PI);
        prop_assert!((from_spherical(s) - n).norm() < 1e-12);
    }

    #[test]
    fn z_rotation_shifts_azimuth(n in unit(), a in -1.0f64..1.0) {
        prop_assume!(n.z.abs() < 0.99);
        let s = to_spherical(&n).unwrap();
        let r = to_spherical(&(rotation_z(a) * n)).unwrap();
        let d = (r.theta - s.theta - a).rem_euclid(std::f64::consts::TAU);
        prop_assert!(d.min(std::f64::consts::TAU - d) < 1e-9);
        prop_assert!((r.phi - s.phi).abs() < 1e-12);
    }

    #[test]
    fn normals_unit_and_upward(seed in any::<u64>()) {
        let cloud = synthetic::face_set(1, 1, 10, seed).into_faces().remove(0).cloud;
        let est = compute_normals(&cloud, 8).unwrap();
        for n in est.cloud.normals().unwrap() {
            prop_assert!((n.norm() - 1.0).abs() < 1e-12);
            prop_assert!(n.z >= 0.0);
        }
    }
}
