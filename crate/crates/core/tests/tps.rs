use faceforge_core::cloud::{CorrespondedFace, PointCloud};
use faceforge_core::error::TpsError;
use faceforge_core::tps::{self, AffineBasis};
use nalgebra::{Matrix3, Point3, Vector3};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Dense Gauss-Jordan inverse with partial pivoting, row-major.
fn gauss_jordan_inverse(a: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = a.len();
    let mut m: Vec<Vec<f64>> = a
        .iter()
        .enumerate()
        .map(|(i, row)| {
            let mut r = row.clone();
            r.extend((0..n).map(|j| if i == j { 1.0 } else { 0.0 }));
            r
        })
        .collect();
    for col in 0..n {
        let piv = (col..n).max_by(|&x, &y| m[x][col].abs().total_cmp(&m[y][col].abs())).unwrap();
        m.swap(col, piv);
        let p = m[col][col];
        assert!(p.abs() > 1e-300, "singular");
        for v in m[col].iter_mut() {
            *v /= p;
        }
        for r in 0..n {
            if r != col {
                let f = m[r][col];
                if f != 0.0 {
                    for c in 0..2 * n {
                        m[r][c] -= f * m[col][c];
                    }
                }
            }
        }
    }
    m.into_iter().map(|r| r[n..].to_vec()).collect()
}

/// Upper-left block of the inverse of the raw stacked TPS system.
fn oracle_b(pts: &[Point3<f64>]) -> Vec<Vec<f64>> {
    let p = pts.len();
    let mut a = vec![vec![0.0; p + 4]; p + 4];
    for i in 0..p {
        for j in 0..p {
            let r = (pts[i] - pts[j]).norm();
            a[i][j] = if r == 0.0 { 0.0 } else { r * r * r.ln() };
        }
        let s = [1.0, pts[i].x, pts[i].y, pts[i].z];
        for k in 0..4 {
            a[i][p + k] = s[k];
            a[p + k][i] = s[k];
        }
    }
    let inv = gauss_jordan_inverse(&a);
    inv[..p].iter().map(|r| r[..p].to_vec()).collect()
}

fn quad(b: &[Vec<f64>], v: &[f64]) -> f64 {
    (0..v.len()).map(|i| (0..v.len()).map(|j| v[i] * b[i][j] * v[j]).sum::<f64>()).sum()
}

fn oracle_gamma(b: &[Vec<f64>], target: &[Point3<f64>]) -> f64 {
    let xs: Vec<f64> = target.iter().map(|p| p.x).collect();
    let ys: Vec<f64> = target.iter().map(|p| p.y).collect();
    let zs: Vec<f64> = target.iter().map(|p| p.z).collect();
    quad(b, &xs) + quad(b, &ys) + quad(b, &zs)
}

fn random_points(rng: &mut impl Rng, n: usize, scale: f64) -> Vec<Point3<f64>> {
    (0..n)
        .map(|_| Point3::new(rng.random::<f64>() * scale, rng.random::<f64>() * scale, rng.random::<f64>() * scale))
        .collect()
}

fn face(points: Vec<Point3<f64>>, id: u32) -> CorrespondedFace {
    CorrespondedFace::new(PointCloud::new(points).unwrap(), id, 0)
}

fn max_abs_diff(a: &nalgebra::DMatrix<f64>, b: &[Vec<f64>]) -> (f64, f64) {
    let mut d = 0.0f64;
    let mut m = 0.0f64;
    for i in 0..b.len() {
        for j in 0..b.len() {
            d = d.max((a[(i, j)] - b[i][j]).abs());
            m = m.max(b[i][j].abs());
        }
    }
    (d, m)
}

#[test]
fn five_points_match_explicit_inverse() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for _ in 0..20 {
        let pts = random_points(&mut rng, 5, 50.0);
        let b = tps::bending_matrix_from_points(&pts).unwrap();
        let want = oracle_b(&pts);
        let (d, m) = max_abs_diff(b.matrix(), &want);
        assert!(d <= 1e-9 * m, "diff {d} scale {m}");
    }
}

#[test]
fn five_point_affine_null_space() {
    let pts = vec![
        Point3::new(0.0, 0.0, 0.0),
        Point3::new(10.0, 0.0, 1.0),
        Point3::new(0.0, 12.0, -2.0),
        Point3::new(3.0, 4.0, 9.0),
        Point3::new(-5.0, 7.0, 3.0),
    ];
    let b = tps::bending_matrix_from_points(&pts).unwrap();
    let m = b.matrix();
    let norm = m.norm();
    for col in [
        pts.iter().map(|_| 1.0).collect::<Vec<_>>(),
        pts.iter().map(|p| p.x).collect(),
        pts.iter().map(|p| p.y).collect(),
        pts.iter().map(|p| p.z).collect(),
    ] {
        let v = nalgebra::DVector::from_vec(col.clone());
        assert!((m * &v).norm() <= 1e-6 * norm * v.norm());
    }
}

#[test]
fn displaced_vertex_energy_matches_oracle() {
    let pts = vec![
        Point3::new(0.0, 0.0, 0.0),
        Point3::new(10.0, 0.0, 1.0),
        Point3::new(0.0, 12.0, -2.0),
        Point3::new(3.0, 4.0, 9.0),
        Point3::new(-5.0, 7.0, 3.0),
    ];
    let mut moved = pts.clone();
    moved[3].z += 1.0;
    let src = face(pts.clone(), 0);
    let dst = face(moved.clone(), 1);
    let b = tps::bending_matrix(&src, &[0, 1, 2, 3, 4]).unwrap();
    let got = tps::bending_energy(&b, &dst).unwrap();
    let want = oracle_gamma(&oracle_b(&pts), &moved);
    assert!(want > 0.0);
    assert!((got - want).abs() <= 1e-9 * want.max(1e-300), "{got} vs {want}");
}

#[test]
fn duplicate_points_rejected() {
    let mut pts = random_points(&mut ChaCha8Rng::seed_from_u64(2), 6, 10.0);
    pts[4] = pts[1];
    assert!(matches!(tps::bending_matrix_from_points(&pts), Err(TpsError::DuplicatePoints(1, 4))));
}

#[test]
fn coplanar_and_small_rejected() {
    let pts: Vec<Point3<f64>> = (0..8).map(|i| Point3::new(i as f64, (i * i % 5) as f64, 0.0)).collect();
    assert!(matches!(tps::bending_matrix_from_points(&pts), Err(TpsError::Coplanar)));
    assert!(matches!(tps::bending_matrix_from_points(&pts[..4]), Err(TpsError::TooFewPoints(4))));
}

#[test]
fn index_mismatch() {
    let src = face(random_points(&mut ChaCha8Rng::seed_from_u64(4), 10, 10.0), 0);
    let b = tps::bending_matrix(&src, &[0, 1, 2, 3, 9]).unwrap();
    let small = face(random_points(&mut ChaCha8Rng::seed_from_u64(5), 6, 10.0), 1);
    assert!(matches!(tps::bending_energy(&b, &small), Err(TpsError::IndexMismatch { index: 9, .. })));
}

#[test]
fn two_hundred_points_symmetric() {
    let pts = random_points(&mut ChaCha8Rng::seed_from_u64(8), 200, 120.0);
    let b = tps::bending_matrix_from_points(&pts).unwrap();
    let m = b.matrix();
    let asym = (m - m.transpose()).amax();
    assert!(asym <= 1e-8 * m.amax());
    let want = oracle_b(&pts);
    let (d, scale) = max_abs_diff(m, &want);
    assert!(d <= 1e-6 * scale, "{d} vs {scale}");
}

#[test]
fn fifty_vertex_distance_matches_two_sided_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(50);
    let a = random_points(&mut rng, 50, 80.0);
    let b: Vec<Point3<f64>> = a
        .iter()
        .map(|p| p + Vector3::new(rng.random::<f64>(), rng.random::<f64>(), rng.random::<f64>()) * 4.0)
        .collect();
    let idx: Vec<usize> = (0..50).collect();
    let got = tps::shape_distance(&face(a.clone(), 0), &face(b.clone(), 1), &idx, AffineBasis::Source).unwrap();
    let gij = oracle_gamma(&oracle_b(&a), &b);
    let gji = oracle_gamma(&oracle_b(&b), &a);
    let want = (gij + gji) / 2.0;
    assert!((got - want).abs() <= 1e-9 * want, "{got} vs {want}");
}

#[test]
fn distance_is_bit_symmetric_and_zero_on_self() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let fa = face(random_points(&mut rng, 40, 60.0), 0);
    let fb = face(random_points(&mut rng, 40, 60.0), 1);
    let idx: Vec<usize> = (0..40).collect();
    let dij = tps::shape_distance(&fa, &fb, &idx, AffineBasis::Source).unwrap();
    let dji = tps::shape_distance(&fb, &fa, &idx, AffineBasis::Source).unwrap();
    assert_eq!(dij.to_bits(), dji.to_bits());
    assert_eq!(tps::shape_distance(&fa, &fa, &idx, AffineBasis::Source).unwrap(), 0.0);
}

#[test]
fn target_basis_flag_changes_the_system() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let fa = face(random_points(&mut rng, 30, 60.0), 0);
    let fb = face(random_points(&mut rng, 30, 60.0), 1);
    let idx: Vec<usize> = (0..30).collect();
    let s = tps::directed_energy(&fa, &fb, &idx, AffineBasis::Source).unwrap();
    let t = tps::directed_energy(&fa, &fb, &idx, AffineBasis::Target).unwrap();
    assert!(s.is_finite() && t.is_finite() && s != t);
}

#[test]
fn subsample_is_seeded_and_spread() {
    let pts = random_points(&mut ChaCha8Rng::seed_from_u64(3), 400, 100.0);
    let a = tps::farthest_point_subsample(&pts, 50, 9);
    assert_eq!(a, tps::farthest_point_subsample(&pts, 50, 9));
    assert_eq!(a.len(), 50);
    assert!(a.windows(2).all(|w| w[0] < w[1]));
    assert_eq!(tps::farthest_point_subsample(&pts, 1000, 9).len(), 400);
}

fn energy_scale(b: &tps::BendingMatrix, pts: &[Point3<f64>]) -> f64 {
    let c = pts.iter().map(|p| p.coords).sum::<Vector3<f64>>() / pts.len() as f64;
    let coords: f64 = pts.iter().map(|p| (p.coords - c).norm_squared()).sum();
    b.matrix().norm() * coords
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn self_energy_vanishes(seed in any::<u64>(), n in 6usize..40) {
        let pts = random_points(&mut ChaCha8Rng::seed_from_u64(seed), n, 100.0);
        let src = face(pts.clone(), 0);
        let idx: Vec<usize> = (0..n).collect();
        let b = tps::bending_matrix(&src, &idx).unwrap();
        let g = tps::bending_energy(&b, &src).unwrap();
        prop_assert!(g <= 1e-8 * energy_scale(&b, &pts));
    }

    #[test]
    fn affine_targets_cost_nothing(seed in any::<u64>(), n in 6usize..40) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pts = random_points(&mut rng, n, 100.0);
        let a = Matrix3::from_fn(|i, j| if i == j { 1.0 } else { 0.0 } + (rng.random::<f64>() - 0.5) * 0.6);
        let t = Vector3::new(rng.random::<f64>(), rng.random::<f64>(), rng.random::<f64>()) * 50.0;
        let moved: Vec<Point3<f64>> = pts.iter().map(|p| Point3::from(a * p.coords + t)).collect();
        let idx: Vec<usize> = (0..n).collect();
        let b = tps::bending_matrix(&face(pts.clone(), 0), &idx).unwrap();
        let g = tps::bending_energy(&b, &face(moved.clone(), 1)).unwrap();
        prop_assert!(g <= 1e-6 * energy_scale(&b, &moved));
    }

    #[test]
    fn energy_is_nonnegative(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = random_points(&mut rng, 12, 50.0);
        let b = random_points(&mut rng, 12, 50.0);
        let idx: Vec<usize> = (0..12).collect();
        let d = tps::shape_distance(&face(a, 0), &face(b, 1), &idx, AffineBasis::Source).unwrap();
        prop_assert!(d >= 0.0);
    }
}
