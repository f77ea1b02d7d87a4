//! Seeded parametric face-like surfaces in dense correspondence, for tests,
//! benchmarks and demo runs.

use nalgebra::Point3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::cloud::{CorrespondedFace, FaceSet, PointCloud};

/// Shape parameters of one synthetic identity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FaceParams {
    pub half_width: f64,
    pub half_height: f64,
    pub depth: f64,
    pub nose_height: f64,
    pub nose_width: f64,
    pub nose_y: f64,
    pub eye_depth: f64,
    pub eye_spacing: f64,
    pub chin: f64,
}

impl FaceParams {
    pub fn random(rng: &mut impl Rng) -> Self {
        Self {
            half_width: rng.random_range(62.0..78.0),
            half_height: rng.random_range(85.0..100.0),
            depth: rng.random_range(55.0..85.0),
            nose_height: rng.random_range(14.0..30.0),
            nose_width: rng.random_range(9.0..16.0),
            nose_y: rng.random_range(-12.0..4.0),
            eye_depth: rng.random_range(4.0..12.0),
            eye_spacing: rng.random_range(26.0..38.0),
            chin: rng.random_range(-8.0..8.0),
        }
    }
}

/// Surface point at parameter `(u, v)` in `[-1, 1]²`. Expression 1 smiles,
/// 2 opens the mouth, 3 raises the brows; others repeat that cycle with
/// growing intensity.
pub fn face_point(p: &FaceParams, expression: u32, u: f64, v: f64) -> Point3<f64> {
    let x = p.half_width * u;
    let mut y = p.half_height * v;
    let dome = (1.0 - 0.55 * u * u - 0.45 * v * v).max(0.0).sqrt();
    let gauss = |dx: f64, dy: f64, sx: f64, sy: f64| (-(dx * dx) / (sx * sx) - (dy * dy) / (sy * sy)).exp();
    let mut z = p.depth * dome;
    z += p.nose_height * gauss(x, y - p.nose_y, p.nose_width, 1.8 * p.nose_width);
    for side in [-1.0, 1.0] {
        z -= p.eye_depth * gauss(x - side * p.eye_spacing, y - 28.0, 14.0, 9.0);
    }
    z += p.chin * gauss(x, y + 75.0, 25.0, 12.0);

    let intensity = if expression == 0 { 0.0 } else { 1.0 + ((expression - 1) / 3) as f64 * 0.5 };
    let mouth = gauss(x, y + 45.0, 28.0, 12.0);
    match expression.checked_sub(1).map(|e| e % 3) {
        Some(0) => {
            y += intensity * 6.0 * mouth * (x / 28.0).powi(2);
            z += intensity * 3.0 * mouth;
        }
        Some(1) => {
            if y < -45.0 {
                y -= intensity * 10.0 * gauss(x, 0.0, 30.0, 1.0);
            }
            z -= intensity * 4.0 * mouth;
        }
        Some(2) => {
            y += intensity * 5.0 * gauss(x.abs() - p.eye_spacing, y - 42.0, 14.0, 8.0);
        }
        _ => {}
    }
    Point3::new(x, y, z)
}

/// One face sampled on a `side`×`side` parameter grid (vertex order is the
/// correspondence).
pub fn face_cloud(p: &FaceParams, expression: u32, side: usize) -> PointCloud {
    let step = 2.0 / (side - 1) as f64;
    let pts = (0..side)
        .flat_map(|r| (0..side).map(move |c| (c, r)))
        .map(|(c, r)| face_point(p, expression, -1.0 + c as f64 * step, -1.0 + r as f64 * step))
        .collect();
    PointCloud::new(pts).expect("finite by construction")
}

/// `identities` faces with `expressions` each (expression 0 neutral), labels
/// contiguous from 0.
pub fn face_set(identities: u32, expressions: u32, side: usize, seed: u64) -> FaceSet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let params: Vec<FaceParams> = (0..identities).map(|_| FaceParams::random(&mut rng)).collect();
    let faces = params
        .iter()
        .enumerate()
        .flat_map(|(id, p)| {
            (0..expressions).map(move |e| CorrespondedFace::new(face_cloud(p, e, side), id as u32, e))
        })
        .collect();
    FaceSet::new(faces).expect("valid by construction")
}
