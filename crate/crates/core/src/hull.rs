//! 3D convex hull (quickhull), used for visibility tests.

use std::collections::HashMap;

use nalgebra::Vector3;

#[derive(Debug, Clone)]
struct Face {
    v: [usize; 3],
    normal: Vector3<f64>,
    offset: f64,
    outside: Vec<usize>,
    alive: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Hull {
    /// Outward-oriented triangles as vertex indices into the input.
    pub faces: Vec<[usize; 3]>,
    /// Sorted, deduplicated hull vertex indices.
    pub vertices: Vec<usize>,
    /// Plane tolerance used for the above/below tests.
    pub tolerance: f64,
}

/// Convex hull of `points`, or `None` when they are coplanar (or fewer than
/// four) within tolerance.
pub fn convex_hull(points: &[Vector3<f64>]) -> Option<Hull> {
    if points.len() < 4 {
        return None;
    }
    let scale = points
        .iter()
        .flat_map(|p| p.iter().map(|c| c.abs()))
        .fold(0.0f64, f64::max);
    if scale == 0.0 {
        return None;
    }
    let tol = 1e-11 * scale;

    let simplex = initial_simplex(points, tol)?;
    let mut builder = Builder {
        points,
        tol,
        faces: Vec::new(),
        edges: HashMap::new(),
    };
    let [a, b, c, d] = simplex;
    let inner = (points[a] + points[b] + points[c] + points[d]) / 4.0;
    for tri in [[a, b, c], [a, b, d], [a, c, d], [b, c, d]] {
        builder.add_face_oriented(tri, &inner);
    }
    let all: Vec<usize> = (0..points.len()).filter(|i| !simplex.contains(i)).collect();
    builder.assign(all, 0..4);
    builder.run();

    let faces: Vec<[usize; 3]> = builder.faces.iter().filter(|f| f.alive).map(|f| f.v).collect();
    let mut vertices: Vec<usize> = faces.iter().flatten().copied().collect();
    vertices.sort_unstable();
    vertices.dedup();
    Some(Hull {
        faces,
        vertices,
        tolerance: tol,
    })
}

fn initial_simplex(points: &[Vector3<f64>], tol: f64) -> Option<[usize; 4]> {
    // Farthest pair among the axis extremes.
    let mut extremes = Vec::with_capacity(6);
    for axis in 0..3 {
        let lo = (0..points.len()).min_by(|&i, &j| points[i][axis].total_cmp(&points[j][axis]))?;
        let hi = (0..points.len()).max_by(|&i, &j| points[i][axis].total_cmp(&points[j][axis]))?;
        extremes.push(lo);
        extremes.push(hi);
    }
    let mut best = (0.0, 0, 0);
    for &i in &extremes {
        for &j in &extremes {
            let d = (points[i] - points[j]).norm_squared();
            if d > best.0 {
                best = (d, i, j);
            }
        }
    }
    let (d2, a, b) = best;
    if d2.sqrt() <= tol {
        return None;
    }
    let ab = points[b] - points[a];
    let (c, area) = (0..points.len())
        .map(|i| (i, ab.cross(&(points[i] - points[a])).norm()))
        .max_by(|x, y| x.1.total_cmp(&y.1).then(y.0.cmp(&x.0)))?;
    if area / ab.norm() <= tol {
        return None;
    }
    let n = ab.cross(&(points[c] - points[a])).normalize();
    let (d, h) = (0..points.len())
        .map(|i| (i, n.dot(&(points[i] - points[a])).abs()))
        .max_by(|x, y| x.1.total_cmp(&y.1).then(y.0.cmp(&x.0)))?;
    if h <= tol {
        return None;
    }
    Some([a, b, c, d])
}

struct Builder<'a> {
    points: &'a [Vector3<f64>],
    tol: f64,
    faces: Vec<Face>,
    /// Directed edge (a, b) to the face that owns it.
    edges: HashMap<(usize, usize), usize>,
}

impl Builder<'_> {
    fn plane(&self, v: [usize; 3]) -> (Vector3<f64>, f64) {
        let p = self.points;
        let n = (p[v[1]] - p[v[0]]).cross(&(p[v[2]] - p[v[0]]));
        let len = n.norm();
        let n = if len > 0.0 { n / len } else { n };
        let centroid = (p[v[0]] + p[v[1]] + p[v[2]]) / 3.0;
        (n, n.dot(&centroid))
    }

    fn add_face(&mut self, v: [usize; 3]) -> usize {
        let (normal, offset) = self.plane(v);
        let id = self.faces.len();
        self.faces.push(Face {
            v,
            normal,
            offset,
            outside: Vec::new(),
            alive: true,
        });
        for k in 0..3 {
            self.edges.insert((v[k], v[(k + 1) % 3]), id);
        }
        id
    }

    fn add_face_oriented(&mut self, v: [usize; 3], inner: &Vector3<f64>) {
        let (n, off) = self.plane(v);
        if n.dot(inner) - off > 0.0 {
            self.add_face([v[0], v[2], v[1]]);
        } else {
            self.add_face(v);
        }
    }

    fn distance(&self, f: usize, i: usize) -> f64 {
        let face = &self.faces[f];
        face.normal.dot(&self.points[i]) - face.offset
    }

    fn assign(&mut self, candidates: Vec<usize>, faces: std::ops::Range<usize>) {
        for i in candidates {
            for f in faces.clone() {
                if self.faces[f].alive && self.distance(f, i) > self.tol {
                    self.faces[f].outside.push(i);
                    break;
                }
            }
        }
    }

    fn run(&mut self) {
        let mut f = 0;
        while f < self.faces.len() {
            if !self.faces[f].alive || self.faces[f].outside.is_empty() {
                f += 1;
                continue;
            }
            let apex = *self.faces[f]
                .outside
                .iter()
                .max_by(|&&i, &&j| self.distance(f, i).total_cmp(&self.distance(f, j)).then(j.cmp(&i)))
                .expect("nonempty");

            // Flood the faces that see the apex.
            let mut visible = vec![f];
            let mut seen = vec![f];
            let mut k = 0;
            while k < visible.len() {
                let v = self.faces[visible[k]].v;
                for e in 0..3 {
                    let (a, b) = (v[e], v[(e + 1) % 3]);
                    let Some(&g) = self.edges.get(&(b, a)) else { continue };
                    if seen.contains(&g) {
                        continue;
                    }
                    seen.push(g);
                    if self.distance(g, apex) > self.tol {
                        visible.push(g);
                    }
                }
                k += 1;
            }

            let mut horizon = Vec::new();
            for &vf in &visible {
                let v = self.faces[vf].v;
                for e in 0..3 {
                    let (a, b) = (v[e], v[(e + 1) % 3]);
                    match self.edges.get(&(b, a)) {
                        Some(g) if visible.contains(g) => {}
                        _ => horizon.push((a, b)),
                    }
                }
            }

            let mut orphans = Vec::new();
            for &vf in &visible {
                let face = &mut self.faces[vf];
                face.alive = false;
                orphans.append(&mut face.outside);
                let v = face.v;
                for e in 0..3 {
                    self.edges.remove(&(v[e], v[(e + 1) % 3]));
                }
            }
            orphans.retain(|&i| i != apex);
            orphans.sort_unstable();

            let first = self.faces.len();
            for (a, b) in horizon {
                self.add_face([a, b, apex]);
            }
            self.assign(orphans, first..self.faces.len());
            f += 1;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn check_convex(points: &[Vector3<f64>], hull: &Hull) {
        for f in &hull.faces {
            let n = (points[f[1]] - points[f[0]]).cross(&(points[f[2]] - points[f[0]]));
            if n.norm() == 0.0 {
                continue;
            }
            let n = n.normalize();
            for p in points {
                assert!(n.dot(&(p - points[f[0]])) <= 1e3 * hull.tolerance);
            }
        }
    }

    fn closed(hull: &Hull) -> bool {
        let mut e = HashMap::new();
        for f in &hull.faces {
            for k in 0..3 {
                *e.entry((f[k], f[(k + 1) % 3])).or_insert(0) += 1;
            }
        }
        e.iter().all(|(&(a, b), &c)| c == 1 && e.get(&(b, a)) == Some(&1))
    }

    #[test]
    fn cube_corners() {
        let mut pts = Vec::new();
        for x in [0.0, 1.0] {
            for y in [0.0, 1.0] {
                for z in [0.0, 1.0] {
                    pts.push(Vector3::new(x, y, z));
                }
            }
        }
        pts.push(Vector3::new(0.5, 0.5, 0.5));
        let h = convex_hull(&pts).unwrap();
        assert_eq!(h.vertices, (0..8).collect::<Vec<_>>());
        assert_eq!(h.faces.len(), 12);
        assert!(closed(&h));
    }

    #[test]
    fn random_cloud_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let pts: Vec<Vector3<f64>> = (0..60)
            .map(|_| Vector3::new(rng.random(), rng.random(), rng.random()))
            .collect();
        let h = convex_hull(&pts).unwrap();
        check_convex(&pts, &h);
        assert!(closed(&h));
        // A point is extreme iff some triple plane through it has every point on one side.
        for i in 0..pts.len() {
            let mut extreme = false;
            'outer: for j in 0..pts.len() {
                for k in 0..pts.len() {
                    if i == j || j == k || i == k {
                        continue;
                    }
                    let n = (pts[j] - pts[i]).cross(&(pts[k] - pts[i]));
                    let side: Vec<f64> = pts.iter().map(|p| n.dot(&(p - pts[i]))).collect();
                    if side.iter().all(|s| *s <= 1e-12) || side.iter().all(|s| *s >= -1e-12) {
                        extreme = true;
                        break 'outer;
                    }
                }
            }
            assert_eq!(extreme, h.vertices.binary_search(&i).is_ok(), "point {i}");
        }
    }

    #[test]
    fn sphere_points_all_on_hull() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let pts: Vec<Vector3<f64>> = (0..2000)
            .map(|_| {
                let v = Vector3::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5);
                v.normalize() * 50.0
            })
            .collect();
        let h = convex_hull(&pts).unwrap();
        assert_eq!(h.vertices.len(), 2000);
        assert!(closed(&h));
        check_convex(&pts, &h);
    }

    #[test]
    fn coplanar_is_none() {
        let pts: Vec<Vector3<f64>> = (0..20).map(|i| Vector3::new(i as f64, (i * i) as f64, 0.0)).collect();
        assert!(convex_hull(&pts).is_none());
        assert!(convex_hull(&pts[..3]).is_none());
    }
}
