//! Bounding-volume hierarchy over mesh triangles: closest point, ray casting
//! and hierarchical generalized winding numbers.

use std::f64::consts::PI;

use super::{Aabb, TriangleMesh, Vec3};

const LEAF_SIZE: usize = 4;
/// Far-field expansion is used once the query is this many cluster radii away.
const WINDING_FAR_RATIO: f64 = 4.0;

/// Which part of a triangle the closest point lies on.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TriangleFeature {
    Vertex(u8),
    /// Edge from local vertex `k` to `(k + 1) % 3`.
    Edge(u8),
    Face,
}

#[derive(Clone, Copy, Debug)]
pub struct ClosestHit {
    pub face: usize,
    pub point: Vec3,
    pub distance_squared: f64,
    pub feature: TriangleFeature,
}

#[derive(Clone, Copy, Debug)]
pub struct RayHit {
    pub face: usize,
    pub t: f64,
}

#[derive(Clone, Debug)]
struct Node {
    bounds: Aabb,
    /// Area-weighted normal sum (half the summed cross products).
    dipole: Vec3,
    /// Area-weighted centroid.
    center: Vec3,
    radius: f64,
    kind: NodeKind,
}

#[derive(Clone, Debug)]
enum NodeKind {
    Leaf { start: usize, end: usize },
    Inner { left: usize, right: usize },
}

#[derive(Clone, Debug)]
pub struct Bvh {
    nodes: Vec<Node>,
    order: Vec<usize>,
    tris: Vec<[Vec3; 3]>,
    /// Mesh face index for each entry of `tris`.
    face_ids: Vec<usize>,
}

impl Bvh {
    pub fn new(mesh: &TriangleMesh) -> Self {
        Self::from_faces(mesh, &(0..mesh.faces.len()).collect::<Vec<_>>())
    }

    /// Hierarchy over a subset of faces; hits report original face indices.
    pub fn from_faces(mesh: &TriangleMesh, faces: &[usize]) -> Self {
        let tris: Vec<[Vec3; 3]> = faces.iter().map(|&f| mesh.triangle(f)).collect();
        let centroids: Vec<Vec3> = tris.iter().map(|t| (t[0] + t[1] + t[2]) / 3.0).collect();
        let mut bvh = Bvh {
            nodes: Vec::new(),
            order: (0..tris.len()).collect(),
            tris,
            face_ids: faces.to_vec(),
        };
        if !bvh.tris.is_empty() {
            let n = bvh.order.len();
            bvh.build(0, n, &centroids);
        }
        bvh
    }

    pub fn is_empty(&self) -> bool {
        self.tris.is_empty()
    }

    fn build(&mut self, start: usize, end: usize, centroids: &[Vec3]) -> usize {
        let mut bounds = Aabb::empty();
        let mut cbounds = Aabb::empty();
        let mut dipole = Vec3::zeros();
        let mut weighted = Vec3::zeros();
        let mut area = 0.0;
        for &i in &self.order[start..end] {
            let t = &self.tris[i];
            for p in t {
                bounds.grow(p);
            }
            cbounds.grow(&centroids[i]);
            let cross = (t[1] - t[0]).cross(&(t[2] - t[0]));
            let a = 0.5 * cross.norm();
            dipole += 0.5 * cross;
            weighted += a * centroids[i];
            area += a;
        }
        let center = if area > 0.0 {
            weighted / area
        } else {
            bounds.center()
        };
        let radius = self.order[start..end]
            .iter()
            .flat_map(|&i| self.tris[i].iter())
            .map(|p| (p - center).norm())
            .fold(0.0, f64::max);

        let idx = self.nodes.len();
        self.nodes.push(Node {
            bounds,
            dipole,
            center,
            radius,
            kind: NodeKind::Leaf { start, end },
        });
        if end - start > LEAF_SIZE {
            let axis = cbounds.longest_axis();
            let mid = (start + end) / 2;
            self.order[start..end].select_nth_unstable_by(mid - start, |&a, &b| {
                centroids[a][axis].total_cmp(&centroids[b][axis])
            });
            let left = self.build(start, mid, centroids);
            let right = self.build(mid, end, centroids);
            self.nodes[idx].kind = NodeKind::Inner { left, right };
        }
        idx
    }

    /// Closest point on any triangle to `p`.
    pub fn closest(&self, p: &Vec3) -> Option<ClosestHit> {
        if self.nodes.is_empty() {
            return None;
        }
        let mut best: Option<ClosestHit> = None;
        let mut best_d2 = f64::INFINITY;
        let mut stack = vec![0usize];
        while let Some(ni) = stack.pop() {
            let node = &self.nodes[ni];
            if node.bounds.distance_squared(p) >= best_d2 {
                continue;
            }
            match node.kind {
                NodeKind::Leaf { start, end } => {
                    for &ti in &self.order[start..end] {
                        let (q, feature) = closest_point_on_triangle(p, &self.tris[ti]);
                        let d2 = (q - p).norm_squared();
                        // Ties break toward the lower face index for determinism.
                        let better = d2 < best_d2
                            || (d2 == best_d2 && best.is_some_and(|b| self.face_ids[ti] < b.face));
                        if better {
                            best_d2 = d2;
                            best = Some(ClosestHit {
                                face: self.face_ids[ti],
                                point: q,
                                distance_squared: d2,
                                feature,
                            });
                        }
                    }
                }
                NodeKind::Inner { left, right } => {
                    let dl = self.nodes[left].bounds.distance_squared(p);
                    let dr = self.nodes[right].bounds.distance_squared(p);
                    if dl < dr {
                        stack.push(right);
                        stack.push(left);
                    } else {
                        stack.push(left);
                        stack.push(right);
                    }
                }
            }
        }
        best
    }

    pub fn distance(&self, p: &Vec3) -> f64 {
        self.closest(p)
            .map(|h| h.distance_squared.sqrt())
            .unwrap_or(f64::INFINITY)
    }

    /// Nearest intersection along `origin + t * dir` with `t >= 0`.
    pub fn raycast(&self, origin: &Vec3, dir: &Vec3) -> Option<RayHit> {
        if self.nodes.is_empty() {
            return None;
        }
        let inv = Vec3::new(1.0 / dir.x, 1.0 / dir.y, 1.0 / dir.z);
        let mut best: Option<RayHit> = None;
        let mut best_t = f64::INFINITY;
        let mut stack = vec![0usize];
        while let Some(ni) = stack.pop() {
            let node = &self.nodes[ni];
            match ray_box(origin, &inv, &node.bounds) {
                Some(t) if t <= best_t => {}
                _ => continue,
            }
            match node.kind {
                NodeKind::Leaf { start, end } => {
                    for &ti in &self.order[start..end] {
                        if let Some(t) = ray_triangle(origin, dir, &self.tris[ti]) {
                            let face = self.face_ids[ti];
                            if t < best_t || (t == best_t && best.is_some_and(|b| face < b.face)) {
                                best_t = t;
                                best = Some(RayHit { face, t });
                            }
                        }
                    }
                }
                NodeKind::Inner { left, right } => {
                    stack.push(left);
                    stack.push(right);
                }
            }
        }
        best
    }

    /// Generalized winding number of the triangle soup at `p`.
    ///
    /// Clusters far from `p` are replaced by their first-order dipole term.
    pub fn winding_number(&self, p: &Vec3) -> f64 {
        if self.nodes.is_empty() {
            return 0.0;
        }
        let mut total = 0.0;
        let mut stack = vec![0usize];
        while let Some(ni) = stack.pop() {
            let node = &self.nodes[ni];
            let r = node.center - p;
            let dist = r.norm();
            if dist > WINDING_FAR_RATIO * node.radius {
                total += node.dipole.dot(&r) / (dist * dist * dist);
                continue;
            }
            match node.kind {
                NodeKind::Leaf { start, end } => {
                    for &ti in &self.order[start..end] {
                        total += solid_angle(p, &self.tris[ti]);
                    }
                }
                NodeKind::Inner { left, right } => {
                    stack.push(left);
                    stack.push(right);
                }
            }
        }
        total / (4.0 * PI)
    }

    /// Exact winding number by summing every triangle's solid angle.
    pub fn winding_number_exact(&self, p: &Vec3) -> f64 {
        self.tris.iter().map(|t| solid_angle(p, t)).sum::<f64>() / (4.0 * PI)
    }
}

/// Signed solid angle subtended by a triangle (positive when `p` is behind
/// the counter-clockwise face).
pub fn solid_angle(p: &Vec3, t: &[Vec3; 3]) -> f64 {
    let a = t[0] - p;
    let b = t[1] - p;
    let c = t[2] - p;
    let (la, lb, lc) = (a.norm(), b.norm(), c.norm());
    let num = a.dot(&b.cross(&c));
    let den = la * lb * lc + a.dot(&b) * lc + a.dot(&c) * lb + b.dot(&c) * la;
    2.0 * num.atan2(den)
}

fn ray_box(origin: &Vec3, inv: &Vec3, b: &Aabb) -> Option<f64> {
    let mut t0: f64 = 0.0;
    let mut t1 = f64::INFINITY;
    for i in 0..3 {
        let mut ta = (b.min[i] - origin[i]) * inv[i];
        let mut tb = (b.max[i] - origin[i]) * inv[i];
        if ta.is_nan() || tb.is_nan() {
            // Ray parallel to and lying on a slab boundary.
            if origin[i] < b.min[i] || origin[i] > b.max[i] {
                return None;
            }
            continue;
        }
        if ta > tb {
            std::mem::swap(&mut ta, &mut tb);
        }
        t0 = t0.max(ta);
        t1 = t1.min(tb);
        if t0 > t1 {
            return None;
        }
    }
    Some(t0)
}

/// Moller-Trumbore intersection, two-sided.
fn ray_triangle(origin: &Vec3, dir: &Vec3, t: &[Vec3; 3]) -> Option<f64> {
    const EPS: f64 = 1e-12;
    let e1 = t[1] - t[0];
    let e2 = t[2] - t[0];
    let pv = dir.cross(&e2);
    let det = e1.dot(&pv);
    if det.abs() < EPS {
        return None;
    }
    let inv = 1.0 / det;
    let tv = origin - t[0];
    let u = tv.dot(&pv) * inv;
    if !(-1e-12..=1.0 + 1e-12).contains(&u) {
        return None;
    }
    let qv = tv.cross(&e1);
    let v = dir.dot(&qv) * inv;
    if v < -1e-12 || u + v > 1.0 + 1e-12 {
        return None;
    }
    let dist = e2.dot(&qv) * inv;
    (dist >= 0.0).then_some(dist)
}

/// Closest point on triangle `t` to `p`, with the feature it lies on.
pub fn closest_point_on_triangle(p: &Vec3, t: &[Vec3; 3]) -> (Vec3, TriangleFeature) {
    let (a, b, c) = (t[0], t[1], t[2]);
    let ab = b - a;
    let ac = c - a;
    let ap = p - a;
    let d1 = ab.dot(&ap);
    let d2 = ac.dot(&ap);
    if d1 <= 0.0 && d2 <= 0.0 {
        return (a, TriangleFeature::Vertex(0));
    }
    let bp = p - b;
    let d3 = ab.dot(&bp);
    let d4 = ac.dot(&bp);
    if d3 >= 0.0 && d4 <= d3 {
        return (b, TriangleFeature::Vertex(1));
    }
    let vc = d1 * d4 - d3 * d2;
    if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
        let v = d1 / (d1 - d3);
        return (a + v * ab, TriangleFeature::Edge(0));
    }
    let cp = p - c;
    let d5 = ab.dot(&cp);
    let d6 = ac.dot(&cp);
    if d6 >= 0.0 && d5 <= d6 {
        return (c, TriangleFeature::Vertex(2));
    }
    let vb = d5 * d2 - d1 * d6;
    if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
        let w = d2 / (d2 - d6);
        return (a + w * ac, TriangleFeature::Edge(2));
    }
    let va = d3 * d6 - d5 * d4;
    if va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0 {
        let w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
        return (b + w * (c - b), TriangleFeature::Edge(1));
    }
    let denom = 1.0 / (va + vb + vc);
    let v = vb * denom;
    let w = vc * denom;
    (a + ab * v + ac * w, TriangleFeature::Face)
}

/// Barycentric coordinates of `q` (assumed to lie in the triangle's plane),
/// clamped to be non-negative and renormalized.
pub fn barycentric(q: &Vec3, t: &[Vec3; 3]) -> [f64; 3] {
    let v0 = t[1] - t[0];
    let v1 = t[2] - t[0];
    let v2 = q - t[0];
    let d00 = v0.dot(&v0);
    let d01 = v0.dot(&v1);
    let d11 = v1.dot(&v1);
    let d20 = v2.dot(&v0);
    let d21 = v2.dot(&v1);
    let den = d00 * d11 - d01 * d01;
    if den.abs() < 1e-300 {
        return [1.0, 0.0, 0.0];
    }
    let v = (d11 * d20 - d01 * d21) / den;
    let w = (d00 * d21 - d01 * d20) / den;
    let mut bary = [1.0 - v - w, v, w];
    for b in bary.iter_mut() {
        *b = b.max(0.0);
    }
    let s: f64 = bary.iter().sum();
    bary.map(|b| b / s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::shapes;
    use rand::{Rng, SeedableRng};

    #[test]
    fn closest_matches_brute_force() {
        let mesh = shapes::torus(Vec3::zeros(), 0.5, 0.2, 24, 12);
        let bvh = Bvh::new(&mesh);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        for _ in 0..200 {
            let p = Vec3::new(
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
            );
            let brute = (0..mesh.faces.len())
                .map(|f| (closest_point_on_triangle(&p, &mesh.triangle(f)).0 - p).norm_squared())
                .fold(f64::INFINITY, f64::min);
            let hit = bvh.closest(&p).unwrap();
            assert!((hit.distance_squared - brute).abs() < 1e-12);
        }
    }

    #[test]
    fn hierarchical_winding_agrees_with_exact_away_from_surface() {
        let mesh = shapes::icosphere(Vec3::zeros(), 0.5, 3);
        let bvh = Bvh::new(&mesh);
        for p in [
            Vec3::zeros(),
            Vec3::new(0.2, 0.1, -0.1),
            Vec3::new(0.9, 0.0, 0.0),
        ] {
            let a = bvh.winding_number(&p);
            let b = bvh.winding_number_exact(&p);
            assert!((a - b).abs() < 1e-2, "{a} vs {b}");
        }
        assert!((bvh.winding_number_exact(&Vec3::zeros()) - 1.0).abs() < 1e-9);
    }

    #[test]
    fn downward_ray_hits_top_face() {
        let cube = shapes::cuboid(Vec3::new(0.0, 0.0, 0.35), Vec3::new(0.5, 0.5, 0.35));
        let bvh = Bvh::new(&cube);
        let hit = bvh
            .raycast(&Vec3::new(0.1, 0.2, 2.0), &Vec3::new(0.0, 0.0, -1.0))
            .unwrap();
        assert!((hit.t - 1.3).abs() < 1e-12);
        assert!(bvh
            .raycast(&Vec3::new(0.8, 0.2, 2.0), &Vec3::new(0.0, 0.0, -1.0))
            .is_none());
    }

    #[test]
    fn barycentric_recovers_weights() {
        let t = [Vec3::zeros(), Vec3::x(), Vec3::y()];
        let q = 0.2 * t[0] + 0.3 * t[1] + 0.5 * t[2];
        let b = barycentric(&q, &t);
        assert!((b[0] - 0.2).abs() < 1e-12 && (b[1] - 0.3).abs() < 1e-12);
    }
}
