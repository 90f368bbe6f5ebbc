//! Procedural "capsule-man" body: a smooth union of capsules around a 22-joint
//! skeleton, meshed with surface nets and rigged with distance-based skinning.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::model::{ArticulatedBody, BodyParts, Csr};
use super::simplify::{simplify_mesh, SimplifiedMesh};
use super::spiral::spiral_table;
use crate::error::{Error, Result};
use crate::geometry::{inside_test_with, Aabb, Bvh, KdTree, TriangleMesh, Vec3};

pub const JOINT_NAMES: [&str; 22] = [
    "pelvis",
    "left_hip",
    "right_hip",
    "spine1",
    "left_knee",
    "right_knee",
    "spine2",
    "left_ankle",
    "right_ankle",
    "spine3",
    "left_foot",
    "right_foot",
    "neck",
    "left_collar",
    "right_collar",
    "head",
    "left_shoulder",
    "right_shoulder",
    "left_elbow",
    "right_elbow",
    "left_wrist",
    "right_wrist",
];

pub const PARENTS: [i32; 22] = [
    -1, 0, 0, 0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 9, 9, 12, 13, 14, 16, 17, 18, 19,
];

/// Rest-pose joint locations. Up is +z, the body faces +y and its left side
/// is at -x.
pub fn designed_joints() -> [Vec3; 22] {
    let v = Vec3::new;
    [
        v(0.0, 0.0, 0.95),
        v(-0.1, 0.0, 0.88),
        v(0.1, 0.0, 0.88),
        v(0.0, 0.0, 1.05),
        v(-0.1, 0.0, 0.5),
        v(0.1, 0.0, 0.5),
        v(0.0, 0.0, 1.18),
        v(-0.1, 0.0, 0.08),
        v(0.1, 0.0, 0.08),
        v(0.0, 0.0, 1.3),
        v(-0.1, 0.12, 0.04),
        v(0.1, 0.12, 0.04),
        v(0.0, 0.0, 1.48),
        v(-0.07, 0.0, 1.4),
        v(0.07, 0.0, 1.4),
        v(0.0, 0.0, 1.6),
        v(-0.18, 0.0, 1.42),
        v(0.18, 0.0, 1.42),
        v(-0.45, 0.0, 1.42),
        v(0.45, 0.0, 1.42),
        v(-0.7, 0.0, 1.42),
        v(0.7, 0.0, 1.42),
    ]
}

#[derive(Clone, Copy, Debug)]
struct Capsule {
    joint: usize,
    a: Vec3,
    b: Vec3,
    radius: f64,
}

impl Capsule {
    fn distance(&self, p: &Vec3) -> f64 {
        let ab = self.b - self.a;
        let t = ((p - self.a).dot(&ab) / ab.norm_squared().max(1e-12)).clamp(0.0, 1.0);
        (p - (self.a + t * ab)).norm() - self.radius
    }
}

fn capsules() -> Vec<Capsule> {
    let j = designed_joints();
    let mut out = Vec::new();
    let mut add = |joint: usize, a: Vec3, b: Vec3, radius: f64| {
        out.push(Capsule {
            joint,
            a,
            b,
            radius,
        })
    };
    add(0, j[1], j[2], 0.11);
    add(0, j[0], j[3], 0.12);
    add(3, j[3], j[6], 0.12);
    add(6, j[6], j[9], 0.13);
    add(9, j[9], j[12], 0.12);
    add(12, j[12], j[15], 0.05);
    add(15, j[15], j[15] + Vec3::new(0.0, 0.0, 0.05), 0.1);
    for side in 0..2 {
        let (hip, knee, ankle, foot) = (1 + side, 4 + side, 7 + side, 10 + side);
        let (collar, shoulder, elbow, wrist) = (13 + side, 16 + side, 18 + side, 20 + side);
        let x = j[ankle].x;
        let out_dir = if side == 0 { -1.0 } else { 1.0 };
        add(hip, j[hip], j[knee], 0.07);
        add(knee, j[knee], j[ankle], 0.05);
        add(
            ankle,
            Vec3::new(x, -0.03, 0.04),
            Vec3::new(x, 0.12, 0.04),
            0.04,
        );
        add(
            foot,
            Vec3::new(x, 0.12, 0.035),
            Vec3::new(x, 0.19, 0.035),
            0.035,
        );
        add(collar, j[collar], j[shoulder], 0.06);
        add(shoulder, j[shoulder], j[elbow], 0.045);
        add(elbow, j[elbow], j[wrist], 0.04);
        add(
            wrist,
            j[wrist],
            j[wrist] + Vec3::new(0.12 * out_dir, 0.0, 0.0),
            0.035,
        );
    }
    out
}

/// Polynomial smooth minimum.
fn smooth_min(a: f64, b: f64, k: f64) -> f64 {
    let h = (k - (a - b).abs()).max(0.0) / k;
    a.min(b) - h * h * k * 0.25
}

const BLEND: f64 = 0.04;

fn body_field(caps: &[Capsule], p: &Vec3) -> f64 {
    caps.iter()
        .map(|c| c.distance(p))
        .fold(f64::INFINITY, |acc, d| {
            if acc.is_infinite() {
                d
            } else {
                smooth_min(acc, d, BLEND)
            }
        })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CapsuleBodyConfig {
    /// Surface-nets cell size; controls the full-resolution vertex count.
    pub mesh_resolution: f64,
    pub simplified_count: usize,
    pub spiral_length: usize,
    pub interior_count: usize,
    /// Minimum depth of interior samples below the surface.
    pub interior_depth: f64,
    /// Softness of the distance-based skinning weights.
    pub skinning_softness: f64,
    pub seed: u64,
}

impl Default for CapsuleBodyConfig {
    fn default() -> Self {
        CapsuleBodyConfig {
            mesh_resolution: 0.02,
            simplified_count: super::model::SIMPLIFIED_COUNT,
            spiral_length: 9,
            interior_count: 2000,
            interior_depth: 0.005,
            skinning_softness: 0.01,
            seed: 0,
        }
    }
}

/// Builds the procedural body asset.
pub fn build_capsule_body(cfg: &CapsuleBodyConfig) -> Result<ArticulatedBody> {
    let caps = capsules();
    let field = |p: &Vec3| body_field(&caps, p);
    let mut bounds = Aabb::empty();
    for c in &caps {
        bounds = bounds.merge(&Aabb {
            min: c.a.inf(&c.b) - Vec3::repeat(c.radius),
            max: c.a.sup(&c.b) + Vec3::repeat(c.radius),
        });
    }
    let mesh = surface_nets(&field, &bounds, cfg.mesh_resolution);
    check_closed_manifold(&mesh)?;
    if mesh.vertices.len() <= cfg.simplified_count {
        return Err(Error::Config(format!(
            "mesh_resolution {} yields {} vertices, not more than the {} simplified vertices",
            cfg.mesh_resolution,
            mesh.vertices.len(),
            cfg.simplified_count
        )));
    }
    // Quantize once so every derived quantity sees the stored coordinates.
    let mesh = TriangleMesh {
        vertices: mesh
            .vertices
            .iter()
            .map(|v| v.map(|c| c as f32 as f64))
            .collect(),
        faces: mesh.faces,
    };

    let skinning = skinning_weights(&caps, &mesh.vertices, cfg.skinning_softness);
    let regressor = joint_regressor(&mesh.vertices)?;
    let SimplifiedMesh {
        mesh: simplified,
        kept,
    } = simplify_mesh(&mesh, cfg.simplified_count)?;
    let downsample = Csr::from_rows(
        mesh.vertices.len(),
        &kept
            .iter()
            .map(|&v| vec![(v as u32, 1.0)])
            .collect::<Vec<_>>(),
    );
    let upsample = renormalized_f32(cfg.simplified_count, upsample_rows(&mesh, &simplified));
    let spiral = spiral_table(&simplified, cfg.spiral_length);
    let (interior_vertex, interior_offset) = interior_samples(&field, &mesh, cfg)?;

    ArticulatedBody::from_parts(BodyParts {
        template: mesh
            .vertices
            .iter()
            .map(|v| [v.x as f32, v.y as f32, v.z as f32])
            .collect(),
        faces: mesh.faces.clone(),
        parents: PARENTS.to_vec(),
        joint_names: JOINT_NAMES.iter().map(|s| s.to_string()).collect(),
        regressor,
        skinning,
        downsample,
        upsample,
        simplified_faces: simplified.faces.clone(),
        spiral_length: cfg.spiral_length,
        spiral,
        interior_vertex,
        interior_offset,
    })
}

/// Dual contouring with one vertex per sign-changing cell placed at the mean
/// of its edge crossings, then projected onto the zero level set.
fn surface_nets(field: &dyn Fn(&Vec3) -> f64, bounds: &Aabb, h: f64) -> TriangleMesh {
    let lo = bounds.min - Vec3::repeat(2.0 * h);
    let hi = bounds.max + Vec3::repeat(2.0 * h);
    let dims = [0, 1, 2].map(|a| ((hi[a] - lo[a]) / h).ceil() as usize + 1);
    let node = |i: usize, j: usize, k: usize| lo + h * Vec3::new(i as f64, j as f64, k as f64);
    let idx = |i: usize, j: usize, k: usize| i + dims[0] * (j + dims[1] * k);
    let mut values = vec![0.0; dims[0] * dims[1] * dims[2]];
    for k in 0..dims[2] {
        for j in 0..dims[1] {
            for i in 0..dims[0] {
                let v = field(&node(i, j, k));
                // Keep nodes off the exact zero level.
                values[idx(i, j, k)] = if v == 0.0 { 1e-12 } else { v };
            }
        }
    }

    let mut cell_vertex: HashMap<[usize; 3], u32> = HashMap::new();
    let mut vertices = Vec::new();
    const CORNERS: [[usize; 3]; 8] = [
        [0, 0, 0],
        [1, 0, 0],
        [0, 1, 0],
        [1, 1, 0],
        [0, 0, 1],
        [1, 0, 1],
        [0, 1, 1],
        [1, 1, 1],
    ];
    const EDGES: [(usize, usize); 12] = [
        (0, 1),
        (2, 3),
        (4, 5),
        (6, 7),
        (0, 2),
        (1, 3),
        (4, 6),
        (5, 7),
        (0, 4),
        (1, 5),
        (2, 6),
        (3, 7),
    ];
    for k in 0..dims[2] - 1 {
        for j in 0..dims[1] - 1 {
            for i in 0..dims[0] - 1 {
                let corner_val = CORNERS.map(|c| values[idx(i + c[0], j + c[1], k + c[2])]);
                let negative = corner_val.iter().filter(|&&v| v < 0.0).count();
                if negative == 0 || negative == 8 {
                    continue;
                }
                let mut sum = Vec3::zeros();
                let mut n = 0.0;
                for &(a, b) in &EDGES {
                    let (va, vb) = (corner_val[a], corner_val[b]);
                    if (va < 0.0) != (vb < 0.0) {
                        let t = va / (va - vb);
                        let pa = node(i + CORNERS[a][0], j + CORNERS[a][1], k + CORNERS[a][2]);
                        let pb = node(i + CORNERS[b][0], j + CORNERS[b][1], k + CORNERS[b][2]);
                        sum += pa + t * (pb - pa);
                        n += 1.0;
                    }
                }
                cell_vertex.insert([i, j, k], vertices.len() as u32);
                vertices.push(sum / n);
            }
        }
    }

    let mut faces = Vec::new();
    for k in 1..dims[2] - 1 {
        for j in 1..dims[1] - 1 {
            for i in 1..dims[0] - 1 {
                let v0 = values[idx(i, j, k)];
                for axis in 0..3 {
                    let mut nb = [i, j, k];
                    nb[axis] += 1;
                    if nb[axis] >= dims[axis] {
                        continue;
                    }
                    let v1 = values[idx(nb[0], nb[1], nb[2])];
                    if (v0 < 0.0) == (v1 < 0.0) {
                        continue;
                    }
                    // The two other axes in cyclic order give a quad whose
                    // normal points along +axis.
                    let (b, c) = ((axis + 1) % 3, (axis + 2) % 3);
                    let cell = |db: usize, dc: usize| {
                        let mut p = [i, j, k];
                        p[b] -= 1 - db;
                        p[c] -= 1 - dc;
                        cell_vertex[&p]
                    };
                    let mut quad = [cell(0, 0), cell(1, 0), cell(1, 1), cell(0, 1)];
                    if v0 > 0.0 {
                        quad.reverse();
                    }
                    let p = |q: u32| vertices[q as usize];
                    let d02 = (p(quad[0]) - p(quad[2])).norm_squared();
                    let d13 = (p(quad[1]) - p(quad[3])).norm_squared();
                    if d02 <= d13 {
                        faces.push([quad[0], quad[1], quad[2]]);
                        faces.push([quad[0], quad[2], quad[3]]);
                    } else {
                        faces.push([quad[0], quad[1], quad[3]]);
                        faces.push([quad[1], quad[2], quad[3]]);
                    }
                }
            }
        }
    }

    // Newton steps onto the level set.
    let eps = 1e-6;
    for v in &mut vertices {
        for _ in 0..4 {
            let f = field(v);
            let g = Vec3::new(
                field(&(*v + Vec3::x() * eps)) - field(&(*v - Vec3::x() * eps)),
                field(&(*v + Vec3::y() * eps)) - field(&(*v - Vec3::y() * eps)),
                field(&(*v + Vec3::z() * eps)) - field(&(*v - Vec3::z() * eps)),
            ) / (2.0 * eps);
            let g2 = g.norm_squared();
            if g2 < 1e-12 {
                break;
            }
            let step = (f / g2 * g).cap_magnitude(0.5 * h);
            *v -= step;
        }
    }
    TriangleMesh { vertices, faces }
}

/// Every edge is shared by exactly two consistently oriented faces.
fn check_closed_manifold(mesh: &TriangleMesh) -> Result<()> {
    let mut directed: HashMap<(u32, u32), usize> = HashMap::new();
    for f in &mesh.faces {
        for k in 0..3 {
            *directed.entry((f[k], f[(k + 1) % 3])).or_default() += 1;
        }
    }
    for (&(a, b), &count) in &directed {
        if count != 1 || directed.get(&(b, a)) != Some(&1) {
            return Err(Error::InvalidMesh(format!(
                "body surface is not a closed manifold at edge ({a}, {b})"
            )));
        }
    }
    Ok(())
}

/// Softmax over capsule distances, restricted to the nearest capsule's joint
/// and its tree neighbors, keeping the three largest weights.
fn skinning_weights(caps: &[Capsule], vertices: &[Vec3], softness: f64) -> Csr {
    let mut rows = Vec::with_capacity(vertices.len());
    for v in vertices {
        let mut per_joint = [f64::INFINITY; 22];
        for c in caps {
            let d = c.distance(v);
            per_joint[c.joint] = per_joint[c.joint].min(d);
        }
        let primary = (0..22)
            .min_by(|&a, &b| per_joint[a].total_cmp(&per_joint[b]))
            .unwrap();
        let mut candidates: Vec<usize> = vec![primary];
        if PARENTS[primary] >= 0 {
            candidates.push(PARENTS[primary] as usize);
        }
        candidates.extend((0..22).filter(|&c| PARENTS[c] == primary as i32));
        let mut scored: Vec<(usize, f64)> = candidates
            .into_iter()
            .filter(|&j| per_joint[j].is_finite())
            .map(|j| (j, (-(per_joint[j] - per_joint[primary]) / softness).exp()))
            .collect();
        scored.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        scored.truncate(3);
        scored.retain(|&(_, w)| w > 1e-4);
        let total: f64 = scored.iter().map(|s| s.1).sum();
        let mut row: Vec<(u32, f64)> = scored.iter().map(|&(j, w)| (j as u32, w / total)).collect();
        row.sort_by_key(|r| r.0);
        rows.push(row);
    }
    renormalized_f32(22, rows)
}

/// Positive weights over nearby surface vertices whose weighted mean is the
/// designed joint: Gaussian prior weights tilted by `exp(lambda . x)`, with
/// `lambda` found by Newton's method on the log-partition function.
fn joint_regressor(vertices: &[Vec3]) -> Result<Csr> {
    let sigma: f64 = 0.05;
    let mut rows = Vec::new();
    for (joint, c) in designed_joints().iter().enumerate() {
        let mut radius = 0.15;
        let row = loop {
            let near: Vec<(u32, f64, Vec3)> = vertices
                .iter()
                .enumerate()
                .filter_map(|(i, v)| {
                    let d = v - c;
                    (d.norm() <= radius).then(|| {
                        (
                            i as u32,
                            (-d.norm_squared() / (2.0 * sigma * sigma)).exp(),
                            d,
                        )
                    })
                })
                .collect();
            if near.len() >= 8 {
                if let Some(w) = tilt_to_mean(&near) {
                    break w;
                }
            }
            radius *= 1.5;
            if radius > 1.0 {
                return Err(Error::InvalidMesh(format!(
                    "joint {joint} is not enclosed by the body surface"
                )));
            }
        };
        rows.push(row);
    }
    Ok(renormalized_f32(vertices.len(), rows))
}

fn tilt_to_mean(near: &[(u32, f64, Vec3)]) -> Option<Vec<(u32, f64)>> {
    let mut lambda = Vec3::zeros();
    let weights = |lambda: &Vec3| -> Vec<f64> {
        let logs: Vec<f64> = near
            .iter()
            .map(|(_, w, d)| w.ln() + lambda.dot(d))
            .collect();
        let top = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let e: Vec<f64> = logs.iter().map(|l| (l - top).exp()).collect();
        let total: f64 = e.iter().sum();
        e.into_iter().map(|x| x / total).collect()
    };
    for _ in 0..200 {
        let w = weights(&lambda);
        let mean: Vec3 = near.iter().zip(&w).map(|((_, _, d), wi)| *wi * d).sum();
        if mean.norm() < 1e-10 {
            return Some(near.iter().zip(w).map(|((i, _, _), wi)| (*i, wi)).collect());
        }
        let mut cov = crate::geometry::Mat3::zeros();
        for ((_, _, d), wi) in near.iter().zip(&w) {
            let x = d - mean;
            cov += *wi * x * x.transpose();
        }
        let step = cov.try_inverse()? * mean;
        let mut t = 1.0;
        let f = |l: &Vec3| {
            let logs: Vec<f64> = near.iter().map(|(_, w, d)| w.ln() + l.dot(d)).collect();
            let top = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            top + logs.iter().map(|x| (x - top).exp()).sum::<f64>().ln()
        };
        let f0 = f(&lambda);
        while f(&(lambda - t * step)) > f0 - 0.25 * t * mean.dot(&step) && t > 1e-8 {
            t *= 0.5;
        }
        lambda -= t * step;
    }
    None
}

/// Rounds weights to f32 and absorbs the rounding error in the largest entry
/// so stored rows still sum to one within f32 precision.
fn renormalized_f32(cols: usize, rows: Vec<Vec<(u32, f64)>>) -> Csr {
    let rows: Vec<Vec<(u32, f64)>> = rows
        .into_iter()
        .map(|mut row| {
            let sum: f64 = row.iter().map(|r| r.1 as f32 as f64).sum();
            if let Some(big) = row.iter_mut().max_by(|a, b| a.1.total_cmp(&b.1)) {
                big.1 += 1.0 - sum;
            }
            row
        })
        .collect();
    Csr::from_rows(cols, &rows)
}

/// Barycentric weights of each full vertex's closest point on the simplified
/// surface.
fn upsample_rows(full: &TriangleMesh, simplified: &TriangleMesh) -> Vec<Vec<(u32, f64)>> {
    let bvh = Bvh::new(simplified);
    full.vertices
        .iter()
        .map(|v| {
            let hit = bvh.closest(v).expect("simplified mesh is non-empty");
            let f = simplified.faces[hit.face];
            let tri = simplified.triangle(hit.face);
            let bary = crate::geometry::bvh::barycentric(&hit.point, &tri);
            let mut row: Vec<(u32, f64)> = Vec::new();
            for k in 0..3 {
                if bary[k] > 1e-9 {
                    match row.iter_mut().find(|r| r.0 == f[k]) {
                        Some(r) => r.1 += bary[k],
                        None => row.push((f[k], bary[k])),
                    }
                }
            }
            let total: f64 = row.iter().map(|r| r.1).sum();
            row.iter_mut().for_each(|r| r.1 /= total);
            row.sort_by_key(|r| r.0);
            row
        })
        .collect()
}

/// Rejection-samples points at least `interior_depth` inside the body and
/// attaches each to its nearest template vertex.
fn interior_samples(
    field: &dyn Fn(&Vec3) -> f64,
    mesh: &TriangleMesh,
    cfg: &CapsuleBodyConfig,
) -> Result<(Vec<u32>, Vec<[f32; 3]>)> {
    let bounds = Aabb::from_points(&mesh.vertices);
    let bvh = Bvh::new(mesh);
    let tree = KdTree::new(mesh.vertices.clone());
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x1a7e_5eed);
    let mut vertex = Vec::with_capacity(cfg.interior_count);
    let mut offset = Vec::with_capacity(cfg.interior_count);
    let mut attempts = 0usize;
    while vertex.len() < cfg.interior_count {
        attempts += 1;
        if attempts > 1000 * cfg.interior_count.max(1) {
            return Err(Error::InvalidMesh("could not sample body interior".into()));
        }
        let p = Vec3::new(
            rng.random_range(bounds.min.x..bounds.max.x),
            rng.random_range(bounds.min.y..bounds.max.y),
            rng.random_range(bounds.min.z..bounds.max.z),
        );
        if field(&p) > -cfg.interior_depth || bvh.distance(&p) < cfg.interior_depth {
            continue;
        }
        if !inside_test_with(&bvh, &[p])[0] {
            continue;
        }
        let (v, _) = tree.nearest(&p).expect("mesh has vertices");
        let o = p - mesh.vertices[v];
        vertex.push(v as u32);
        offset.push([o.x as f32, o.y as f32, o.z as f32]);
    }
    Ok((vertex, offset))
}
