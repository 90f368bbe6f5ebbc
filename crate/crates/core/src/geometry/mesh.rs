use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::Vec3;
use crate::error::{Error, Result};

/// Indexed triangle mesh in meters.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TriangleMesh {
    pub vertices: Vec<Vec3>,
    pub faces: Vec<[u32; 3]>,
}

impl TriangleMesh {
    /// Builds a mesh after checking index bounds and rejecting degenerate faces.
    pub fn new(vertices: Vec<Vec3>, faces: Vec<[u32; 3]>) -> Result<Self> {
        let mesh = TriangleMesh { vertices, faces };
        mesh.validate()?;
        Ok(mesh)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.vertices.len();
        for (i, f) in self.faces.iter().enumerate() {
            if f.iter().any(|&v| v as usize >= n) {
                return Err(Error::InvalidMesh(format!(
                    "face {i} references vertex {:?} but the mesh has {n} vertices",
                    f
                )));
            }
            if f[0] == f[1] || f[1] == f[2] || f[0] == f[2] {
                return Err(Error::InvalidMesh(format!("face {i} is degenerate: {f:?}")));
            }
        }
        if let Some(i) = self
            .vertices
            .iter()
            .position(|v| !v.iter().all(|c| c.is_finite()))
        {
            return Err(Error::InvalidMesh(format!("vertex {i} is not finite")));
        }
        Ok(())
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty() || self.faces.is_empty()
    }

    pub fn triangle(&self, face: usize) -> [Vec3; 3] {
        let f = self.faces[face];
        [
            self.vertices[f[0] as usize],
            self.vertices[f[1] as usize],
            self.vertices[f[2] as usize],
        ]
    }

    /// Unnormalized normal with length twice the face area.
    pub fn face_cross(&self, face: usize) -> Vec3 {
        let [a, b, c] = self.triangle(face);
        (b - a).cross(&(c - a))
    }

    pub fn face_area(&self, face: usize) -> f64 {
        0.5 * self.face_cross(face).norm()
    }

    pub fn face_normal(&self, face: usize) -> Vec3 {
        let n = self.face_cross(face);
        let len = n.norm();
        if len > 0.0 {
            n / len
        } else {
            Vec3::zeros()
        }
    }

    /// Unique undirected edges `(lo, hi)` in sorted order.
    pub fn edges(&self) -> Vec<(u32, u32)> {
        let mut set = BTreeSet::new();
        for f in &self.faces {
            for k in 0..3 {
                let (a, b) = (f[k], f[(k + 1) % 3]);
                set.insert((a.min(b), a.max(b)));
            }
        }
        set.into_iter().collect()
    }

    /// Per-vertex sorted neighbor lists.
    pub fn vertex_neighbors(&self) -> Vec<Vec<u32>> {
        let mut adj: Vec<BTreeSet<u32>> = vec![BTreeSet::new(); self.vertices.len()];
        for (a, b) in self.edges() {
            adj[a as usize].insert(b);
            adj[b as usize].insert(a);
        }
        adj.into_iter().map(|s| s.into_iter().collect()).collect()
    }

    pub fn translated(&self, offset: Vec3) -> TriangleMesh {
        TriangleMesh {
            vertices: self.vertices.iter().map(|v| v + offset).collect(),
            faces: self.faces.clone(),
        }
    }

    /// Appends `other`, returning the range of face indices it occupies.
    pub fn append(&mut self, other: &TriangleMesh) -> std::ops::Range<usize> {
        let base = self.vertices.len() as u32;
        let start = self.faces.len();
        self.vertices.extend_from_slice(&other.vertices);
        self.faces.extend(
            other
                .faces
                .iter()
                .map(|f| [f[0] + base, f[1] + base, f[2] + base]),
        );
        start..self.faces.len()
    }

    /// Mesh made of the given faces, with vertices re-indexed compactly.
    pub fn submesh(&self, faces: &[usize]) -> TriangleMesh {
        let mut remap = vec![u32::MAX; self.vertices.len()];
        let mut out = TriangleMesh::default();
        for &fi in faces {
            let mut nf = [0u32; 3];
            for (k, &v) in self.faces[fi].iter().enumerate() {
                let slot = &mut remap[v as usize];
                if *slot == u32::MAX {
                    *slot = out.vertices.len() as u32;
                    out.vertices.push(self.vertices[v as usize]);
                }
                nf[k] = *slot;
            }
            out.faces.push(nf);
        }
        out
    }

    pub fn total_area(&self) -> f64 {
        (0..self.faces.len()).map(|f| self.face_area(f)).sum()
    }
}

/// Axis-aligned bounding box.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Aabb {
    pub min: Vec3,
    pub max: Vec3,
}

impl Aabb {
    pub fn empty() -> Self {
        Aabb {
            min: Vec3::repeat(f64::INFINITY),
            max: Vec3::repeat(f64::NEG_INFINITY),
        }
    }

    pub fn from_points<'a>(points: impl IntoIterator<Item = &'a Vec3>) -> Self {
        let mut b = Aabb::empty();
        for p in points {
            b.grow(p);
        }
        b
    }

    pub fn grow(&mut self, p: &Vec3) {
        self.min = self.min.inf(p);
        self.max = self.max.sup(p);
    }

    pub fn merge(&self, other: &Aabb) -> Aabb {
        Aabb {
            min: self.min.inf(&other.min),
            max: self.max.sup(&other.max),
        }
    }

    pub fn is_valid(&self) -> bool {
        (0..3).all(|i| self.min[i] <= self.max[i])
    }

    pub fn extent(&self) -> Vec3 {
        self.max - self.min
    }

    pub fn center(&self) -> Vec3 {
        0.5 * (self.min + self.max)
    }

    pub fn expanded(&self, pad: f64) -> Aabb {
        Aabb {
            min: self.min - Vec3::repeat(pad),
            max: self.max + Vec3::repeat(pad),
        }
    }

    pub fn contains(&self, p: &Vec3) -> bool {
        (0..3).all(|i| p[i] >= self.min[i] && p[i] <= self.max[i])
    }

    /// Closest point of the box to `p`.
    pub fn clamp(&self, p: &Vec3) -> Vec3 {
        p.sup(&self.min).inf(&self.max)
    }

    pub fn distance_squared(&self, p: &Vec3) -> f64 {
        (self.clamp(p) - p).norm_squared()
    }

    pub fn longest_axis(&self) -> usize {
        let e = self.extent();
        if e.x >= e.y && e.x >= e.z {
            0
        } else if e.y >= e.z {
            1
        } else {
            2
        }
    }
}

/// Bounding box of the vertices referenced by `face_subset`, or of every
/// vertex when no subset is given.
pub fn compute_aabb(mesh: &TriangleMesh, face_subset: Option<&[usize]>) -> Result<Aabb> {
    let aabb = match face_subset {
        Some(faces) => {
            if faces.is_empty() {
                return Err(Error::EmptySubset);
            }
            let mut b = Aabb::empty();
            for &f in faces {
                for &v in &mesh.faces[f] {
                    b.grow(&mesh.vertices[v as usize]);
                }
            }
            b
        }
        None => {
            if mesh.vertices.is_empty() {
                return Err(Error::EmptySubset);
            }
            Aabb::from_points(&mesh.vertices)
        }
    };
    Ok(aabb)
}
