//! Quadric-error half-edge collapse. Surviving vertices keep their original
//! positions, so the downsampling map is a row selection.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashSet};

use nalgebra::{Matrix4, Vector4};

use crate::error::{Error, Result};
use crate::geometry::{TriangleMesh, Vec3};

pub struct SimplifiedMesh {
    pub mesh: TriangleMesh,
    /// Original index of every simplified vertex, ascending.
    pub kept: Vec<usize>,
}

#[derive(PartialEq)]
struct Candidate {
    cost: f64,
    from: u32,
    to: u32,
    stamp: (u32, u32),
}

impl Eq for Candidate {}

impl Ord for Candidate {
    // Min-heap on cost, ties by vertex ids.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .cost
            .total_cmp(&self.cost)
            .then(other.from.cmp(&self.from))
            .then(other.to.cmp(&self.to))
    }
}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

struct State<'a> {
    pos: &'a [Vec3],
    faces: Vec<[u32; 3]>,
    face_alive: Vec<bool>,
    vertex_faces: Vec<Vec<usize>>,
    quadric: Vec<Matrix4<f64>>,
    stamp: Vec<u32>,
}

impl State<'_> {
    fn neighbors(&self, v: u32) -> HashSet<u32> {
        let mut out = HashSet::new();
        for &f in &self.vertex_faces[v as usize] {
            for &w in &self.faces[f] {
                if w != v {
                    out.insert(w);
                }
            }
        }
        out
    }

    fn cost(&self, from: u32, to: u32) -> f64 {
        let q = self.quadric[from as usize] + self.quadric[to as usize];
        let p = self.pos[to as usize];
        let h = Vector4::new(p.x, p.y, p.z, 1.0);
        (h.transpose() * q * h)[0].max(0.0)
    }

    fn push_edges(&self, v: u32, heap: &mut BinaryHeap<Candidate>) {
        for w in self.neighbors(v) {
            for (from, to) in [(v, w), (w, v)] {
                heap.push(Candidate {
                    cost: self.cost(from, to),
                    from,
                    to,
                    stamp: (self.stamp[from as usize], self.stamp[to as usize]),
                });
            }
        }
    }

    fn can_collapse(&self, from: u32, to: u32) -> bool {
        let nf = self.neighbors(from);
        if !nf.contains(&to) {
            return false;
        }
        // Link condition for a closed manifold: exactly two shared neighbors.
        let nt = self.neighbors(to);
        if nf.intersection(&nt).count() != 2 {
            return false;
        }
        // Moving `from` onto `to` must not flip or collapse remaining faces.
        for &f in &self.vertex_faces[from as usize] {
            let tri = self.faces[f];
            if tri.contains(&to) {
                continue;
            }
            let before = tri.map(|i| self.pos[i as usize]);
            let after = tri.map(|i| self.pos[if i == from { to } else { i } as usize]);
            let n0 = (before[1] - before[0]).cross(&(before[2] - before[0]));
            let n1 = (after[1] - after[0]).cross(&(after[2] - after[0]));
            if n1.norm() < 1e-12 || n0.dot(&n1) < 0.2 * n0.norm() * n1.norm() {
                return false;
            }
        }
        true
    }

    fn collapse(&mut self, from: u32, to: u32) {
        let faces_from = std::mem::take(&mut self.vertex_faces[from as usize]);
        for f in faces_from {
            if self.faces[f].contains(&to) {
                self.face_alive[f] = false;
                for &w in &self.faces[f] {
                    if w != from {
                        self.vertex_faces[w as usize].retain(|&g| g != f);
                    }
                }
            } else {
                for w in self.faces[f].iter_mut() {
                    if *w == from {
                        *w = to;
                    }
                }
                self.vertex_faces[to as usize].push(f);
            }
        }
        let qf = self.quadric[from as usize];
        self.quadric[to as usize] += qf;
        self.stamp[from as usize] = u32::MAX;
        self.stamp[to as usize] += 1;
    }
}

/// Collapses edges in order of quadric error until `target` vertices remain.
/// The input must be a closed manifold triangle mesh.
pub fn simplify_mesh(mesh: &TriangleMesh, target: usize) -> Result<SimplifiedMesh> {
    let n = mesh.vertices.len();
    if target < 4 || target > n {
        return Err(Error::Config(format!(
            "cannot simplify {n} vertices to {target}"
        )));
    }
    let mut quadric = vec![Matrix4::zeros(); n];
    let mut vertex_faces = vec![Vec::new(); n];
    for (fi, f) in mesh.faces.iter().enumerate() {
        let cross = mesh.face_cross(fi);
        let area2 = cross.norm();
        if area2 > 0.0 {
            let nrm = cross / area2;
            let d = -nrm.dot(&mesh.vertices[f[0] as usize]);
            let plane = Vector4::new(nrm.x, nrm.y, nrm.z, d);
            let q = plane * plane.transpose() * (0.5 * area2);
            for &v in f {
                quadric[v as usize] += q;
            }
        }
        for &v in f {
            vertex_faces[v as usize].push(fi);
        }
    }
    let mut state = State {
        pos: &mesh.vertices,
        faces: mesh.faces.clone(),
        face_alive: vec![true; mesh.faces.len()],
        vertex_faces,
        quadric,
        stamp: vec![0; n],
    };
    let mut heap = BinaryHeap::new();
    for (a, b) in mesh.edges() {
        for (from, to) in [(a, b), (b, a)] {
            heap.push(Candidate {
                cost: state.cost(from, to),
                from,
                to,
                stamp: (0, 0),
            });
        }
    }
    let mut alive = n;
    while alive > target {
        let Some(c) = heap.pop() else {
            return Err(Error::InvalidMesh(format!(
                "simplification stalled at {alive} vertices (target {target})"
            )));
        };
        if c.stamp != (state.stamp[c.from as usize], state.stamp[c.to as usize]) {
            continue;
        }
        if !state.can_collapse(c.from, c.to) {
            continue;
        }
        state.collapse(c.from, c.to);
        alive -= 1;
        state.push_edges(c.to, &mut heap);
    }

    let kept: Vec<usize> = (0..n).filter(|&v| state.stamp[v] != u32::MAX).collect();
    let mut remap = vec![u32::MAX; n];
    for (new, &old) in kept.iter().enumerate() {
        remap[old] = new as u32;
    }
    let faces = state
        .faces
        .iter()
        .zip(&state.face_alive)
        .filter(|(_, &a)| a)
        .map(|(f, _)| f.map(|v| remap[v as usize]))
        .collect();
    Ok(SimplifiedMesh {
        mesh: TriangleMesh {
            vertices: kept.iter().map(|&v| mesh.vertices[v]).collect(),
            faces,
        },
        kept,
    })
}
