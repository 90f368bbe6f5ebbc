//! Closed, outward-oriented primitive meshes for fixtures and tests.

use std::collections::HashMap;
use std::f64::consts::PI;

use super::{TriangleMesh, Vec3};

/// Axis-aligned box given by center and half extents.
pub fn cuboid(center: Vec3, half: Vec3) -> TriangleMesh {
    let mut vertices = Vec::with_capacity(8);
    for i in 0..8 {
        let s = Vec3::new(
            if i & 1 == 0 { -1.0 } else { 1.0 },
            if i & 2 == 0 { -1.0 } else { 1.0 },
            if i & 4 == 0 { -1.0 } else { 1.0 },
        );
        vertices.push(center + half.component_mul(&s));
    }
    let faces = vec![
        [0, 2, 1],
        [1, 2, 3], // -z
        [4, 5, 6],
        [5, 7, 6], // +z
        [0, 1, 4],
        [1, 5, 4], // -y
        [2, 6, 3],
        [3, 6, 7], // +y
        [0, 4, 2],
        [2, 4, 6], // -x
        [1, 3, 5],
        [3, 7, 5], // +x
    ];
    TriangleMesh { vertices, faces }
}

/// Box spanning `min..max`.
pub fn cuboid_between(min: Vec3, max: Vec3) -> TriangleMesh {
    cuboid(0.5 * (min + max), 0.5 * (max - min))
}

/// Subdivided icosahedron projected onto a sphere.
pub fn icosphere(center: Vec3, radius: f64, subdivisions: usize) -> TriangleMesh {
    let t = (1.0 + 5f64.sqrt()) / 2.0;
    let mut verts: Vec<Vec3> = [
        (-1.0, t, 0.0),
        (1.0, t, 0.0),
        (-1.0, -t, 0.0),
        (1.0, -t, 0.0),
        (0.0, -1.0, t),
        (0.0, 1.0, t),
        (0.0, -1.0, -t),
        (0.0, 1.0, -t),
        (t, 0.0, -1.0),
        (t, 0.0, 1.0),
        (-t, 0.0, -1.0),
        (-t, 0.0, 1.0),
    ]
    .iter()
    .map(|&(x, y, z)| Vec3::new(x, y, z).normalize())
    .collect();
    let mut faces: Vec<[u32; 3]> = vec![
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];
    for _ in 0..subdivisions {
        let mut midpoint: HashMap<(u32, u32), u32> = HashMap::new();
        let mut mid = |a: u32, b: u32, verts: &mut Vec<Vec3>| -> u32 {
            let key = (a.min(b), a.max(b));
            *midpoint.entry(key).or_insert_with(|| {
                verts.push((0.5 * (verts[a as usize] + verts[b as usize])).normalize());
                (verts.len() - 1) as u32
            })
        };
        let mut next = Vec::with_capacity(faces.len() * 4);
        for [a, b, c] in faces {
            let ab = mid(a, b, &mut verts);
            let bc = mid(b, c, &mut verts);
            let ca = mid(c, a, &mut verts);
            next.extend_from_slice(&[[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]);
        }
        faces = next;
    }
    TriangleMesh {
        vertices: verts.into_iter().map(|v| center + radius * v).collect(),
        faces,
    }
}

/// Torus around the z axis.
pub fn torus(center: Vec3, major: f64, minor: f64, segments: usize, rings: usize) -> TriangleMesh {
    let mut vertices = Vec::with_capacity(segments * rings);
    for i in 0..segments {
        let u = 2.0 * PI * i as f64 / segments as f64;
        for j in 0..rings {
            let v = 2.0 * PI * j as f64 / rings as f64;
            let r = major + minor * v.cos();
            vertices.push(center + Vec3::new(r * u.cos(), r * u.sin(), minor * v.sin()));
        }
    }
    let idx = |i: usize, j: usize| ((i % segments) * rings + (j % rings)) as u32;
    let mut faces = Vec::with_capacity(segments * rings * 2);
    for i in 0..segments {
        for j in 0..rings {
            let (a, b, c, d) = (idx(i, j), idx(i + 1, j), idx(i + 1, j + 1), idx(i, j + 1));
            faces.push([a, b, c]);
            faces.push([a, c, d]);
        }
    }
    TriangleMesh { vertices, faces }
}

/// Closed cylinder between two points, with capped ends.
pub fn cylinder(a: Vec3, b: Vec3, radius: f64, segments: usize, stacks: usize) -> TriangleMesh {
    let axis = b - a;
    let dir = axis.normalize();
    let helper = if dir.x.abs() < 0.9 {
        Vec3::x()
    } else {
        Vec3::y()
    };
    let u = dir.cross(&helper).normalize();
    let v = dir.cross(&u);
    let mut vertices = Vec::new();
    for s in 0..=stacks {
        let base = a + axis * (s as f64 / stacks as f64);
        for k in 0..segments {
            let th = 2.0 * PI * k as f64 / segments as f64;
            vertices.push(base + radius * (th.cos() * u + th.sin() * v));
        }
    }
    let ring = |s: usize, k: usize| (s * segments + k % segments) as u32;
    let mut faces = Vec::new();
    for s in 0..stacks {
        for k in 0..segments {
            let (p, q, r, t) = (
                ring(s, k),
                ring(s, k + 1),
                ring(s + 1, k + 1),
                ring(s + 1, k),
            );
            faces.push([p, q, r]);
            faces.push([p, r, t]);
        }
    }
    let bottom = vertices.len() as u32;
    vertices.push(a);
    let top = vertices.len() as u32;
    vertices.push(b);
    for k in 0..segments {
        faces.push([bottom, ring(0, k + 1), ring(0, k)]);
        faces.push([top, ring(stacks, k), ring(stacks, k + 1)]);
    }
    TriangleMesh { vertices, faces }
}

/// Two-triangle rectangle at height `z`, facing +z.
pub fn quad_xy(min: (f64, f64), max: (f64, f64), z: f64) -> TriangleMesh {
    TriangleMesh {
        vertices: vec![
            Vec3::new(min.0, min.1, z),
            Vec3::new(max.0, min.1, z),
            Vec3::new(max.0, max.1, z),
            Vec3::new(min.0, max.1, z),
        ],
        faces: vec![[0, 1, 2], [0, 2, 3]],
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn signed_volume(m: &TriangleMesh) -> f64 {
        (0..m.faces.len())
            .map(|f| {
                let [a, b, c] = m.triangle(f);
                a.dot(&b.cross(&c)) / 6.0
            })
            .sum()
    }

    #[test]
    fn primitives_are_outward_and_valid() {
        let cube = cuboid(Vec3::zeros(), Vec3::repeat(0.5));
        assert!((signed_volume(&cube) - 1.0).abs() < 1e-12);
        let sphere = icosphere(Vec3::zeros(), 1.0, 3);
        assert!(sphere.validate().is_ok());
        assert!((signed_volume(&sphere) - 4.0 / 3.0 * PI).abs() < 0.05);
        let tor = torus(Vec3::zeros(), 1.0, 0.3, 48, 24);
        assert!(signed_volume(&tor) > 0.0);
        let cyl = cylinder(Vec3::zeros(), Vec3::z(), 0.1, 16, 3);
        assert!(cyl.validate().is_ok());
        assert!(signed_volume(&cyl) > 0.0);
    }
}
