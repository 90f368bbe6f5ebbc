use std::collections::HashMap;

use crate::geometry::TriangleMesh;

/// Neighbors of `center` in the cyclic order given by face orientation,
/// starting from the lowest index. Falls back to ascending order around
/// boundary or non-manifold vertices.
fn ordered_ring(mesh_faces: &[[u32; 3]], incident: &[usize], center: u32) -> Vec<u32> {
    let mut next: HashMap<u32, u32> = HashMap::new();
    for &f in incident {
        let t = mesh_faces[f];
        let k = t.iter().position(|&v| v == center).unwrap();
        next.insert(t[(k + 1) % 3], t[(k + 2) % 3]);
    }
    let mut sorted: Vec<u32> = next.keys().copied().collect();
    sorted.sort_unstable();
    let Some(&start) = sorted.first() else {
        return Vec::new();
    };
    let mut ring = vec![start];
    let mut cur = start;
    while let Some(&n) = next.get(&cur) {
        if n == start {
            break;
        }
        if ring.len() > next.len() {
            return sorted;
        }
        ring.push(n);
        cur = n;
    }
    if ring.len() != next.len() {
        return sorted;
    }
    ring
}

/// Fixed-length spiral sequences: the vertex itself, then its one-ring in
/// cyclic order, then outer rings breadth-first, padded with the center.
pub fn spiral_table(mesh: &TriangleMesh, length: usize) -> Vec<u32> {
    let n = mesh.vertices.len();
    let mut incident = vec![Vec::new(); n];
    for (fi, f) in mesh.faces.iter().enumerate() {
        for &v in f {
            incident[v as usize].push(fi);
        }
    }
    let rings: Vec<Vec<u32>> = (0..n)
        .map(|v| ordered_ring(&mesh.faces, &incident[v], v as u32))
        .collect();
    let mut table = Vec::with_capacity(n * length);
    for v in 0..n as u32 {
        let mut seq = vec![v];
        let mut frontier = 0;
        while seq.len() < length && frontier < seq.len() {
            let c = seq[frontier];
            frontier += 1;
            for &w in &rings[c as usize] {
                if seq.len() >= length {
                    break;
                }
                if !seq.contains(&w) {
                    seq.push(w);
                }
            }
        }
        seq.resize(length, v);
        table.extend(seq);
    }
    table
}
