use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{TriangleMesh, Vec3};
use crate::error::{Error, Result};

/// Area-weighted uniform samples on the mesh surface (or on `face_subset`).
pub fn sample_surface_points(
    mesh: &TriangleMesh,
    face_subset: Option<&[usize]>,
    count: usize,
    seed: u64,
) -> Result<Vec<Vec3>> {
    let all: Vec<usize>;
    let faces = match face_subset {
        Some([]) => return Err(Error::EmptySubset),
        Some(f) => f,
        None => {
            all = (0..mesh.faces.len()).collect();
            &all
        }
    };
    let mut cumulative = Vec::with_capacity(faces.len());
    let mut total = 0.0;
    for &f in faces {
        total += mesh.face_area(f);
        cumulative.push(total);
    }
    if !(total > 0.0) {
        return Err(Error::ZeroArea);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let target = rng.random::<f64>() * total;
        let slot = cumulative
            .partition_point(|&c| c <= target)
            .min(faces.len() - 1);
        let [a, b, c] = mesh.triangle(faces[slot]);
        let r1: f64 = rng.random();
        let r2: f64 = rng.random();
        let s = r1.sqrt();
        out.push((1.0 - s) * a + s * (1.0 - r2) * b + s * r2 * c);
    }
    Ok(out)
}
