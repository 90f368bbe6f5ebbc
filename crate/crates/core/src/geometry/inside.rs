use rayon::prelude::*;

use super::{Bvh, TriangleMesh, Vec3};

/// Inside/outside classification by generalized winding number >= 0.5.
pub fn inside_test(mesh: &TriangleMesh, points: &[Vec3]) -> Vec<bool> {
    let bvh = Bvh::new(mesh);
    inside_test_with(&bvh, points)
}

pub fn inside_test_with(bvh: &Bvh, points: &[Vec3]) -> Vec<bool> {
    points
        .par_iter()
        .map(|p| bvh.winding_number(p) >= 0.5)
        .collect()
}
