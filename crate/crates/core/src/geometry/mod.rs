//! Triangle meshes, signed distance grids and spatial queries.

pub mod bvh;
mod components;
mod inside;
pub mod io;
mod kdtree;
mod mesh;
mod sampling;
pub mod sdf;
pub mod shapes;

pub type Vec3 = nalgebra::Vector3<f64>;
pub type Mat3 = nalgebra::Matrix3<f64>;

pub use bvh::Bvh;
pub use components::{component_count, connected_components};
pub use inside::{inside_test, inside_test_with};
pub use kdtree::KdTree;
pub use mesh::{compute_aabb, Aabb, TriangleMesh};
pub use sampling::sample_surface_points;
pub use sdf::{build_sdf_grid, SdfConfig, SdfGradient, SdfGrid, SignMode};
