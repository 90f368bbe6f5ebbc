//! Dense signed distance grids built from triangle meshes.
//!
//! Values are exact point-triangle distances sampled at grid nodes, signed
//! negative inside the solid. Queries interpolate trilinearly; outside the grid
//! the value at the closest boundary point is extended by the Euclidean
//! distance to the box so it only grows away from the scene.

use std::collections::HashMap;
use std::io::{Read, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::bvh::{Bvh, TriangleFeature};
use super::{Aabb, TriangleMesh, Vec3};
use crate::error::{Error, Result};

const CACHE_MAGIC: &[u8; 6] = b"SPSDF1";

/// How the inside/outside sign of each grid node is decided.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SignMode {
    /// Generalized winding number >= 0.5. Tolerates holes and overlapping parts.
    #[default]
    WindingNumber,
    /// Angle-weighted pseudonormal of the closest feature. Watertight input only.
    Pseudonormal,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SdfConfig {
    pub voxel_size: f64,
    pub padding: f64,
    pub max_voxels: usize,
    pub sign_mode: SignMode,
}

impl Default for SdfConfig {
    fn default() -> Self {
        SdfConfig {
            voxel_size: 0.05,
            padding: 0.2,
            max_voxels: 256 * 256 * 256,
            sign_mode: SignMode::WindingNumber,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SdfGrid {
    pub origin: Vec3,
    pub voxel_size: f64,
    pub dims: [usize; 3],
    /// Node values, x fastest, then y, then z.
    pub values: Vec<f32>,
}

/// Result of [`SdfGrid::gradient`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SdfGradient {
    pub gradient: Vec3,
    /// True when `p` was too close to the grid boundary for central differences.
    pub one_sided: bool,
}

/// Builds a signed distance grid covering the mesh bounds plus `padding`.
pub fn build_sdf_grid(mesh: &TriangleMesh, config: &SdfConfig) -> Result<SdfGrid> {
    if mesh.is_empty() {
        return Err(Error::EmptyMesh);
    }
    if !(config.voxel_size > 0.0) {
        return Err(Error::Config(format!(
            "voxel_size must be positive, got {}",
            config.voxel_size
        )));
    }
    let h = config.voxel_size;
    let bounds = Aabb::from_points(&mesh.vertices).expanded(config.padding.max(0.0));
    let ext = bounds.extent();
    let dims = [0, 1, 2].map(|i| ((ext[i] / h - 1e-9).ceil() as usize + 1).max(2));
    let required = dims[0] * dims[1] * dims[2];
    if required > config.max_voxels {
        let volume = ext.x.max(h) * ext.y.max(h) * ext.z.max(h);
        return Err(Error::GridTooLarge {
            required,
            dims,
            limit: config.max_voxels,
            suggested_voxel_size: (volume / config.max_voxels as f64).cbrt() * 1.05,
        });
    }
    // Center the node lattice on the padded bounds.
    let covered = Vec3::new(
        (dims[0] - 1) as f64 * h,
        (dims[1] - 1) as f64 * h,
        (dims[2] - 1) as f64 * h,
    );
    let origin = bounds.center() - 0.5 * covered;

    let bvh = Bvh::new(mesh);
    let pseudo = match config.sign_mode {
        SignMode::Pseudonormal => Some(Pseudonormals::new(mesh)),
        SignMode::WindingNumber => None,
    };
    let values: Vec<f32> = (0..required)
        .into_par_iter()
        .map(|idx| {
            let i = idx % dims[0];
            let j = (idx / dims[0]) % dims[1];
            let k = idx / (dims[0] * dims[1]);
            let p = origin + h * Vec3::new(i as f64, j as f64, k as f64);
            let hit = bvh.closest(&p).expect("non-empty mesh");
            let d = hit.distance_squared.sqrt();
            let inside = match &pseudo {
                Some(pn) => pn.inside(mesh, &p, &hit),
                None => bvh.winding_number(&p) >= 0.5,
            };
            (if inside { -d } else { d }) as f32
        })
        .collect();
    Ok(SdfGrid {
        origin,
        voxel_size: h,
        dims,
        values,
    })
}

/// Per-mesh-vertex and per-edge angle-weighted normals.
struct Pseudonormals {
    vertex: Vec<Vec3>,
    edge: HashMap<(u32, u32), Vec3>,
}

impl Pseudonormals {
    fn new(mesh: &TriangleMesh) -> Self {
        let mut vertex = vec![Vec3::zeros(); mesh.vertices.len()];
        let mut edge: HashMap<(u32, u32), Vec3> = HashMap::new();
        for (fi, f) in mesh.faces.iter().enumerate() {
            let n = mesh.face_normal(fi);
            let t = mesh.triangle(fi);
            for k in 0..3 {
                let e1 = t[(k + 1) % 3] - t[k];
                let e2 = t[(k + 2) % 3] - t[k];
                let cos = e1.dot(&e2) / (e1.norm() * e2.norm());
                vertex[f[k] as usize] += cos.clamp(-1.0, 1.0).acos() * n;
                let (a, b) = (f[k], f[(k + 1) % 3]);
                *edge.entry((a.min(b), a.max(b))).or_insert_with(Vec3::zeros) += n;
            }
        }
        Pseudonormals { vertex, edge }
    }

    fn inside(&self, mesh: &TriangleMesh, p: &Vec3, hit: &super::bvh::ClosestHit) -> bool {
        let f = mesh.faces[hit.face];
        let n = match hit.feature {
            TriangleFeature::Face => mesh.face_normal(hit.face),
            TriangleFeature::Vertex(k) => self.vertex[f[k as usize] as usize],
            TriangleFeature::Edge(k) => {
                let (a, b) = (f[k as usize], f[(k as usize + 1) % 3]);
                self.edge[&(a.min(b), a.max(b))]
            }
        };
        (p - hit.point).dot(&n) < 0.0
    }
}

impl SdfGrid {
    pub fn node_count(&self) -> usize {
        self.dims[0] * self.dims[1] * self.dims[2]
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        i + self.dims[0] * (j + self.dims[1] * k)
    }

    #[inline]
    pub fn node_value(&self, i: usize, j: usize, k: usize) -> f64 {
        self.values[self.index(i, j, k)] as f64
    }

    pub fn node_position(&self, i: usize, j: usize, k: usize) -> Vec3 {
        self.origin + self.voxel_size * Vec3::new(i as f64, j as f64, k as f64)
    }

    pub fn bounds(&self) -> Aabb {
        Aabb {
            min: self.origin,
            max: self.node_position(self.dims[0] - 1, self.dims[1] - 1, self.dims[2] - 1),
        }
    }

    /// Lower corner node of the interpolation cell holding `p`, or `None`
    /// outside the grid.
    pub fn cell_of(&self, p: &Vec3) -> Option<[usize; 3]> {
        let mut cell = [0usize; 3];
        for a in 0..3 {
            let u = (p[a] - self.origin[a]) / self.voxel_size;
            let n = self.dims[a] - 1;
            if !(0.0..=n as f64).contains(&u) {
                return None;
            }
            cell[a] = (u.floor() as usize).min(n - 1);
        }
        Some(cell)
    }

    /// Like [`Self::cell_of`] but clamps to the grid, absorbing rounding at
    /// the upper faces.
    fn clamped_cell(&self, p: &Vec3) -> [usize; 3] {
        let mut cell = [0usize; 3];
        for a in 0..3 {
            let u = (p[a] - self.origin[a]) / self.voxel_size;
            let n = self.dims[a] - 1;
            cell[a] = (u.max(0.0).floor() as usize).min(n - 1);
        }
        cell
    }

    /// Trilinear polynomial of `cell` evaluated at `p` (extrapolating if `p`
    /// lies outside the cell), with its exact gradient.
    pub fn eval_cell(&self, cell: [usize; 3], p: &Vec3) -> (f64, Vec3) {
        let h = self.voxel_size;
        let base = self.node_position(cell[0], cell[1], cell[2]);
        let fx = (p.x - base.x) / h;
        let fy = (p.y - base.y) / h;
        let fz = (p.z - base.z) / h;
        let [i, j, k] = cell;
        let c000 = self.node_value(i, j, k);
        let c100 = self.node_value(i + 1, j, k);
        let c010 = self.node_value(i, j + 1, k);
        let c110 = self.node_value(i + 1, j + 1, k);
        let c001 = self.node_value(i, j, k + 1);
        let c101 = self.node_value(i + 1, j, k + 1);
        let c011 = self.node_value(i, j + 1, k + 1);
        let c111 = self.node_value(i + 1, j + 1, k + 1);

        let c00 = c000 + (c100 - c000) * fx;
        let c10 = c010 + (c110 - c010) * fx;
        let c01 = c001 + (c101 - c001) * fx;
        let c11 = c011 + (c111 - c011) * fx;
        let c0 = c00 + (c10 - c00) * fy;
        let c1 = c01 + (c11 - c01) * fy;
        let value = c0 + (c1 - c0) * fz;

        let dx0 = (c100 - c000) + ((c110 - c010) - (c100 - c000)) * fy;
        let dx1 = (c101 - c001) + ((c111 - c011) - (c101 - c001)) * fy;
        let dx = dx0 + (dx1 - dx0) * fz;
        let dy = (c10 - c00) + ((c11 - c01) - (c10 - c00)) * fz;
        let dz = c1 - c0;
        (value, Vec3::new(dx, dy, dz) / h)
    }

    /// Interpolated signed distance at `p`.
    pub fn query(&self, p: &Vec3) -> f64 {
        self.query_with_gradient(p).0
    }

    /// Interpolated signed distance and its analytic gradient.
    pub fn query_with_gradient(&self, p: &Vec3) -> (f64, Vec3) {
        if let Some(cell) = self.cell_of(p) {
            return self.eval_cell(cell, p);
        }
        let b = self.bounds();
        let q = b.clamp(p);
        let cell = self.clamped_cell(&q);
        let (v, g) = self.eval_cell(cell, &q);
        let offset = p - q;
        let d = offset.norm();
        let mut grad = offset / d;
        if v > 0.0 {
            // Only the tangential part of the boundary gradient survives clamping.
            for a in 0..3 {
                if offset[a] == 0.0 {
                    grad[a] += g[a];
                }
            }
        }
        (v.max(0.0) + d, grad)
    }

    /// Central-difference gradient of [`Self::query`] with step `voxel_size / 2`.
    pub fn gradient(&self, p: &Vec3) -> SdfGradient {
        let step = 0.5 * self.voxel_size;
        let b = self.bounds();
        let mut grad = Vec3::zeros();
        let mut one_sided = false;
        for a in 0..3 {
            let mut e = Vec3::zeros();
            e[a] = step;
            let lo_ok = p[a] - self.voxel_size >= b.min[a];
            let hi_ok = p[a] + self.voxel_size <= b.max[a];
            grad[a] = match (lo_ok, hi_ok) {
                (true, true) => (self.query(&(p + e)) - self.query(&(p - e))) / (2.0 * step),
                (false, true) => {
                    one_sided = true;
                    (self.query(&(p + e)) - self.query(p)) / step
                }
                (true, false) => {
                    one_sided = true;
                    (self.query(p) - self.query(&(p - e))) / step
                }
                (false, false) => {
                    one_sided = true;
                    0.0
                }
            };
        }
        SdfGradient {
            gradient: grad,
            one_sided,
        }
    }

    pub fn write_to(&self, mut w: impl Write) -> std::io::Result<()> {
        w.write_all(CACHE_MAGIC)?;
        for a in 0..3 {
            w.write_all(&self.origin[a].to_le_bytes())?;
        }
        w.write_all(&self.voxel_size.to_le_bytes())?;
        for d in self.dims {
            w.write_all(&(d as u32).to_le_bytes())?;
        }
        let mut buf = Vec::with_capacity(self.values.len() * 4);
        for v in &self.values {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        w.write_all(&buf)
    }

    pub fn read_from(mut r: impl Read) -> std::io::Result<SdfGrid> {
        use std::io::{Error as IoError, ErrorKind};
        let mut magic = [0u8; 6];
        r.read_exact(&mut magic)?;
        if &magic != CACHE_MAGIC {
            return Err(IoError::new(ErrorKind::InvalidData, "not an SPSDF1 file"));
        }
        let mut f8 = [0u8; 8];
        let mut read_f64 = |r: &mut dyn Read| -> std::io::Result<f64> {
            r.read_exact(&mut f8)?;
            Ok(f64::from_le_bytes(f8))
        };
        let origin = Vec3::new(read_f64(&mut r)?, read_f64(&mut r)?, read_f64(&mut r)?);
        let voxel_size = read_f64(&mut r)?;
        let mut dims = [0usize; 3];
        for d in dims.iter_mut() {
            let mut b = [0u8; 4];
            r.read_exact(&mut b)?;
            *d = u32::from_le_bytes(b) as usize;
        }
        if dims.iter().any(|&d| d < 2) || !(voxel_size > 0.0) {
            return Err(IoError::new(ErrorKind::InvalidData, "bad grid header"));
        }
        let n = dims[0]
            .checked_mul(dims[1])
            .and_then(|x| x.checked_mul(dims[2]))
            .ok_or_else(|| IoError::new(ErrorKind::InvalidData, "grid too large"))?;
        let mut bytes = vec![0u8; n * 4];
        r.read_exact(&mut bytes)?;
        let values: Vec<f32> = bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        if values.iter().any(|v| !v.is_finite()) {
            return Err(IoError::new(ErrorKind::InvalidData, "non-finite sdf value"));
        }
        Ok(SdfGrid {
            origin,
            voxel_size,
            dims,
            values,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_to(std::io::BufWriter::new(file))
            .map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<SdfGrid> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_from(std::io::BufReader::new(file)).map_err(|e| Error::io(path, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::shapes;
    use rand::{Rng, SeedableRng};

    fn unit_cube_grid() -> SdfGrid {
        let cube = shapes::cuboid(Vec3::zeros(), Vec3::repeat(0.5));
        build_sdf_grid(&cube, &SdfConfig::default()).unwrap()
    }

    #[test]
    fn cube_center_and_exterior_values() {
        let grid = unit_cube_grid();
        assert!((grid.query(&Vec3::zeros()) + 0.5).abs() <= 0.05);
        assert!((grid.query(&Vec3::new(1.0, 0.0, 0.0)) - 0.5).abs() <= 0.05);
    }

    #[test]
    fn sphere_matches_analytic_distance() {
        let sphere = shapes::icosphere(Vec3::zeros(), 0.3, 4);
        let cfg = SdfConfig {
            voxel_size: 0.02,
            ..SdfConfig::default()
        };
        let grid = build_sdf_grid(&sphere, &cfg).unwrap();
        let b = grid.bounds();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let mut worst: f64 = 0.0;
        for _ in 0..1000 {
            let p = Vec3::new(
                rng.random_range(b.min.x..b.max.x),
                rng.random_range(b.min.y..b.max.y),
                rng.random_range(b.min.z..b.max.z),
            );
            worst = worst.max((grid.query(&p) - (p.norm() - 0.3)).abs());
        }
        assert!(worst <= 0.03, "max error {worst}");
    }

    #[test]
    fn node_identity_and_midpoint_linearity() {
        let grid = unit_cube_grid();
        let (i, j, k) = (3, 7, 5);
        let p = grid.node_position(i, j, k);
        assert_eq!(grid.query(&p), grid.node_value(i, j, k));
        let q = grid.node_position(i + 1, j, k);
        let mid = grid.query(&(0.5 * (p + q)));
        let mean = 0.5 * (grid.node_value(i, j, k) + grid.node_value(i + 1, j, k));
        assert!((mid - mean).abs() < 1e-12);
    }

    /// Independent trilinear oracle: weights built from the eight corners directly.
    fn trilinear_oracle(grid: &SdfGrid, p: &Vec3) -> f64 {
        let u = (p - grid.origin) / grid.voxel_size;
        let base = [0, 1, 2].map(|a| (u[a].floor() as usize).min(grid.dims[a] - 2));
        let mut acc = 0.0;
        for corner in 0..8 {
            let off = [corner & 1, (corner >> 1) & 1, (corner >> 2) & 1];
            let mut w = 1.0;
            for a in 0..3 {
                let t = u[a] - base[a] as f64;
                w *= if off[a] == 1 { t } else { 1.0 - t };
            }
            acc += w * grid.node_value(base[0] + off[0], base[1] + off[1], base[2] + off[2]);
        }
        acc
    }

    #[test]
    fn interpolation_matches_scalar_oracle() {
        let grid = unit_cube_grid();
        let b = grid.bounds();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for _ in 0..500 {
            let p = Vec3::new(
                rng.random_range(b.min.x..b.max.x),
                rng.random_range(b.min.y..b.max.y),
                rng.random_range(b.min.z..b.max.z),
            );
            assert!((grid.query(&p) - trilinear_oracle(&grid, &p)).abs() < 1e-9);
        }
    }

    #[test]
    fn outside_queries_are_positive_and_grow() {
        let grid = unit_cube_grid();
        let far = grid.query(&Vec3::new(5.0, 0.0, 0.0));
        let near = grid.query(&Vec3::new(2.0, 0.0, 0.0));
        assert!(near > 0.0 && far > near);
        assert!((far - 4.5).abs() < 0.06);
    }

    #[test]
    fn floor_gradient_points_up() {
        let slab = shapes::cuboid_between(Vec3::new(-1.0, -1.0, -0.5), Vec3::new(1.0, 1.0, 0.0));
        let cfg = SdfConfig {
            padding: 0.8,
            ..SdfConfig::default()
        };
        let grid = build_sdf_grid(&slab, &cfg).unwrap();
        let g = grid.gradient(&Vec3::new(0.0, 0.0, 0.5));
        assert!(!g.one_sided);
        assert!((g.gradient - Vec3::z()).norm() < 1e-3, "{:?}", g.gradient);
    }

    #[test]
    fn sphere_gradient_is_radial() {
        let sphere = shapes::icosphere(Vec3::zeros(), 0.3, 4);
        let cfg = SdfConfig {
            voxel_size: 0.02,
            padding: 0.4,
            ..SdfConfig::default()
        };
        let grid = build_sdf_grid(&sphere, &cfg).unwrap();
        let g = grid.gradient(&Vec3::new(0.5, 0.0, 0.0));
        assert!((g.gradient - Vec3::x()).norm() <= 0.05, "{:?}", g.gradient);
    }

    #[test]
    fn gradient_self_consistent_with_finer_differences() {
        let sphere = shapes::icosphere(Vec3::zeros(), 0.3, 4);
        let cfg = SdfConfig {
            voxel_size: 0.02,
            padding: 0.3,
            ..SdfConfig::default()
        };
        let grid = build_sdf_grid(&sphere, &cfg).unwrap();
        let step = grid.voxel_size / 4.0;
        for p in [
            Vec3::new(0.45, 0.05, 0.02),
            Vec3::new(-0.1, 0.42, 0.13),
            Vec3::new(0.2, -0.25, -0.38),
        ] {
            let g = grid.gradient(&p).gradient;
            let fine = Vec3::from_fn(|a, _| {
                let mut e = Vec3::zeros();
                e[a] = step;
                (grid.query(&(p + e)) - grid.query(&(p - e))) / (2.0 * step)
            });
            assert!((g - fine).norm() / fine.norm() < 1e-2, "{g:?} vs {fine:?}");
        }
    }

    #[test]
    fn near_boundary_gradient_is_flagged() {
        let grid = unit_cube_grid();
        assert!(grid.gradient(&grid.origin).one_sided);
    }

    #[test]
    fn analytic_gradient_matches_differences_inside_cells() {
        let grid = unit_cube_grid();
        let p = Vec3::new(0.31, -0.12, 0.44);
        let cell = grid.cell_of(&p).unwrap();
        let (_, g) = grid.eval_cell(cell, &p);
        let eps = 1e-6;
        for a in 0..3 {
            let mut e = Vec3::zeros();
            e[a] = eps;
            let fd =
                (grid.eval_cell(cell, &(p + e)).0 - grid.eval_cell(cell, &(p - e)).0) / (2.0 * eps);
            assert!((fd - g[a]).abs() < 1e-6);
        }
    }

    #[test]
    fn pseudonormal_sign_agrees_with_winding_on_watertight_mesh() {
        let cube = shapes::cuboid(Vec3::zeros(), Vec3::repeat(0.5));
        let a = build_sdf_grid(&cube, &SdfConfig::default()).unwrap();
        let b = build_sdf_grid(
            &cube,
            &SdfConfig {
                sign_mode: SignMode::Pseudonormal,
                ..SdfConfig::default()
            },
        )
        .unwrap();
        // Nodes lying on the surface have distance ~0 and an arbitrary sign.
        for (i, (x, y)) in a.values.iter().zip(&b.values).enumerate() {
            assert_eq!(x.abs(), y.abs(), "node {i}");
            if x.abs() > 1e-6 {
                assert_eq!(x, y, "node {i}");
            }
        }
    }

    #[test]
    fn oversized_grid_reports_required_resolution() {
        let cube = shapes::cuboid(Vec3::zeros(), Vec3::repeat(5.0));
        let cfg = SdfConfig {
            voxel_size: 0.01,
            ..SdfConfig::default()
        };
        match build_sdf_grid(&cube, &cfg) {
            Err(Error::GridTooLarge {
                suggested_voxel_size,
                ..
            }) => assert!(suggested_voxel_size > 0.04),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn empty_mesh_is_rejected() {
        assert!(matches!(
            build_sdf_grid(&TriangleMesh::default(), &SdfConfig::default()),
            Err(Error::EmptyMesh)
        ));
    }

    #[test]
    fn mirror_symmetric_mesh_gives_mirror_symmetric_field() {
        let cube = shapes::cuboid(Vec3::zeros(), Vec3::new(0.4, 0.25, 0.3));
        let grid = build_sdf_grid(&cube, &SdfConfig::default()).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let p = Vec3::new(
                rng.random_range(-0.6..0.6),
                rng.random_range(-0.4..0.4),
                rng.random_range(-0.5..0.5),
            );
            let m = Vec3::new(-p.x, p.y, p.z);
            assert!((grid.query(&p) - grid.query(&m)).abs() < 1e-6);
        }
    }

    #[test]
    fn cache_round_trip_is_exact() {
        let grid = unit_cube_grid();
        let mut buf = Vec::new();
        grid.write_to(&mut buf).unwrap();
        assert_eq!(&buf[..6], b"SPSDF1");
        assert_eq!(buf.len(), 6 + 32 + 12 + 4 * grid.node_count());
        let back = SdfGrid::read_from(buf.as_slice()).unwrap();
        assert_eq!(back, grid);
    }
}
