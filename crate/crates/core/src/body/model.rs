use serde::{Deserialize, Serialize};

use super::rotation::{
    axis_angle_jacobian, axis_angle_to_matrix, yaw_matrix, yaw_matrix_derivative,
};
use crate::error::{Error, Result};
use crate::geometry::{Mat3, TriangleMesh, Vec3};

/// Joints in the default body: the root plus 21 articulated joints.
pub const JOINT_COUNT: usize = 22;
/// Length of the articulated pose vector (21 joints x axis-angle).
pub const POSE_DIM: usize = 63;
/// Vertex count of the simplified body mesh.
pub const SIMPLIFIED_COUNT: usize = 655;

/// Compressed sparse rows with single-precision storage.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Csr {
    pub rows: usize,
    pub cols: usize,
    pub indptr: Vec<u32>,
    pub indices: Vec<u32>,
    pub values: Vec<f32>,
}

impl Csr {
    /// Builds from per-row `(column, value)` lists, rounding values to f32.
    pub fn from_rows(cols: usize, rows: &[Vec<(u32, f64)>]) -> Self {
        let mut out = Csr {
            rows: rows.len(),
            cols,
            indptr: Vec::with_capacity(rows.len() + 1),
            ..Default::default()
        };
        out.indptr.push(0);
        for row in rows {
            for &(c, v) in row {
                out.indices.push(c);
                out.values.push(v as f32);
            }
            out.indptr.push(out.indices.len() as u32);
        }
        out
    }

    pub fn identity(n: usize) -> Self {
        let rows: Vec<_> = (0..n as u32).map(|i| vec![(i, 1.0)]).collect();
        Csr::from_rows(n, &rows)
    }

    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, f32)> + '_ {
        let span = self.indptr[r] as usize..self.indptr[r + 1] as usize;
        self.indices[span.clone()]
            .iter()
            .zip(&self.values[span])
            .map(|(&c, &v)| (c as usize, v))
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    fn validate(&self, name: &str, rows: usize, cols: usize) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidAsset(format!("{name}: {msg}")));
        if self.rows != rows || self.cols != cols {
            return bad(format!(
                "shape {}x{}, expected {rows}x{cols}",
                self.rows, self.cols
            ));
        }
        if self.indptr.len() != rows + 1
            || self.indptr[0] != 0
            || self.indptr.windows(2).any(|w| w[0] > w[1])
            || *self.indptr.last().unwrap() as usize != self.values.len()
            || self.indices.len() != self.values.len()
        {
            return bad("malformed row pointers".into());
        }
        if self.indices.iter().any(|&c| c as usize >= cols) {
            return bad("column index out of range".into());
        }
        Ok(())
    }

    /// Checks the row-stochastic invariant on the stored values.
    fn validate_stochastic(&self, name: &str) -> Result<()> {
        for r in 0..self.rows {
            let mut sum = 0.0f64;
            for (_, v) in self.row(r) {
                if !(v >= 0.0) {
                    return Err(Error::InvalidAsset(format!(
                        "{name}: row {r} has a negative or non-finite weight"
                    )));
                }
                sum += v as f64;
            }
            if (sum - 1.0).abs() > 1e-6 {
                return Err(Error::InvalidAsset(format!(
                    "{name}: row {r} sums to {sum}, expected 1"
                )));
            }
        }
        Ok(())
    }
}

/// Row-stochastic weights in double precision, renormalized from a [`Csr`].
#[derive(Clone, Debug, PartialEq)]
struct Weights {
    indptr: Vec<usize>,
    cols: Vec<usize>,
    values: Vec<f64>,
}

impl Weights {
    fn normalized(m: &Csr) -> Self {
        let mut values: Vec<f64> = m.values.iter().map(|&v| v as f64).collect();
        let indptr: Vec<usize> = m.indptr.iter().map(|&p| p as usize).collect();
        for r in 0..m.rows {
            let span = indptr[r]..indptr[r + 1];
            let sum: f64 = values[span.clone()].iter().sum();
            if sum > 0.0 {
                values[span].iter_mut().for_each(|v| *v /= sum);
            }
        }
        Weights {
            indptr,
            cols: m.indices.iter().map(|&c| c as usize).collect(),
            values,
        }
    }

    #[inline]
    fn row(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.indptr[r]..self.indptr[r + 1];
        self.cols[span.clone()]
            .iter()
            .copied()
            .zip(self.values[span].iter().copied())
    }

    fn apply_points(&self, points: &[Vec3]) -> Vec<Vec3> {
        (0..self.indptr.len() - 1)
            .map(|r| self.row(r).map(|(c, w)| w * points[c]).sum())
            .collect()
    }

    fn apply_scalars(&self, values: &[f64]) -> Vec<f64> {
        (0..self.indptr.len() - 1)
            .map(|r| self.row(r).map(|(c, w)| w * values[c]).sum())
            .collect()
    }
}

/// Raw, serializable content of a body asset.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct BodyParts {
    pub template: Vec<[f32; 3]>,
    pub faces: Vec<[u32; 3]>,
    /// Parent joint per joint; `-1` for the root. Parents precede children.
    pub parents: Vec<i32>,
    pub joint_names: Vec<String>,
    /// Joints x vertices.
    pub regressor: Csr,
    /// Vertices x joints.
    pub skinning: Csr,
    /// Simplified x full vertices.
    pub downsample: Csr,
    /// Full x simplified vertices.
    pub upsample: Csr,
    pub simplified_faces: Vec<[u32; 3]>,
    pub spiral_length: usize,
    /// Simplified vertex count x `spiral_length` neighbor indices.
    pub spiral: Vec<u32>,
    pub interior_vertex: Vec<u32>,
    /// Offset of each interior sample from its attachment vertex, rest pose.
    pub interior_offset: Vec<[f32; 3]>,
}

/// Articulated pose: per-joint axis-angle rotations, yaw about +z and a
/// global translation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PoseVector {
    pub theta: Vec<f64>,
    pub root_yaw: f64,
    pub translation: Vec3,
}

impl PoseVector {
    pub fn zero(dim: usize) -> Self {
        PoseVector {
            theta: vec![0.0; dim],
            root_yaw: 0.0,
            translation: Vec3::zeros(),
        }
    }

    pub fn from_theta(theta: Vec<f64>) -> Self {
        PoseVector {
            theta,
            root_yaw: 0.0,
            translation: Vec3::zeros(),
        }
    }

    pub fn joint_axis_angle(&self, joint: usize) -> Vec3 {
        let k = 3 * (joint - 1);
        Vec3::new(self.theta[k], self.theta[k + 1], self.theta[k + 2])
    }

    /// Each axis-angle has norm below pi (plus a small tolerance).
    pub fn is_valid(&self) -> bool {
        self.theta.len().is_multiple_of(3)
            && self.theta.iter().all(|v| v.is_finite())
            && self.theta.chunks_exact(3).all(|c| {
                (c[0] * c[0] + c[1] * c[1] + c[2] * c[2]).sqrt() < std::f64::consts::PI + 1e-3
            })
    }
}

/// Global joint transforms for one pose.
#[derive(Clone, Debug)]
pub struct Kinematics {
    pub rotations: Vec<Mat3>,
    pub positions: Vec<Vec3>,
    locals: Vec<Mat3>,
    /// `positions[j] - rotations[j] * rest_joint[j]`
    offsets: Vec<Vec3>,
}

/// Upstream gradients on the global joint transforms.
#[derive(Clone, Debug)]
pub struct KinematicsGrad {
    pub rotations: Vec<Mat3>,
    pub positions: Vec<Vec3>,
    offsets: Vec<Vec3>,
}

impl KinematicsGrad {
    pub fn zeros(joints: usize) -> Self {
        KinematicsGrad {
            rotations: vec![Mat3::zeros(); joints],
            positions: vec![Vec3::zeros(); joints],
            offsets: vec![Vec3::zeros(); joints],
        }
    }
}

/// Gradient with respect to the pose variables.
#[derive(Clone, Debug, PartialEq)]
pub struct PoseGradient {
    pub theta: Vec<f64>,
    pub root_yaw: f64,
    pub translation: Vec3,
}

/// A posed body: vertex positions and global joint positions.
#[derive(Clone, Debug)]
pub struct PosedBody {
    pub vertices: Vec<Vec3>,
    pub joints: Vec<Vec3>,
}

/// Template mesh with a joint tree and linear blend skinning.
#[derive(Clone, Debug)]
pub struct ArticulatedBody {
    parts: BodyParts,
    template: Vec<Vec3>,
    rest_joints: Vec<Vec3>,
    parents: Vec<Option<usize>>,
    skinning: Weights,
    downsample: Weights,
    upsample: Weights,
    interior: Vec<Vec3>,
}

impl ArticulatedBody {
    pub fn from_parts(parts: BodyParts) -> Result<Self> {
        let n = parts.template.len();
        let j = parts.parents.len();
        let bad = |msg: String| Err(Error::InvalidAsset(msg));
        if n == 0 || parts.faces.is_empty() {
            return bad("empty template".into());
        }
        if j == 0 || parts.parents[0] != -1 {
            return bad("joint 0 must be the root".into());
        }
        for (k, &p) in parts.parents.iter().enumerate().skip(1) {
            if p < 0 || p as usize >= k {
                return bad(format!(
                    "joint {k} has parent {p}; parents must precede children"
                ));
            }
        }
        if !parts.joint_names.is_empty() && parts.joint_names.len() != j {
            return bad("joint name count differs from joint count".into());
        }
        if parts.faces.iter().any(|f| {
            f.iter().any(|&i| i as usize >= n) || f[0] == f[1] || f[1] == f[2] || f[0] == f[2]
        }) {
            return bad("face references an invalid vertex".into());
        }
        if parts.template.iter().flatten().any(|v| !v.is_finite()) {
            return bad("non-finite template vertex".into());
        }
        parts.regressor.validate("regressor", j, n)?;
        parts.skinning.validate("skinning", n, j)?;
        let s = parts.downsample.rows;
        parts.downsample.validate("downsample", s, n)?;
        parts.upsample.validate("upsample", n, s)?;
        for (name, m) in [
            ("regressor", &parts.regressor),
            ("skinning", &parts.skinning),
            ("downsample", &parts.downsample),
            ("upsample", &parts.upsample),
        ] {
            m.validate_stochastic(name)?;
        }
        if parts
            .simplified_faces
            .iter()
            .flatten()
            .any(|&i| i as usize >= s)
        {
            return bad("simplified face index out of range".into());
        }
        if parts.spiral.len() != s * parts.spiral_length
            || parts.spiral.iter().any(|&i| i as usize >= s)
        {
            return bad("spiral table does not match the simplified mesh".into());
        }
        if parts.interior_vertex.len() != parts.interior_offset.len()
            || parts.interior_vertex.iter().any(|&v| v as usize >= n)
        {
            return bad("interior samples are inconsistent".into());
        }

        let template: Vec<Vec3> = parts
            .template
            .iter()
            .map(|p| Vec3::new(p[0] as f64, p[1] as f64, p[2] as f64))
            .collect();
        let regressor = Weights::normalized(&parts.regressor);
        let rest_joints = regressor.apply_points(&template);
        let interior = parts
            .interior_vertex
            .iter()
            .zip(&parts.interior_offset)
            .map(|(&v, o)| template[v as usize] + Vec3::new(o[0] as f64, o[1] as f64, o[2] as f64))
            .collect();
        Ok(ArticulatedBody {
            parents: parts
                .parents
                .iter()
                .map(|&p| (p >= 0).then_some(p as usize))
                .collect(),
            skinning: Weights::normalized(&parts.skinning),
            downsample: Weights::normalized(&parts.downsample),
            upsample: Weights::normalized(&parts.upsample),
            template,
            rest_joints,
            interior,
            parts,
        })
    }

    pub fn parts(&self) -> &BodyParts {
        &self.parts
    }

    pub fn vertex_count(&self) -> usize {
        self.template.len()
    }

    pub fn joint_count(&self) -> usize {
        self.parents.len()
    }

    pub fn pose_dim(&self) -> usize {
        3 * (self.joint_count() - 1)
    }

    pub fn simplified_count(&self) -> usize {
        self.parts.downsample.rows
    }

    pub fn template(&self) -> &[Vec3] {
        &self.template
    }

    pub fn faces(&self) -> &[[u32; 3]] {
        &self.parts.faces
    }

    pub fn parents(&self) -> &[Option<usize>] {
        &self.parents
    }

    pub fn rest_joints(&self) -> &[Vec3] {
        &self.rest_joints
    }

    pub fn template_mesh(&self) -> TriangleMesh {
        TriangleMesh {
            vertices: self.template.clone(),
            faces: self.parts.faces.clone(),
        }
    }

    pub fn zero_pose(&self) -> PoseVector {
        PoseVector::zero(self.pose_dim())
    }

    /// Skinning weights of one vertex as `(joint, weight)` pairs.
    pub fn skinning_row(&self, vertex: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.skinning.row(vertex)
    }

    /// Spiral neighbor sequence of one simplified vertex.
    pub fn spiral(&self, vertex: usize) -> &[u32] {
        let l = self.parts.spiral_length;
        &self.parts.spiral[vertex * l..(vertex + 1) * l]
    }

    pub fn spiral_table(&self) -> (&[u32], usize) {
        (&self.parts.spiral, self.parts.spiral_length)
    }

    pub fn canonical_interior(&self) -> &[Vec3] {
        &self.interior
    }

    pub fn interior_attachment(&self) -> &[u32] {
        &self.parts.interior_vertex
    }

    pub fn kinematics(&self, pose: &PoseVector) -> Kinematics {
        assert_eq!(pose.theta.len(), self.pose_dim(), "pose dimension mismatch");
        let j = self.joint_count();
        let mut rotations = Vec::with_capacity(j);
        let mut positions = Vec::with_capacity(j);
        let mut locals = Vec::with_capacity(j);
        let root = yaw_matrix(pose.root_yaw);
        locals.push(root);
        rotations.push(root);
        positions.push(self.rest_joints[0] + pose.translation);
        for k in 1..j {
            let p = self.parents[k].expect("non-root joint has a parent");
            let local = axis_angle_to_matrix(&pose.joint_axis_angle(k));
            let pos = positions[p] + rotations[p] * (self.rest_joints[k] - self.rest_joints[p]);
            rotations.push(rotations[p] * local);
            positions.push(pos);
            locals.push(local);
        }
        let offsets = (0..j)
            .map(|k| positions[k] - rotations[k] * self.rest_joints[k])
            .collect();
        Kinematics {
            rotations,
            positions,
            locals,
            offsets,
        }
    }

    /// Skins a rest-pose point with the blend weights of `vertex`.
    #[inline]
    pub fn skin_point(&self, kin: &Kinematics, vertex: usize, rest: &Vec3) -> Vec3 {
        self.skinning
            .row(vertex)
            .map(|(j, w)| w * (kin.rotations[j] * rest + kin.offsets[j]))
            .sum()
    }

    #[inline]
    pub fn skin_vertex(&self, kin: &Kinematics, vertex: usize) -> Vec3 {
        self.skin_point(kin, vertex, &self.template[vertex])
    }

    /// Accumulates the gradient of a skinned point into `grad`.
    #[inline]
    pub fn skin_point_backward(
        &self,
        vertex: usize,
        rest: &Vec3,
        g: &Vec3,
        grad: &mut KinematicsGrad,
    ) {
        for (j, w) in self.skinning.row(vertex) {
            let wg = w * g;
            grad.rotations[j] += wg * rest.transpose();
            grad.offsets[j] += wg;
        }
    }

    #[inline]
    pub fn skin_vertex_backward(&self, vertex: usize, g: &Vec3, grad: &mut KinematicsGrad) {
        self.skin_point_backward(vertex, &self.template[vertex], g, grad);
    }

    /// Back-propagates joint-transform gradients to the pose variables.
    pub fn kinematics_backward(
        &self,
        pose: &PoseVector,
        kin: &Kinematics,
        grad: KinematicsGrad,
    ) -> PoseGradient {
        let j = self.joint_count();
        let KinematicsGrad {
            rotations: mut g_rot,
            positions: mut g_pos,
            offsets,
        } = grad;
        for k in 0..j {
            g_pos[k] += offsets[k];
            g_rot[k] -= offsets[k] * self.rest_joints[k].transpose();
        }
        let mut theta = vec![0.0; self.pose_dim()];
        for k in (1..j).rev() {
            let p = self.parents[k].unwrap();
            let bone = self.rest_joints[k] - self.rest_joints[p];
            let gp = g_pos[k];
            g_pos[p] += gp;
            let g_rk = g_rot[k];
            g_rot[p] += gp * bone.transpose() + g_rk * kin.locals[k].transpose();
            let g_local = kin.rotations[p].transpose() * g_rk;
            let jac = axis_angle_jacobian(&pose.joint_axis_angle(k));
            for (a, d) in jac.iter().enumerate() {
                theta[3 * (k - 1) + a] = g_local.dot(d);
            }
        }
        PoseGradient {
            theta,
            root_yaw: g_rot[0].dot(&yaw_matrix_derivative(pose.root_yaw)),
            translation: g_pos[0],
        }
    }

    /// Forward kinematics plus linear blend skinning of all vertices.
    pub fn pose_body(&self, pose: &PoseVector) -> PosedBody {
        let kin = self.kinematics(pose);
        PosedBody {
            vertices: (0..self.vertex_count())
                .map(|v| self.skin_vertex(&kin, v))
                .collect(),
            joints: kin.positions,
        }
    }

    pub fn posed_mesh(&self, pose: &PoseVector) -> TriangleMesh {
        TriangleMesh {
            vertices: self.pose_body(pose).vertices,
            faces: self.parts.faces.clone(),
        }
    }

    /// Applies the downsampling matrix to full-resolution vertices.
    pub fn simplify_vertices(&self, vertices: &[Vec3]) -> Vec<Vec3> {
        assert_eq!(vertices.len(), self.vertex_count());
        self.downsample.apply_points(vertices)
    }

    /// Maps a per-simplified-vertex feature onto the full mesh.
    pub fn upsample_feature(&self, feature: &[f64]) -> Vec<f64> {
        assert_eq!(feature.len(), self.simplified_count());
        self.upsample
            .apply_scalars(feature)
            .into_iter()
            .map(|v| v.clamp(0.0, 1.0))
            .collect()
    }

    pub fn downsample_feature(&self, feature: &[f64]) -> Vec<f64> {
        assert_eq!(feature.len(), self.vertex_count());
        self.downsample.apply_scalars(feature)
    }

    /// Canonical interior samples carried along by their attachment vertices.
    pub fn interior_points(&self, pose: &PoseVector) -> Result<Vec<Vec3>> {
        if self.interior.is_empty() {
            return Err(Error::MissingInteriorSamples);
        }
        let kin = self.kinematics(pose);
        Ok(self.interior_points_with(&kin))
    }

    pub fn interior_points_with(&self, kin: &Kinematics) -> Vec<Vec3> {
        self.parts
            .interior_vertex
            .iter()
            .zip(&self.interior)
            .map(|(&v, p)| self.skin_point(kin, v as usize, p))
            .collect()
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use std::f64::consts::FRAC_PI_2;

    /// Two-joint arm: shoulder at the origin, elbow at x = 1. Vertices 0-1 follow
    /// the shoulder, 2-3 the elbow.
    pub(crate) fn toy_arm() -> ArticulatedBody {
        let template = vec![
            [0.5, 0.1, 0.0],
            [0.5, -0.1, 0.0],
            [1.5, 0.1, 0.0],
            [1.5, -0.1, 0.0],
        ];
        let faces = vec![[0, 1, 2], [1, 3, 2]];
        let regressor = Csr::from_rows(
            4,
            &[
                vec![(0, 0.5), (1, 0.5)],
                vec![(0, 0.25), (1, 0.25), (2, 0.25), (3, 0.25)],
            ],
        );
        // Regressed joints: (0.5,0,0) and (1,0,0).
        let skinning = Csr::from_rows(
            2,
            &[
                vec![(0, 1.0)],
                vec![(0, 1.0)],
                vec![(1, 1.0)],
                vec![(1, 1.0)],
            ],
        );
        let n = template.len();
        ArticulatedBody::from_parts(BodyParts {
            template,
            faces: faces.clone(),
            parents: vec![-1, 0],
            joint_names: vec!["shoulder".into(), "elbow".into()],
            regressor,
            skinning,
            downsample: Csr::identity(n),
            upsample: Csr::identity(n),
            simplified_faces: faces,
            spiral_length: 1,
            spiral: (0..n as u32).collect(),
            interior_vertex: vec![0, 3],
            interior_offset: vec![[0.0, -0.05, 0.0], [0.0, 0.05, 0.0]],
        })
        .unwrap()
    }

    #[test]
    fn zero_pose_reproduces_template() {
        let body = toy_arm();
        let posed = body.pose_body(&body.zero_pose());
        assert_eq!(posed.vertices.len(), 4);
        for (a, b) in posed.vertices.iter().zip(body.template()) {
            assert!((a - b).norm() <= 1e-12);
        }
    }

    #[test]
    fn translation_shifts_every_vertex() {
        let body = toy_arm();
        let mut pose = body.zero_pose();
        pose.translation = Vec3::new(1.0, 0.0, 0.0);
        let posed = body.pose_body(&pose);
        for (a, b) in posed.vertices.iter().zip(body.template()) {
            assert_relative_eq!(*a, b + Vec3::x(), epsilon = 1e-12);
        }
    }

    #[test]
    fn elbow_quarter_turn_rotates_forearm_about_the_joint() {
        let body = toy_arm();
        let elbow = body.rest_joints()[1];
        assert_relative_eq!(elbow, Vec3::new(1.0, 0.0, 0.0), epsilon = 1e-7);
        let pose = PoseVector::from_theta(vec![0.0, 0.0, FRAC_PI_2]);
        let posed = body.pose_body(&pose);
        // Hand computation: rotate (x - e) by 90 degrees about z, add e back.
        let rot = |p: Vec3| {
            let d = p - elbow;
            elbow + Vec3::new(-d.y, d.x, d.z)
        };
        assert_relative_eq!(posed.vertices[0], body.template()[0], epsilon = 1e-12);
        assert_relative_eq!(posed.vertices[1], body.template()[1], epsilon = 1e-12);
        assert_relative_eq!(posed.vertices[2], rot(body.template()[2]), epsilon = 1e-12);
        assert_relative_eq!(posed.vertices[3], rot(body.template()[3]), epsilon = 1e-12);
        assert_relative_eq!(posed.vertices[2], Vec3::new(0.9, 0.5, 0.0), epsilon = 1e-6);
    }

    #[test]
    fn identity_mapping_passes_vertices_through() {
        let body = toy_arm();
        let v = body.template().to_vec();
        assert_eq!(body.simplify_vertices(&v), v);
        assert_eq!(
            body.upsample_feature(&[0.1, 0.2, 0.3, 0.4]),
            vec![0.1, 0.2, 0.3, 0.4]
        );
    }

    #[test]
    fn interior_points_follow_pose() {
        let body = toy_arm();
        let rest = body.interior_points(&body.zero_pose()).unwrap();
        assert_eq!(rest, body.canonical_interior());
        let mut pose = body.zero_pose();
        pose.translation = Vec3::new(0.0, 0.0, 2.0);
        let moved = body.interior_points(&pose).unwrap();
        for (a, b) in moved.iter().zip(&rest) {
            assert_relative_eq!(*a, b + Vec3::new(0.0, 0.0, 2.0), epsilon = 1e-12);
        }
    }

    #[test]
    fn missing_interior_samples_is_an_error() {
        let mut parts = toy_arm().parts().clone();
        parts.interior_vertex.clear();
        parts.interior_offset.clear();
        let body = ArticulatedBody::from_parts(parts).unwrap();
        assert!(matches!(
            body.interior_points(&body.zero_pose()),
            Err(Error::MissingInteriorSamples)
        ));
    }

    #[test]
    fn invalid_parts_are_rejected() {
        let good = toy_arm().parts().clone();
        let mut p = good.clone();
        p.parents = vec![-1, 1];
        assert!(ArticulatedBody::from_parts(p).is_err());
        let mut p = good.clone();
        p.skinning.values[0] = 0.5;
        assert!(ArticulatedBody::from_parts(p).is_err());
        let mut p = good;
        p.spiral.pop();
        assert!(ArticulatedBody::from_parts(p).is_err());
    }

    #[test]
    fn pose_gradient_matches_finite_differences() {
        let body = toy_arm();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let weights: Vec<Vec3> = (0..4)
            .map(|_| Vec3::new(rng.random(), rng.random(), rng.random()))
            .collect();
        let joint_w = Vec3::new(0.3, -0.7, 0.2);
        let objective = |pose: &PoseVector| {
            let posed = body.pose_body(pose);
            posed
                .vertices
                .iter()
                .zip(&weights)
                .map(|(v, w)| v.dot(w))
                .sum::<f64>()
                + posed.joints[1].dot(&joint_w)
        };
        let pose = PoseVector {
            theta: vec![0.3, -0.4, 0.9],
            root_yaw: 0.6,
            translation: Vec3::new(0.1, 0.2, 0.3),
        };
        let kin = body.kinematics(&pose);
        let mut grad = KinematicsGrad::zeros(2);
        for (v, w) in weights.iter().enumerate() {
            body.skin_vertex_backward(v, w, &mut grad);
        }
        grad.positions[1] += joint_w;
        let g = body.kinematics_backward(&pose, &kin, grad);
        let eps = 1e-6;
        let fd = |nudge: &dyn Fn(&mut PoseVector, f64)| {
            let mut p = pose.clone();
            let mut m = pose.clone();
            nudge(&mut p, eps);
            nudge(&mut m, -eps);
            (objective(&p) - objective(&m)) / (2.0 * eps)
        };
        for k in 0..3 {
            let n = fd(&|p, h| p.theta[k] += h);
            assert_relative_eq!(g.theta[k], n, epsilon = 1e-6);
        }
        assert_relative_eq!(g.root_yaw, fd(&|p, h| p.root_yaw += h), epsilon = 1e-6);
        for a in 0..3 {
            let n = fd(&|p, h| p.translation[a] += h);
            assert_relative_eq!(g.translation[a], n, epsilon = 1e-6);
        }
    }
}
