//! Candidate placements over a target object and the penetration and contact
//! feasibility tests.

mod pipeline;

use std::f64::consts::{FRAC_PI_2, PI};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

pub use pipeline::{
    place_decoded, run_pipeline, Ablation, Assets, CandidateRecord, Instruction, Meta,
    OptimizationSummary, PipelineConfig, PipelineResult, Placement, PlacementReport, PostCheck,
    Tallies,
};

use crate::body::{ArticulatedBody, PoseVector};
use crate::error::{Error, Result};
use crate::geometry::{
    component_count, connected_components, Aabb, Bvh, SdfGrid, TriangleMesh, Vec3,
};
use crate::scene::{Scene, SceneObject};

/// Candidate orientations about +z: facing +y, -x, -y and +x.
pub const YAWS: [f64; 4] = [0.0, FRAC_PI_2, PI, 3.0 * FRAC_PI_2];

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeasibilityConfig {
    pub grid_spacing: f64,
    pub contact_prob_threshold: f64,
    pub contact_dist_threshold: f64,
    pub min_contact_count: usize,
    pub clearance: f64,
}

impl Default for FeasibilityConfig {
    fn default() -> Self {
        FeasibilityConfig {
            grid_spacing: 0.1,
            contact_prob_threshold: 0.5,
            contact_dist_threshold: 0.05,
            min_contact_count: 20,
            clearance: 0.005,
        }
    }
}

impl FeasibilityConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = |v: f64| v.is_finite() && v > 0.0;
        if !positive(self.grid_spacing) {
            return Err(Error::Config("grid_spacing must be positive".into()));
        }
        if !(self.contact_prob_threshold > 0.0 && self.contact_prob_threshold < 1.0) {
            return Err(Error::Config(
                "contact_prob_threshold must lie in (0, 1)".into(),
            ));
        }
        if !positive(self.contact_dist_threshold) {
            return Err(Error::Config(
                "contact_dist_threshold must be positive".into(),
            ));
        }
        if !(self.clearance.is_finite() && self.clearance >= 0.0) {
            return Err(Error::Config("clearance must be non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CandidateStatus {
    Pending,
    RejectedPenetration,
    RejectedContact,
    Feasible,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PlacementCandidate {
    pub instance_id: u32,
    pub grid_position: Vec3,
    pub yaw_index: usize,
    pub pose: PoseVector,
    /// Full-resolution contact probabilities, shared by all candidates.
    pub contact: Arc<[f64]>,
    pub status: CandidateStatus,
}

impl PlacementCandidate {
    pub fn yaw(&self) -> f64 {
        YAWS[self.yaw_index]
    }
}

/// Grid coordinates along one axis: `floor(extent / spacing) + 1` points
/// centered in `[lo, hi]`.
pub fn axis_grid(lo: f64, hi: f64, spacing: f64) -> Vec<f64> {
    let extent = (hi - lo).max(0.0);
    let n = (extent / spacing + 1e-9).floor() as usize + 1;
    let start = 0.5 * (lo + hi) - 0.5 * (n - 1) as f64 * spacing;
    (0..n).map(|i| start + i as f64 * spacing).collect()
}

/// Horizontal grid over a footprint, x-major.
pub fn footprint_grid(aabb: &Aabb, spacing: f64) -> Vec<(f64, f64)> {
    let xs = axis_grid(aabb.min.x, aabb.max.x, spacing);
    let ys = axis_grid(aabb.min.y, aabb.max.y, spacing);
    xs.iter()
        .flat_map(|&x| ys.iter().map(move |&y| (x, y)))
        .collect()
}

/// A scene object prepared for ray casts and distance queries.
#[derive(Clone, Debug)]
pub struct Target {
    pub object: SceneObject,
    bvh: Bvh,
}

impl Target {
    pub fn new(scene: &Scene, object: SceneObject) -> Self {
        let bvh = Bvh::from_faces(&scene.mesh, &object.faces);
        Target { object, bvh }
    }

    /// Height of the first object surface below `(x, y)` when looking down
    /// from above the object's bounds.
    pub fn surface_below(&self, x: f64, y: f64) -> Option<f64> {
        let top = self.object.aabb.max.z + 1.0;
        self.bvh
            .raycast(&Vec3::new(x, y, top), &Vec3::new(0.0, 0.0, -1.0))
            .map(|hit| top - hit.t)
    }

    /// Unsigned distance to the object surface.
    pub fn distance(&self, p: &Vec3) -> f64 {
        self.bvh.distance(p)
    }
}

/// Indices of vertices above the contact threshold.
fn contact_vertices(contact: &[f64], threshold: f64) -> Vec<usize> {
    (0..contact.len())
        .filter(|&i| contact[i] > threshold)
        .collect()
}

/// Places a candidate vertically: the lowest vertex among the contact
/// vertices (all vertices if there are none) ends up `clearance` above the
/// first object surface below the grid point. A miss rejects the candidate.
pub fn init_height(
    target: &Target,
    body: &ArticulatedBody,
    candidate: &mut PlacementCandidate,
    cfg: &FeasibilityConfig,
) {
    let Some(hit) = target.surface_below(candidate.grid_position.x, candidate.grid_position.y)
    else {
        candidate.status = CandidateStatus::RejectedContact;
        return;
    };
    let vertices = body.pose_body(&candidate.pose).vertices;
    let mut support = contact_vertices(&candidate.contact, cfg.contact_prob_threshold);
    if support.is_empty() {
        support = (0..vertices.len()).collect();
    }
    let lowest = support
        .iter()
        .map(|&i| vertices[i].z)
        .fold(f64::INFINITY, f64::min);
    candidate.pose.translation.z += hit + cfg.clearance - lowest;
    candidate.grid_position.z = hit;
}

/// Candidates on a target object plus the number of grid cells skipped
/// because other geometry covers them.
#[derive(Clone, Debug, Default)]
pub struct CandidateSet {
    pub candidates: Vec<PlacementCandidate>,
    pub occluded_cells: usize,
}

/// Grid points over the object's footprint times the four yaws, each placed
/// by [`init_height`]. The contact-weighted centroid of the posed body sits
/// over the grid point.
///
/// On floors, cells whose downward ray first meets another instance are
/// skipped so bodies do not start inside furniture.
pub fn generate_candidates(
    scene: &Scene,
    target: &Target,
    body: &ArticulatedBody,
    theta: &[f64],
    contact: Arc<[f64]>,
    cfg: &FeasibilityConfig,
) -> Result<CandidateSet> {
    cfg.validate()?;
    if theta.len() != body.pose_dim() || contact.len() != body.vertex_count() {
        return Err(Error::Config(
            "pose or contact does not match the body".into(),
        ));
    }
    let obj = &target.object;
    let support = contact_vertices(&contact, cfg.contact_prob_threshold);
    // Horizontal anchor offset of each yawed body at zero translation.
    let anchors: Vec<Vec3> = YAWS
        .iter()
        .map(|&yaw| {
            let pose = PoseVector {
                theta: theta.to_vec(),
                root_yaw: yaw,
                translation: Vec3::zeros(),
            };
            let v = body.pose_body(&pose).vertices;
            let (sum, weight) = if support.is_empty() {
                (v.iter().sum::<Vec3>(), v.len() as f64)
            } else {
                support.iter().fold((Vec3::zeros(), 0.0), |(s, w), &i| {
                    (s + v[i] * contact[i], w + contact[i])
                })
            };
            sum / weight
        })
        .collect();
    let on_floor = obj.category == "floor";
    let top = scene
        .mesh
        .vertices
        .iter()
        .map(|v| v.z)
        .fold(f64::NEG_INFINITY, f64::max)
        + 1.0;
    let mut set = CandidateSet::default();
    for (x, y) in footprint_grid(&obj.aabb, cfg.grid_spacing) {
        if on_floor {
            let first = scene
                .bvh()
                .raycast(&Vec3::new(x, y, top), &Vec3::new(0.0, 0.0, -1.0));
            if first.is_some_and(|h| scene.labels[h.face].instance != obj.instance_id) {
                set.occluded_cells += 1;
                continue;
            }
        }
        for (yaw_index, anchor) in anchors.iter().enumerate() {
            let mut c = PlacementCandidate {
                instance_id: obj.instance_id,
                grid_position: Vec3::new(x, y, obj.aabb.max.z),
                yaw_index,
                pose: PoseVector {
                    theta: theta.to_vec(),
                    root_yaw: YAWS[yaw_index],
                    translation: Vec3::new(x - anchor.x, y - anchor.y, 0.0),
                },
                contact: contact.clone(),
                status: CandidateStatus::Pending,
            };
            init_height(target, body, &mut c, cfg);
            set.candidates.push(c);
        }
    }
    Ok(set)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PenetrationVerdict {
    pub pass: bool,
    pub positive_component_count: usize,
    pub negative_vertex_count: usize,
    /// No vertex lies outside the scene: passes the component rule vacuously.
    pub fully_submerged: bool,
}

/// Splits the body surface into connected free-space pieces: faces whose
/// vertices disagree in SDF sign are dropped and components are counted over
/// the remaining faces among positive vertices. More than one piece means a
/// limb passes through geometry.
pub fn penetration_test(sdf: &SdfGrid, body_mesh: &TriangleMesh) -> PenetrationVerdict {
    let positive: Vec<bool> = body_mesh
        .vertices
        .iter()
        .map(|v| sdf.query(v) > 0.0)
        .collect();
    positive_components(&positive, &body_mesh.faces)
}

/// The component rule of [`penetration_test`] on precomputed signs.
pub fn positive_components(positive: &[bool], faces: &[[u32; 3]]) -> PenetrationVerdict {
    let mut edges = Vec::new();
    for f in faces {
        if f.iter().all(|&v| positive[v as usize]) {
            edges.extend([(f[0], f[1]), (f[1], f[2]), (f[2], f[0])]);
        }
    }
    let ids = connected_components(positive.len(), &edges);
    let mut seen = vec![false; component_count(&ids)];
    let mut count = 0;
    for (v, &id) in ids.iter().enumerate() {
        if positive[v] && !seen[id] {
            seen[id] = true;
            count += 1;
        }
    }
    let negative = positive.iter().filter(|&&p| !p).count();
    if count == 0 && !positive.is_empty() {
        log::debug!("body is entirely inside scene geometry; penetration test passes vacuously");
    }
    PenetrationVerdict {
        pass: count <= 1,
        positive_component_count: count,
        negative_vertex_count: negative,
        fully_submerged: count == 0 && !positive.is_empty(),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContactVerdict {
    pub pass: bool,
    pub real_contact_count: usize,
}

/// Counts vertices that are both likely contacts and near the target.
pub fn contact_test(
    target: &Target,
    vertices: &[Vec3],
    contact: &[f64],
    cfg: &FeasibilityConfig,
) -> ContactVerdict {
    let count = vertices
        .iter()
        .zip(contact)
        .filter(|(v, &f)| {
            f > cfg.contact_prob_threshold && target.distance(v) < cfg.contact_dist_threshold
        })
        .count();
    ContactVerdict {
        pass: count >= cfg.min_contact_count,
        real_contact_count: count,
    }
}
