//! Small hand-authored scenes with known coordinates, used by tests,
//! benchmarks and the synthetic training corpus.
//!
//! Every fixture has a 4 m x 4 m floor slab whose top face is z = 0.

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::body::{ArticulatedBody, PoseVector};
use crate::generators::{synth, Action};
use crate::geometry::{shapes, SdfConfig, TriangleMesh, Vec3};
use crate::scene::{FaceLabel, Scene, SceneObject, Vocabulary};

/// Seat top height of the fixture chair.
pub const CHAIR_SEAT_TOP: f64 = 0.45;
/// Half extent of the square chair seat.
pub const CHAIR_SEAT_HALF: f64 = 0.225;
pub const CHAIR_BACK_TOP: f64 = 0.95;
pub const CHAIR_BACK_THICKNESS: f64 = 0.08;
pub const TABLE_TOP: f64 = 0.75;
pub const SOFA_SEAT_TOP: f64 = 0.42;
pub const BED_TOP: f64 = 0.5;

/// Accumulates labeled parts into a scene.
#[derive(Default)]
pub struct SceneBuilder {
    mesh: TriangleMesh,
    labels: Vec<FaceLabel>,
    categories: BTreeMap<u32, String>,
    vocabulary: Vocabulary,
}

impl SceneBuilder {
    /// Adds `part` as (part of) instance `instance` of `category`.
    pub fn add(&mut self, category: &str, instance: u32, part: &TriangleMesh) -> &mut Self {
        let id = self
            .vocabulary
            .index_of(category)
            .unwrap_or_else(|| panic!("`{category}` is not in the default vocabulary"))
            as u32;
        self.categories.insert(id, category.to_string());
        let faces = self.mesh.append(part);
        self.labels.extend(faces.map(|_| FaceLabel {
            category: id,
            instance,
        }));
        self
    }

    pub fn build(&self) -> Scene {
        Scene::new(
            self.mesh.clone(),
            self.labels.clone(),
            self.categories.clone(),
        )
        .expect("fixture labels are consistent")
    }
}

fn cuboid(min: [f64; 3], max: [f64; 3]) -> TriangleMesh {
    shapes::cuboid_between(Vec3::from(min), Vec3::from(max))
}

fn add_floor(b: &mut SceneBuilder) {
    b.add("floor", 0, &cuboid([-2.0, -2.0, -0.1], [2.0, 2.0, 0.0]));
}

/// Chair centered at `(x, y)` facing +y, backrest on the -y side.
pub fn add_chair(b: &mut SceneBuilder, instance: u32, x: f64, y: f64) {
    let h = CHAIR_SEAT_HALF;
    b.add(
        "chair",
        instance,
        &cuboid([x - h, y - h, 0.35], [x + h, y + h, CHAIR_SEAT_TOP]),
    );
    for (sx, sy) in [(-1.0, -1.0), (1.0, -1.0), (-1.0, 1.0), (1.0, 1.0)] {
        let cx = x + sx * (h - 0.02);
        let cy = y + sy * (h - 0.02);
        b.add(
            "chair",
            instance,
            &cuboid([cx - 0.02, cy - 0.02, 0.0], [cx + 0.02, cy + 0.02, 0.35]),
        );
    }
    b.add(
        "chair",
        instance,
        &cuboid(
            [x - h, y - h, CHAIR_SEAT_TOP],
            [x + h, y - h + CHAIR_BACK_THICKNESS, CHAIR_BACK_TOP],
        ),
    );
}

fn add_table(b: &mut SceneBuilder, instance: u32) {
    b.add(
        "table",
        instance,
        &cuboid([0.9, -0.4, 0.7], [1.9, 0.4, TABLE_TOP]),
    );
    for (x, y) in [(0.95, -0.35), (1.85, -0.35), (0.95, 0.35), (1.85, 0.35)] {
        b.add(
            "table",
            instance,
            &cuboid([x - 0.025, y - 0.025, 0.0], [x + 0.025, y + 0.025, 0.7]),
        );
    }
}

/// Floor (instance 0), chair at the origin (1) and table at x = 1.4 (2).
pub fn room() -> Scene {
    let mut b = SceneBuilder::default();
    add_floor(&mut b);
    add_chair(&mut b, 1, 0.0, 0.0);
    add_table(&mut b, 2);
    b.build()
}

/// Known bounds of the [`room`] instances, in instance order.
pub fn room_object_bounds() -> [([f64; 3], [f64; 3]); 3] {
    [
        ([-2.0, -2.0, -0.1], [2.0, 2.0, 0.0]),
        ([-0.225, -0.225, 0.0], [0.225, 0.225, 0.95]),
        ([0.9, -0.4, 0.0], [1.9, 0.4, 0.75]),
    ]
}

/// Floor plus chairs at x = -0.8 (instance 1) and x = 0.8 (instance 2).
pub fn two_chair_room() -> Scene {
    let mut b = SceneBuilder::default();
    add_floor(&mut b);
    add_chair(&mut b, 1, -0.8, 0.0);
    add_chair(&mut b, 2, 0.8, 0.0);
    b.build()
}

/// Floor plus a solid sofa facing +y (instance 1).
pub fn sofa_room() -> Scene {
    let mut b = SceneBuilder::default();
    add_floor(&mut b);
    b.add(
        "sofa",
        1,
        &cuboid([-0.9, -0.45, 0.0], [0.9, 0.2, SOFA_SEAT_TOP]),
    );
    b.add(
        "sofa",
        1,
        &cuboid([-0.9, -0.45, SOFA_SEAT_TOP], [0.9, -0.25, 0.85]),
    );
    b.build()
}

/// Floor plus a bed whose long side runs along y (instance 1).
pub fn bed_room() -> Scene {
    let mut b = SceneBuilder::default();
    add_floor(&mut b);
    b.add("bed", 1, &cuboid([-0.7, -1.05, 0.0], [0.7, 1.05, BED_TOP]));
    b.build()
}

/// Bare floor.
pub fn floor_only() -> Scene {
    let mut b = SceneBuilder::default();
    add_floor(&mut b);
    b.build()
}

/// A 3 cm wall in the plane x = 0 with a fine 1 cm SDF grid.
pub fn thin_wall() -> Scene {
    let mut b = SceneBuilder::default();
    b.add("wall", 0, &cuboid([-0.015, -0.3, 0.7], [0.015, 0.3, 1.3]));
    b.build().with_sdf_config(SdfConfig {
        voxel_size: 0.01,
        padding: 0.1,
        ..SdfConfig::default()
    })
}

/// Cylinder "limb" along x through the [`thin_wall`], densely ringed so
/// vertex rings fall inside the wall.
pub fn limb_through_wall() -> TriangleMesh {
    shapes::cylinder(
        Vec3::new(-0.25, 0.0, 1.0),
        Vec3::new(0.25, 0.0, 1.0),
        0.05,
        16,
        100,
    )
}

/// The same limb moved clear of the wall (touching nothing).
pub fn limb_in_free_space() -> TriangleMesh {
    limb_through_wall().translated(Vec3::new(0.0, 0.0, 0.6))
}

/// The limb resting against the wall face without crossing it.
pub fn limb_touching_wall() -> TriangleMesh {
    limb_through_wall().translated(Vec3::new(0.245, 0.0, 0.0))
}

/// A 3 cm horizontal shelf at `z` spanning `x` in [-0.5, 0.5], for cutting
/// through a standing body.
pub fn shelf(z: f64) -> Scene {
    let mut b = SceneBuilder::default();
    b.add(
        "shelving",
        0,
        &cuboid([-0.5, -0.4, z - 0.015], [0.5, 0.4, z + 0.015]),
    );
    b.build().with_sdf_config(SdfConfig {
        voxel_size: 0.01,
        padding: 0.05,
        ..SdfConfig::default()
    })
}

/// A pose resting on a fixture object, with its ground-truth contact map.
pub struct StagedPose {
    pub scene: Scene,
    pub object: SceneObject,
    pub pose: PoseVector,
    /// Full-resolution contact probabilities.
    pub contact: Vec<f64>,
}

/// The canonical sitting pose staged on the `category` fixture (`chair` or
/// `sofa`), with its lowest seat contact vertex `lift` meters above the seat
/// top.
/// A negative lift sinks it.
pub fn staged_sit(body: &ArticulatedBody, category: &str, lift: f64) -> StagedPose {
    let seat_top = match category {
        "chair" => CHAIR_SEAT_TOP,
        "sofa" => SOFA_SEAT_TOP,
        other => panic!("no sitting fixture for `{other}`"),
    };
    let theta = synth::canonical_pose(Action::Sit);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let (scene, translation, labels) = synth::stage_pose(body, &theta, category, &mut rng);
    let object = scene.query_objects(category)[0].clone();
    let contact = body.upsample_feature(&labels);
    let mut pose = PoseVector {
        theta,
        root_yaw: 0.0,
        translation,
    };
    // Calves touching the front face are labeled too; only vertices over the
    // seat measure the lift.
    let (lo, hi) = (object.aabb.min, object.aabb.max);
    let lowest = body
        .pose_body(&pose)
        .vertices
        .iter()
        .zip(&contact)
        .filter(|(v, &f)| {
            f > 0.5
                && v.z > seat_top - 0.05
                && v.x > lo.x + 0.01
                && v.x < hi.x - 0.01
                && v.y > lo.y + 0.01
                && v.y < hi.y - 0.01
        })
        .map(|(v, _)| v.z)
        .fold(f64::INFINITY, f64::min);
    pose.translation.z += seat_top + lift - lowest;
    StagedPose {
        scene,
        object,
        pose,
        contact,
    }
}

/// A 2 m thick floor slab whose top splits `heights` near the median, placed
/// in the widest gap there so no height lies close to the surface. Returns
/// the scene and the height of the top.
pub fn submerging_floor(heights: &[f64]) -> (Scene, f64) {
    let mut z = heights.to_vec();
    z.sort_by(f64::total_cmp);
    let mid = z.len() / 2;
    let lo = mid.saturating_sub(10).max(1);
    let hi = (mid + 10).min(z.len() - 1);
    let i = (lo..=hi)
        .max_by(|&a, &b| (z[a] - z[a - 1]).total_cmp(&(z[b] - z[b - 1])))
        .expect("enough heights");
    let top = 0.5 * (z[i - 1] + z[i]);
    let mut b = SceneBuilder::default();
    b.add(
        "floor",
        0,
        &cuboid([-2.0, -2.0, top - 2.0], [2.0, 2.0, top]),
    );
    (b.build(), top)
}
