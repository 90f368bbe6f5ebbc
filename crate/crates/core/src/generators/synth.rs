//! Procedural training data: jittered stand, sit and lie pose families, and
//! contact labels from staging those poses on fixture furniture.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Normal;

use super::contact::contact_labels;
use super::corpus::{ContactSample, PoseSample};
use super::{Action, CONTACT_DELTA};
use crate::body::{ArticulatedBody, PoseVector, POSE_DIM};
use crate::fixtures;
use crate::geometry::Vec3;
use crate::scene::{Scene, Vocabulary};

const LEFT_HIP: usize = 1;
const RIGHT_HIP: usize = 2;
const SPINE1: usize = 3;
const LEFT_KNEE: usize = 4;
const RIGHT_KNEE: usize = 5;
const LEFT_SHOULDER: usize = 16;
const RIGHT_SHOULDER: usize = 17;

fn set(theta: &mut [f64], joint: usize, aa: [f64; 3]) {
    theta[3 * (joint - 1)..3 * joint].copy_from_slice(&aa);
}

/// Noise-free representative pose of each family, arms lowered.
pub fn canonical_pose(action: Action) -> Vec<f64> {
    let mut t = vec![0.0; POSE_DIM];
    let half_pi = std::f64::consts::FRAC_PI_2;
    match action {
        Action::Stand => {}
        Action::Sit => {
            set(&mut t, LEFT_HIP, [half_pi, 0.0, 0.0]);
            set(&mut t, RIGHT_HIP, [half_pi, 0.0, 0.0]);
            set(&mut t, LEFT_KNEE, [-half_pi, 0.0, 0.0]);
            set(&mut t, RIGHT_KNEE, [-half_pi, 0.0, 0.0]);
        }
        Action::Lie => {
            // Rigid capsules cannot lie flat; drooping both chains past
            // horizontal lets head and pelvis share the supporting surface.
            set(&mut t, LEFT_HIP, [half_pi + 0.07, 0.0, 0.0]);
            set(&mut t, RIGHT_HIP, [half_pi + 0.07, 0.0, 0.0]);
            set(&mut t, SPINE1, [half_pi + 0.3, 0.0, 0.0]);
        }
    }
    set(&mut t, LEFT_SHOULDER, [0.0, -1.3, 0.0]);
    set(&mut t, RIGHT_SHOULDER, [0.0, 1.3, 0.0]);
    t
}

/// One jittered member of a pose family.
pub fn sample_pose(action: Action, rng: &mut impl Rng) -> Vec<f64> {
    let mut t = canonical_pose(action);
    let jitter = Normal::new(0.0, 0.04).unwrap();
    for v in t.iter_mut() {
        *v += rng.sample(jitter);
    }
    let arms = rng.random_range(1.0..1.4);
    t[3 * (LEFT_SHOULDER - 1) + 1] = -arms + rng.sample(jitter);
    t[3 * (RIGHT_SHOULDER - 1) + 1] = arms + rng.sample(jitter);
    match action {
        Action::Stand => {}
        Action::Sit => {
            let hip = rng.random_range(1.35..1.75);
            let knee = rng.random_range(1.35..1.75);
            for (h, k) in [(LEFT_HIP, LEFT_KNEE), (RIGHT_HIP, RIGHT_KNEE)] {
                t[3 * (h - 1)] = hip + rng.sample(jitter);
                t[3 * (k - 1)] = -knee + rng.sample(jitter);
            }
        }
        Action::Lie => {
            let bend = rng.random_range(-0.1..0.1);
            t[3 * (SPINE1 - 1)] += bend;
        }
    }
    t
}

/// `per_action` samples of each family, grouped by action.
pub fn pose_corpus(per_action: usize, seed: u64) -> Vec<PoseSample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Action::ALL
        .iter()
        .flat_map(|&a| (0..per_action).map(move |_| a))
        .map(|action| PoseSample {
            action,
            theta: sample_pose(action, &mut rng),
        })
        .collect()
}

/// Action and object category pairs staged for contact labels.
pub const CONTACT_PAIRINGS: [(Action, &str); 4] = [
    (Action::Sit, "chair"),
    (Action::Sit, "sofa"),
    (Action::Lie, "bed"),
    (Action::Stand, "floor"),
];

struct Stage {
    scene: Scene,
    category: &'static str,
    /// Front face of the backrest, if any (y coordinate).
    back: Option<f64>,
    top: f64,
}

fn stage_for(category: &str) -> Stage {
    match category {
        "chair" => Stage {
            scene: fixtures::room(),
            category: "chair",
            back: Some(-fixtures::CHAIR_SEAT_HALF + fixtures::CHAIR_BACK_THICKNESS),
            top: fixtures::CHAIR_SEAT_TOP,
        },
        "sofa" => Stage {
            scene: fixtures::sofa_room(),
            category: "sofa",
            back: Some(-0.25),
            top: fixtures::SOFA_SEAT_TOP,
        },
        "bed" => Stage {
            scene: fixtures::bed_room(),
            category: "bed",
            back: None,
            top: fixtures::BED_TOP,
        },
        _ => Stage {
            scene: fixtures::floor_only(),
            category: "floor",
            back: None,
            top: 0.0,
        },
    }
}

/// Translation that rests the body-frame vertices on the staged object.
fn rest_translation(stage: &Stage, vertices: &[Vec3], joints: &[Vec3], rng: &mut impl Rng) -> Vec3 {
    let obj = &stage.scene.query_objects(stage.category)[0];
    let (lo, hi) = (obj.aabb.min, obj.aabb.max);
    let mut t = Vec3::new(rng.random_range(-0.02..0.02), 0.0, 0.0);
    let pelvis = joints[0];
    t.y = match stage.back {
        Some(back) => {
            let behind = vertices
                .iter()
                .filter(|v| (v.z - pelvis.z).abs() < 0.2)
                .map(|v| v.y)
                .fold(f64::INFINITY, f64::min);
            back + rng.random_range(0.005..0.03) - behind
        }
        None => {
            let (ymin, ymax) = vertices
                .iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| {
                    (a.min(v.y), b.max(v.y))
                });
            0.5 * (lo.y + hi.y) - 0.5 * (ymin + ymax) + rng.random_range(-0.02..0.02)
        }
    };
    let hip_z = joints[1].z.min(joints[2].z);
    let support = vertices
        .iter()
        .map(|v| v + Vec3::new(t.x, t.y, 0.0))
        .filter(|v| v.x > lo.x && v.x < hi.x && v.y > lo.y && v.y < hi.y)
        .filter(|v| stage.back.is_none() || v.z > hip_z - 0.2)
        .map(|v| v.z)
        .fold(f64::INFINITY, f64::min);
    let support = if support.is_finite() {
        support
    } else {
        vertices.iter().map(|v| v.z).fold(f64::INFINITY, f64::min)
    };
    // Flesh compresses into the support, so contact shows up as a band.
    t.z = stage.top - support + rng.random_range(-0.015..0.0);
    t
}

/// Rests the posed body (`theta`, body frame) on the fixture object of
/// `category` and labels its simplified vertices. Returns the fixture scene,
/// the translation used and the labels.
pub fn stage_pose(
    body: &ArticulatedBody,
    theta: &[f64],
    category: &str,
    rng: &mut impl Rng,
) -> (Scene, Vec3, Vec<f64>) {
    let stage = stage_for(category);
    let target = stage.scene.query_objects(stage.category)[0].clone();
    let local = body.pose_body(&PoseVector::from_theta(theta.to_vec()));
    let t = rest_translation(&stage, &local.vertices, &local.joints, rng);
    let world: Vec<Vec3> = local.vertices.iter().map(|v| v + t).collect();
    let contact = contact_labels(body, &world, &stage.scene, &target, CONTACT_DELTA);
    (stage.scene, t, contact)
}

/// Stages `per_pairing` jittered poses on each fixture object of
/// [`CONTACT_PAIRINGS`] and labels contact against the staged object.
pub fn contact_corpus(body: &ArticulatedBody, per_pairing: usize, seed: u64) -> Vec<ContactSample> {
    let vocab = Vocabulary::default();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for (action, category) in CONTACT_PAIRINGS {
        let object = vocab
            .index_of(category)
            .expect("pairing category in vocabulary");
        for _ in 0..per_pairing {
            let theta = sample_pose(action, &mut rng);
            let (_, _, contact) = stage_pose(body, &theta, category, &mut rng);
            let local = body.pose_body(&PoseVector::from_theta(theta));
            out.push(ContactSample {
                object,
                vertices: body.simplify_vertices(&local.vertices),
                contact,
            });
        }
    }
    out
}
