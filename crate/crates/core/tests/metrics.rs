use std::sync::OnceLock;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use scene_placer::body::{build_capsule_body, ArticulatedBody, CapsuleBodyConfig, PoseVector};
use scene_placer::fixtures;
use scene_placer::generators::{synth, Action};
use scene_placer::geometry::Vec3;
use scene_placer::metrics::{
    cluster_size_metric, contact_metric, diversity, entropy_metric, kmeans, non_collision,
    plausibility, volume_non_collision, DEFAULT_CLUSTERS, MAX_LLOYD_ITERATIONS,
};
use scene_placer::Error;

fn body() -> &'static ArticulatedBody {
    static BODY: OnceLock<ArticulatedBody> = OnceLock::new();
    BODY.get_or_init(|| build_capsule_body(&CapsuleBodyConfig::default()).unwrap())
}

#[test]
fn uniform_assignment_has_log_k_entropy() {
    let k = DEFAULT_CLUSTERS;
    let assignments: Vec<usize> = (0..10 * k).map(|i| i % k).collect();
    assert!((entropy_metric(&assignments, k) - (k as f64).ln()).abs() < 1e-9);
}

proptest! {
    #[test]
    fn entropy_ignores_cluster_labels(assignments in prop::collection::vec(0usize..8, 1..200), shift in 1usize..8) {
        let relabeled: Vec<usize> = assignments.iter().map(|a| (a + shift) % 8).collect();
        let (a, b) = (entropy_metric(&assignments, 8), entropy_metric(&relabeled, 8));
        prop_assert!((a - b).abs() < 1e-12);
        prop_assert!(a >= 0.0 && a <= 8f64.ln() + 1e-12);
    }

    #[test]
    fn lloyd_objective_never_rises(seed in 0u64..1000, k in 1usize..12) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pts: Vec<Vec<f64>> = (0..80).map(|_| (0..4).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
        let c = kmeans(&pts, k, seed, MAX_LLOYD_ITERATIONS).unwrap();
        for w in c.objective.windows(2) {
            prop_assert!(w[1] <= w[0] + 1e-12, "{:?}", c.objective);
        }
        prop_assert_eq!(c.objective.len(), c.iterations + 1);
    }
}

#[test]
fn separated_blobs_are_recovered() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let noise = Normal::new(0.0, 0.1).unwrap();
    let mut pts = Vec::new();
    let mut truth = Vec::new();
    for (label, center) in [(0usize, -5.0), (1, 5.0)] {
        for _ in 0..60 {
            pts.push(
                (0..6)
                    .map(|_| center + noise.sample(&mut rng))
                    .collect::<Vec<f64>>(),
            );
            truth.push(label);
        }
    }
    let c = kmeans(&pts, 2, 1, MAX_LLOYD_ITERATIONS).unwrap();
    let flip = c.assignments[0] != truth[0];
    for (a, t) in c.assignments.iter().zip(&truth) {
        assert_eq!(*a, if flip { 1 - t } else { *t });
    }
}

#[test]
fn one_cluster_per_point() {
    let pts: Vec<Vec<f64>> = (0..7).map(|i| vec![i as f64, (i * i) as f64]).collect();
    let c = kmeans(&pts, 7, 0, MAX_LLOYD_ITERATIONS).unwrap();
    assert_eq!(*c.objective.last().unwrap(), 0.0);
    let mut seen = c.assignments.clone();
    seen.sort();
    assert_eq!(seen, (0..7).collect::<Vec<_>>());
    assert_eq!(cluster_size_metric(&pts, &c.assignments, &c.centers), 0.0);
}

#[test]
fn cluster_size_matches_direct_average() {
    let pts = vec![
        vec![0.0, 0.0],
        vec![2.0, 0.0],
        vec![10.0, 0.0],
        vec![10.0, 3.0],
        vec![10.0, 6.0],
    ];
    let assignments = vec![0, 0, 1, 1, 1];
    let centers = vec![vec![1.0, 0.0], vec![10.0, 3.0], vec![50.0, 50.0]];
    // cluster 0: both members 1 away; cluster 1: 3, 0, 3; cluster 2 empty
    let expected = (1.0 + 2.0) / 2.0;
    assert!((cluster_size_metric(&pts, &assignments, &centers) - expected).abs() < 1e-12);
}

#[test]
fn diversity_needs_enough_poses_and_is_seeded() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let poses: Vec<Vec<f64>> = (0..120)
        .map(|_| synth::sample_pose(Action::Sit, &mut rng))
        .collect();
    let a = diversity(&poses, DEFAULT_CLUSTERS, 9).unwrap();
    let b = diversity(&poses, DEFAULT_CLUSTERS, 9).unwrap();
    assert_eq!(a, b);
    assert!(a.entropy > 0.0 && a.entropy <= (DEFAULT_CLUSTERS as f64).ln());
    assert!(a.cluster_size > 0.0);
    assert!(matches!(
        diversity(&poses[..30], DEFAULT_CLUSTERS, 9),
        Err(Error::TooFewPoints { points: 30, k: 50 })
    ));
}

#[test]
fn half_submerged_bodies_score_exactly() {
    let b = body();
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    for action in [Action::Stand, Action::Sit, Action::Lie] {
        let pose = PoseVector {
            root_yaw: rng.random_range(0.0..6.0),
            ..PoseVector::from_theta(synth::sample_pose(action, &mut rng))
        };
        let vertices = b.pose_body(&pose).vertices;
        let interior = b.interior_points(&pose).unwrap();
        let heights: Vec<f64> = vertices.iter().chain(&interior).map(|p| p.z).collect();
        let (scene, top) = fixtures::submerging_floor(&heights);
        let margin = heights
            .iter()
            .map(|z| (z - top).abs())
            .fold(f64::INFINITY, f64::min);
        assert!(
            margin > 1e-5,
            "{action:?}: a point lies {margin} from the slab top"
        );
        let sdf = scene.sdf().unwrap();
        let above =
            |pts: &[Vec3]| pts.iter().filter(|p| p.z > top).count() as f64 / pts.len() as f64;
        let m = plausibility(sdf, &vertices, &interior);
        assert_eq!(m.nc, above(&vertices), "{action:?}");
        assert_eq!(m.vnc, above(&interior), "{action:?}");
        assert_eq!(m.contact, 1);
        assert!(m.nc > 0.3 && m.nc < 0.7);
    }
}

#[test]
fn body_in_free_space_scores_perfectly() {
    let b = body();
    let scene = fixtures::floor_only();
    let pose = PoseVector {
        translation: Vec3::new(0.0, 0.0, 0.5),
        ..b.zero_pose()
    };
    let m = plausibility(
        scene.sdf().unwrap(),
        &b.pose_body(&pose).vertices,
        &b.interior_points(&pose).unwrap(),
    );
    assert_eq!((m.nc, m.vnc, m.contact), (1.0, 1.0, 0));
}

#[test]
fn slicing_shelf_hurts_volume_more_than_surface() {
    let b = body();
    let scene = fixtures::shelf(1.1);
    let sdf = scene.sdf().unwrap();
    let pose = b.zero_pose();
    let nc = non_collision(sdf, &b.pose_body(&pose).vertices);
    let vnc = volume_non_collision(sdf, &b.interior_points(&pose).unwrap());
    eprintln!("shelf: NC {nc:.4} VNC {vnc:.4}");
    assert!(nc < 1.0);
    assert!(vnc < nc);
}

#[test]
fn contact_flag_matches_minimum_distance() {
    let b = body();
    let scene = fixtures::room();
    let sdf = scene.sdf().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let mut seen = [false; 2];
    for _ in 0..30 {
        let pose = PoseVector {
            translation: Vec3::new(
                rng.random_range(-0.5..1.8),
                rng.random_range(-0.5..0.5),
                rng.random_range(-0.1..0.6),
            ),
            root_yaw: rng.random_range(0.0..6.3),
            ..PoseVector::from_theta(synth::sample_pose(Action::Sit, &mut rng))
        };
        let v = b.pose_body(&pose).vertices;
        let min = v.iter().map(|p| sdf.query(p)).fold(f64::INFINITY, f64::min);
        let flag = contact_metric(sdf, &v);
        assert_eq!(flag, u8::from(min < 0.0));
        seen[flag as usize] = true;
    }
    assert!(seen[0] && seen[1]);
}
