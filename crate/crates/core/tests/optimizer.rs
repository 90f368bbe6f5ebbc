use std::sync::OnceLock;
use std::time::Instant;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use scene_placer::body::{
    build_capsule_body, ArticulatedBody, CapsuleBodyConfig, PoseGradient, PoseVector,
};
use scene_placer::fixtures::{self, StagedPose};
use scene_placer::geometry::{Bvh, KdTree, Vec3};
use scene_placer::metrics::volume_non_collision;
use scene_placer::optimizer::{
    e_r, e_vp, e_wc, gm_rho, optimize, EnergyTerms, EnergyWeights, Refinement,
};
use scene_placer::Error;

const THRESHOLD: f64 = 0.5;

fn body() -> &'static ArticulatedBody {
    static BODY: OnceLock<ArticulatedBody> = OnceLock::new();
    BODY.get_or_init(|| build_capsule_body(&CapsuleBodyConfig::default()).unwrap())
}

struct Setup {
    staged: StagedPose,
    points: KdTree,
}

fn setup(category: &str, lift: f64) -> Setup {
    let staged = fixtures::staged_sit(body(), category, lift);
    let points = KdTree::new(
        staged
            .scene
            .object_points(&staged.object, 10_000, 0)
            .unwrap(),
    );
    Setup { staged, points }
}

impl Setup {
    fn problem(&self, weights: EnergyWeights) -> Refinement<'_> {
        Refinement::new(
            body(),
            self.staged.scene.sdf().unwrap(),
            &self.points,
            &self.staged.contact,
            THRESHOLD,
            self.staged.pose.theta.clone(),
            weights,
        )
        .unwrap()
    }
}

fn flatten(p: &PoseVector) -> Vec<f64> {
    let mut v = p.theta.clone();
    v.extend([
        p.translation.x,
        p.translation.y,
        p.translation.z,
        p.root_yaw,
    ]);
    v
}

fn flatten_grad(g: &PoseGradient) -> Vec<f64> {
    let mut v = g.theta.clone();
    v.extend([
        g.translation.x,
        g.translation.y,
        g.translation.z,
        g.root_yaw,
    ]);
    v
}

fn unflatten(v: &[f64]) -> PoseVector {
    let n = v.len() - 4;
    PoseVector {
        theta: v[..n].to_vec(),
        translation: Vec3::new(v[n], v[n + 1], v[n + 2]),
        root_yaw: v[n + 3],
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

#[test]
fn gm_rho_closed_forms() {
    assert_eq!(gm_rho(0.0, 0.1), 0.0);
    assert!((gm_rho(0.1, 0.1) - 0.005).abs() < 1e-15);
    assert!(gm_rho(1e6, 0.1) < 0.01);
}

proptest! {
    #[test]
    fn gm_rho_bounded_and_monotone(a in -10.0f64..10.0, b in -10.0f64..10.0, sigma in 0.01f64..1.0) {
        let (ra, rb) = (gm_rho(a, sigma), gm_rho(b, sigma));
        prop_assert!(ra >= 0.0 && ra < sigma * sigma);
        prop_assert_eq!(ra, gm_rho(-a, sigma));
        if a.abs() <= b.abs() {
            prop_assert!(ra <= rb);
        }
    }

    #[test]
    fn total_is_linear_in_each_weight(wc in 0.0f64..5.0, vp in 0.0f64..5.0, r in 0.0f64..5.0, c in 0.0f64..10.0) {
        let terms = EnergyTerms { wc, vp, r };
        let w = EnergyWeights::default();
        let base = terms.total(&w).unwrap();
        let scaled = terms.total(&EnergyWeights { lambda_vp: c * w.lambda_vp, ..w }).unwrap();
        let expected = base + (c - 1.0) * w.lambda_vp * vp;
        prop_assert!((scaled - expected).abs() <= 1e-9 * expected.abs().max(1.0));
    }
}

#[test]
fn contact_term_matches_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let pts: Vec<Vec3> = (0..400)
        .map(|_| Vec3::new(rng.random(), rng.random(), rng.random()))
        .collect();
    let verts: Vec<Vec3> = (0..150)
        .map(|_| {
            Vec3::new(
                rng.random_range(-0.2..1.2),
                rng.random_range(-0.2..1.2),
                rng.random_range(-0.2..1.2),
            )
        })
        .collect();
    let contact: Vec<f64> = (0..150).map(|_| rng.random()).collect();
    let tree = KdTree::new(pts.clone());
    let fast = e_wc(&verts, &contact, &tree, THRESHOLD, 0.1);
    let mut slow = 0.0;
    for (v, &f) in verts.iter().zip(&contact) {
        if f > THRESHOLD {
            let d = pts
                .iter()
                .map(|p| (v - p).norm())
                .fold(f64::INFINITY, f64::min);
            slow += f * gm_rho(d, 0.1);
        }
    }
    assert!((fast - slow).abs() < 1e-9, "{fast} vs {slow}");
}

#[test]
fn contact_term_simple_cases() {
    let tree = KdTree::new(vec![Vec3::zeros(), Vec3::new(1.0, 0.0, 0.0)]);
    assert_eq!(
        e_wc(
            &[Vec3::zeros(), Vec3::new(1.0, 0.0, 0.0)],
            &[1.0, 0.9],
            &tree,
            THRESHOLD,
            0.1
        ),
        0.0
    );
    let e = e_wc(&[Vec3::new(0.0, 0.0, 0.1)], &[1.0], &tree, THRESHOLD, 0.1);
    assert!((e - 0.005).abs() < 1e-15);
    // nothing above the threshold: nothing to attract
    assert_eq!(
        e_wc(&[Vec3::new(0.0, 0.0, 3.0)], &[0.2], &tree, THRESHOLD, 0.1),
        0.0
    );
}

#[test]
fn penetration_term_cases() {
    // slab top at z = 0, one meter thick
    let (scene, top) = fixtures::submerging_floor(&[-0.2, -0.1, 0.1, 0.2]);
    assert_eq!(top, 0.0);
    let sdf = scene.sdf().unwrap();
    let e = e_vp(sdf, &[Vec3::new(0.3, -0.2, -0.1)]);
    assert!((e - 0.1).abs() < 1e-6, "{e}");
    assert_eq!(
        e_vp(sdf, &[Vec3::new(0.0, 0.0, 0.5), Vec3::new(1.0, 1.0, 0.2)]),
        0.0
    );

    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let pts: Vec<Vec3> = (0..500)
        .map(|_| {
            Vec3::new(
                rng.random_range(-1.5..1.5),
                rng.random_range(-1.5..1.5),
                rng.random_range(-0.3..0.3),
            )
        })
        .collect();
    let oracle: f64 = pts.iter().map(|p| (-sdf.query(p)).max(0.0)).sum();
    assert!((e_vp(sdf, &pts) - oracle).abs() < 1e-9);
}

#[test]
fn regularizer_cases() {
    let a: Vec<f64> = (0..63).map(|i| (i as f64 * 0.37).sin()).collect();
    assert_eq!(e_r(&a, &a), 0.0);
    let b: Vec<f64> = a.iter().map(|x| x + 0.1).collect();
    assert!((e_r(&b, &a) - 0.01).abs() < 1e-12);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let c: Vec<f64> = (0..63).map(|_| rng.random_range(-1.0..1.0)).collect();
    let mut loop_sum = 0.0;
    for i in 0..63 {
        loop_sum += (c[i] - a[i]) * (c[i] - a[i]);
    }
    assert_eq!(e_r(&c, &a), loop_sum / 63.0);
}

#[test]
fn weighted_total() {
    let w = EnergyWeights::default();
    let t = EnergyTerms {
        wc: 2.0,
        vp: 0.5,
        r: 0.01,
    };
    assert!((t.total(&w).unwrap() - 7.5).abs() < 1e-12);
    assert_eq!(EnergyTerms::default().total(&w).unwrap(), 0.0);
    let zero = EnergyWeights {
        lambda_wc: 0.0,
        lambda_vp: 0.0,
        lambda_r: 0.0,
        ..w
    };
    assert_eq!(t.total(&zero).unwrap(), 0.0);
    let bad = EnergyTerms { vp: f64::NAN, ..t };
    assert!(matches!(bad.total(&w), Err(Error::NonFiniteEnergy("E_vp"))));
}

#[test]
fn weights_reject_bad_values() {
    assert!(EnergyWeights {
        gm_sigma: 0.0,
        ..Default::default()
    }
    .validate()
    .is_err());
    assert!(EnergyWeights {
        lambda_vp: -1.0,
        ..Default::default()
    }
    .validate()
    .is_err());
    let toml_like: EnergyWeights = serde_json::from_str(r#"{"lambda_r": 5.0}"#).unwrap();
    assert_eq!(toml_like.lambda_r, 5.0);
    assert_eq!(toml_like.lambda_vp, 10.0);
    assert!(serde_json::from_str::<EnergyWeights>(r#"{"lambda": 5.0}"#).is_err());
}

#[test]
fn gradient_vanishes_at_zero_energy() {
    // A body far above the floor has no penetration; put the object points
    // exactly on its contact vertices so the attraction is zero too.
    let b = body();
    let scene = fixtures::floor_only();
    let pose = PoseVector {
        translation: Vec3::new(0.0, 0.0, 3.0),
        ..b.zero_pose()
    };
    let verts = b.pose_body(&pose).vertices;
    let contact: Vec<f64> = (0..verts.len())
        .map(|i| if i % 7 == 0 { 0.9 } else { 0.0 })
        .collect();
    let pts: Vec<Vec3> = verts
        .iter()
        .zip(&contact)
        .filter(|(_, &f)| f > THRESHOLD)
        .map(|(v, _)| *v)
        .collect();
    let tree = KdTree::new(pts);
    let problem = Refinement::new(
        b,
        scene.sdf().unwrap(),
        &tree,
        &contact,
        THRESHOLD,
        pose.theta.clone(),
        EnergyWeights::default(),
    )
    .unwrap();
    let frozen = problem.freeze(&pose);
    let (terms, g) = problem.frozen_gradient(&pose, &frozen);
    assert!(
        terms.wc < 1e-20 && terms.vp == 0.0 && terms.r == 0.0,
        "{terms:?}"
    );
    assert!(norm(&flatten_grad(&g)) < 1e-6);
}

#[test]
fn regularizer_only_gradient_is_closed_form() {
    let s = setup("chair", 0.5);
    let w = EnergyWeights {
        lambda_wc: 0.0,
        lambda_vp: 0.0,
        lambda_r: 1.0,
        ..Default::default()
    };
    let problem = s.problem(w);
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut pose = s.staged.pose.clone();
    for t in &mut pose.theta {
        *t += rng.random_range(-0.2..0.2);
    }
    let (_, g) = problem.frozen_gradient(&pose, &problem.freeze(&pose));
    for ((g, t), t0) in g.theta.iter().zip(&pose.theta).zip(problem.theta_init()) {
        assert!((g - 2.0 * (t - t0) / 63.0).abs() < 1e-12);
    }
    assert_eq!(g.translation, Vec3::zeros());
    assert_eq!(g.root_yaw, 0.0);
}

#[test]
fn gradient_matches_finite_differences() {
    const EPS: f64 = 1e-5;
    // Sunk into the sofa so both the attraction and the penetration terms
    // contribute, then jittered to get 20 distinct states.
    let s = setup("sofa", -0.04);
    let problem = s.problem(EnergyWeights::default());
    let w = *problem.weights();
    let mut rng = ChaCha8Rng::seed_from_u64(20);
    let mut worst: f64 = 0.0;
    for state in 0..20 {
        let mut pose = s.staged.pose.clone();
        for t in &mut pose.theta {
            *t += rng.random_range(-0.05..0.05);
        }
        pose.translation += Vec3::new(
            rng.random_range(-0.01..0.01),
            rng.random_range(-0.01..0.01),
            rng.random_range(-0.01..0.01),
        );
        pose.root_yaw += rng.random_range(-0.05..0.05);
        let frozen = problem.freeze(&pose);
        assert!(
            !frozen.active.is_empty(),
            "state {state} has no penetration"
        );
        let (_, g) = problem.frozen_gradient(&pose, &frozen);
        let analytic = flatten_grad(&g);
        let x = flatten(&pose);
        let f = |x: &[f64]| {
            problem
                .frozen_terms(&unflatten(x), &frozen)
                .total(&w)
                .unwrap()
        };
        let mut numeric = vec![0.0; x.len()];
        let mut probe = x.clone();
        for i in 0..x.len() {
            probe[i] = x[i] + EPS;
            let hi = f(&probe);
            probe[i] = x[i] - EPS;
            let lo = f(&probe);
            probe[i] = x[i];
            numeric[i] = (hi - lo) / (2.0 * EPS);
        }
        let scale = norm(&numeric).max(1e-8);
        for (a, n) in analytic.iter().zip(&numeric) {
            worst = worst.max((a - n).abs() / scale);
        }
    }
    eprintln!("worst relative gradient error {worst:.3e}");
    assert!(worst < 1e-3, "{worst}");
}

#[test]
fn regularizer_only_recovers_initial_pose() {
    let s = setup("chair", 0.5);
    let w = EnergyWeights {
        lambda_wc: 0.0,
        lambda_vp: 0.0,
        ..Default::default()
    };
    let problem = s.problem(w);
    // Adam's tail at this step size leaves roughly 2.5e-5 of the starting
    // offset after 200 steps, so the start is a one-degree perturbation.
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut start = s.staged.pose.clone();
    for t in &mut start.theta {
        *t += rng.random_range(-0.02..0.02);
    }
    let out = optimize(&problem, &start, true).unwrap();
    let err = out
        .pose
        .theta
        .iter()
        .zip(problem.theta_init())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    eprintln!(
        "recovery error {err:.3e} after {} iterations",
        out.iterations
    );
    assert!(out.iterations <= 200);
    assert!(err <= 1e-6, "{err}");
}

fn seat_gap(s: &Setup, pose: &PoseVector) -> f64 {
    let bvh = Bvh::from_faces(&s.staged.scene.mesh, &s.staged.object.faces);
    let verts = body().pose_body(pose).vertices;
    verts
        .iter()
        .zip(&s.staged.contact)
        .filter(|(_, &f)| f > THRESHOLD)
        .map(|(v, _)| bvh.distance(v))
        .fold(f64::INFINITY, f64::min)
}

#[test]
fn hovering_sit_descends_onto_the_seat() {
    let s = setup("chair", 0.03);
    let problem = s.problem(EnergyWeights::default());
    let start = Instant::now();
    let out = optimize(&problem, &s.staged.pose, true).unwrap();
    let elapsed = start.elapsed();
    let (before, after) = (seat_gap(&s, &s.staged.pose), seat_gap(&s, &out.pose));
    eprintln!(
        "hover: E_wc {:.4e} -> {:.4e}, gap {before:.4} -> {after:.4}, {} iterations in {elapsed:?}",
        out.initial.wc, out.last.wc, out.iterations
    );
    assert!(out.last.wc * 10.0 <= out.initial.wc);
    assert!(after <= 0.01, "{after}");
    assert!(elapsed.as_secs_f64() < 10.0);
}

#[test]
fn sunk_sit_is_pushed_out_of_the_sofa() {
    let s = setup("sofa", -0.04);
    let problem = s.problem(EnergyWeights::default());
    let sdf = s.staged.scene.sdf().unwrap();
    let start = Instant::now();
    let out = optimize(&problem, &s.staged.pose, true).unwrap();
    let elapsed = start.elapsed();
    let vnc = |p: &PoseVector| volume_non_collision(sdf, &body().interior_points(p).unwrap());
    let (before, after) = (vnc(&s.staged.pose), vnc(&out.pose));
    eprintln!(
        "sunk: E_vp {:.4e} -> {:.4e}, VNC {before:.4} -> {after:.4}, {} iterations in {elapsed:?}",
        out.initial.vp, out.last.vp, out.iterations
    );
    assert!(out.initial.vp > 0.0);
    assert!(out.last.vp * 5.0 <= out.initial.vp);
    assert!(after > before);
    assert!(elapsed.as_secs_f64() < 10.0);
}

#[test]
fn zero_iterations_leave_the_pose_alone() {
    let s = setup("chair", 0.03);
    let problem = s.problem(EnergyWeights {
        max_iters: 0,
        ..Default::default()
    });
    let out = optimize(&problem, &s.staged.pose, true).unwrap();
    assert_eq!(out.pose, s.staged.pose);
    assert_eq!(out.final_energy, out.initial_energy);
    assert!(!out.diverged);
}

#[test]
fn root_stays_fixed_unless_enabled() {
    let s = setup("chair", 0.03);
    let problem = s.problem(EnergyWeights {
        max_iters: 30,
        ..Default::default()
    });
    let out = optimize(&problem, &s.staged.pose, false).unwrap();
    assert_eq!(out.pose.translation, s.staged.pose.translation);
    assert_eq!(out.pose.root_yaw, s.staged.pose.root_yaw);
    assert_ne!(out.pose.theta, s.staged.pose.theta);
}

#[test]
fn never_ends_above_the_start() {
    for (category, lift) in [
        ("chair", 0.03),
        ("chair", 0.0),
        ("sofa", -0.02),
        ("sofa", 0.1),
    ] {
        let s = setup(category, lift);
        let out = optimize(&s.problem(EnergyWeights::default()), &s.staged.pose, true).unwrap();
        assert!(out.final_energy <= out.initial_energy, "{category} {lift}");
        assert_eq!(out.trace[0].energy, out.initial_energy);
    }
}

#[test]
fn runaway_steps_are_flagged_and_undone() {
    // A huge step size throws the body far off; the final energy ends well
    // above the start.
    let s = setup("chair", 0.0);
    let problem = s.problem(EnergyWeights {
        learning_rate: 5.0,
        max_iters: 20,
        ..Default::default()
    });
    let out = optimize(&problem, &s.staged.pose, true).unwrap();
    assert!(out.diverged, "{:?}", out.trace.last());
    assert_eq!(out.pose, s.staged.pose);
    assert_eq!(out.final_energy, out.initial_energy);
}
