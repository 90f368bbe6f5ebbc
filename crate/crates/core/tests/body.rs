use std::f64::consts::FRAC_PI_2;
use std::sync::OnceLock;

use proptest::prelude::*;
use scene_placer::body::{
    build_capsule_body, load_body, save_body, ArticulatedBody, CapsuleBodyConfig, PoseVector,
};
use scene_placer::geometry::{inside_test, TriangleMesh, Vec3};

fn body() -> &'static ArticulatedBody {
    static BODY: OnceLock<ArticulatedBody> = OnceLock::new();
    BODY.get_or_init(|| build_capsule_body(&CapsuleBodyConfig::default()).unwrap())
}

fn set(theta: &mut [f64], joint: usize, aa: [f64; 3]) {
    theta[3 * (joint - 1)..3 * joint].copy_from_slice(&aa);
}

fn sitting() -> PoseVector {
    let mut t = vec![0.0; 63];
    set(&mut t, 1, [FRAC_PI_2, 0.0, 0.0]);
    set(&mut t, 2, [FRAC_PI_2, 0.0, 0.0]);
    set(&mut t, 4, [-FRAC_PI_2, 0.0, 0.0]);
    set(&mut t, 5, [-FRAC_PI_2, 0.0, 0.0]);
    set(&mut t, 16, [0.0, -1.3, 0.0]);
    set(&mut t, 17, [0.0, 1.3, 0.0]);
    PoseVector::from_theta(t)
}

fn lying() -> PoseVector {
    let mut t = vec![0.0; 63];
    set(&mut t, 1, [FRAC_PI_2, 0.0, 0.0]);
    set(&mut t, 2, [FRAC_PI_2, 0.0, 0.0]);
    set(&mut t, 3, [FRAC_PI_2, 0.0, 0.0]);
    set(&mut t, 16, [0.0, -1.3, 0.0]);
    set(&mut t, 17, [0.0, 1.3, 0.0]);
    PoseVector::from_theta(t)
}

fn inside_fraction(pose: &PoseVector) -> f64 {
    let b = body();
    let mesh = b.posed_mesh(pose);
    let pts = b.interior_points(pose).unwrap();
    let inside = inside_test(&mesh, &pts);
    inside.iter().filter(|&&x| x).count() as f64 / inside.len() as f64
}

#[test]
fn weight_tables_are_row_stochastic() {
    let b = body();
    for (name, m) in [
        ("skinning", &b.parts().skinning),
        ("regressor", &b.parts().regressor),
        ("downsample", &b.parts().downsample),
        ("upsample", &b.parts().upsample),
    ] {
        for r in 0..m.rows {
            let sum: f64 = m.row(r).map(|(_, v)| v as f64).sum();
            assert!((sum - 1.0).abs() <= 1e-6, "{name} row {r} sums to {sum}");
            assert!(m.row(r).all(|(_, v)| v >= 0.0));
        }
    }
    let parents = b.parents();
    assert!(parents[0].is_none());
    assert!(parents
        .iter()
        .enumerate()
        .skip(1)
        .all(|(j, p)| p.unwrap() < j));
}

#[test]
fn zero_pose_reproduces_template() {
    let b = body();
    let posed = b.pose_body(&b.zero_pose());
    let worst = posed
        .vertices
        .iter()
        .zip(b.template())
        .map(|(a, t)| (a - t).norm())
        .fold(0.0, f64::max);
    assert!(worst <= 1e-9, "worst {worst}");
    let interior = b.interior_points(&b.zero_pose()).unwrap();
    for (a, c) in interior.iter().zip(b.canonical_interior()) {
        assert!((a - c).norm() <= 1e-9);
    }
}

#[test]
fn asset_file_round_trips_and_rebuilds_identically() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.spbody");
    let c = dir.path().join("c.spbody");
    save_body(body(), &a).unwrap();
    let loaded = load_body(&a).unwrap();
    assert_eq!(loaded.parts(), body().parts());
    let rebuilt = build_capsule_body(&CapsuleBodyConfig::default()).unwrap();
    save_body(&rebuilt, &c).unwrap();
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&c).unwrap());
}

#[test]
fn interior_points_stay_inside_posed_body() {
    for (name, pose) in [
        ("rest", body().zero_pose()),
        ("sit", sitting()),
        ("lie", lying()),
    ] {
        let frac = inside_fraction(&pose);
        assert!(frac >= 0.98, "{name}: {frac}");
    }
}

#[test]
fn faces_and_counts_are_pose_invariant() {
    let b = body();
    let m1 = b.posed_mesh(&sitting());
    let m2 = b.posed_mesh(&lying());
    assert_eq!(m1.faces, m2.faces);
    assert_eq!(m1.vertices.len(), b.vertex_count());
}

#[test]
fn sitting_pose_bends_at_hips_and_knees() {
    let b = body();
    let j = b.pose_body(&sitting()).joints;
    // Knees in front of the hips at hip height, ankles below the knees.
    assert!((j[4].z - j[1].z).abs() < 1e-9);
    assert!(j[4].y - j[1].y > 0.3);
    assert!((j[7].y - j[4].y).abs() < 1e-9);
    assert!(j[4].z - j[7].z > 0.3);
}

fn dense_multiply(m: &scene_placer::body::Csr, x: &[f64]) -> Vec<f64> {
    let mut dense = vec![vec![0.0; m.cols]; m.rows];
    for r in 0..m.rows {
        for (c, v) in m.row(r) {
            dense[r][c] = v as f64;
        }
    }
    dense
        .iter()
        .map(|row| {
            let s: f64 = row.iter().sum();
            row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>() / s
        })
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn upsampling_matches_dense_oracle_and_stays_in_range(seed in 0u64..1000) {
        use rand::{Rng, SeedableRng};
        let b = body();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let f: Vec<f64> = (0..b.simplified_count()).map(|_| rng.random()).collect();
        let up = b.upsample_feature(&f);
        let oracle = dense_multiply(&b.parts().upsample, &f);
        for (a, o) in up.iter().zip(&oracle) {
            prop_assert!((a - o).abs() < 1e-12);
            prop_assert!((0.0..=1.0).contains(a));
        }
    }

    #[test]
    fn simplified_vertices_follow_translation(dx in -2.0..2.0f64, dy in -2.0..2.0f64) {
        let b = body();
        let shift = Vec3::new(dx, dy, 0.5);
        let base = b.simplify_vertices(b.template());
        let moved: Vec<Vec3> = b.template().iter().map(|v| v + shift).collect();
        for (a, c) in b.simplify_vertices(&moved).iter().zip(&base) {
            prop_assert!((a - (c + shift)).norm() < 1e-12);
        }
    }
}

#[test]
fn constant_features_survive_resampling() {
    let b = body();
    assert!(b
        .upsample_feature(&vec![1.0; 655])
        .iter()
        .all(|&v| (v - 1.0).abs() < 1e-12));
    assert!(b
        .upsample_feature(&vec![0.0; 655])
        .iter()
        .all(|&v| v == 0.0));
    // Every simplified vertex is a template vertex, so down(up(f)) = f.
    let f: Vec<f64> = (0..655).map(|i| (i % 7) as f64 / 7.0).collect();
    let round = b.downsample_feature(&b.upsample_feature(&f));
    for (a, c) in round.iter().zip(&f) {
        assert!((a - c).abs() < 1e-6);
    }
}

#[test]
fn simplified_mesh_is_closed() {
    let p = body().parts();
    let mesh = TriangleMesh {
        vertices: body().simplify_vertices(body().template()),
        faces: p.simplified_faces.clone(),
    };
    let euler = mesh.vertices.len() as i64 - mesh.edges().len() as i64 + mesh.faces.len() as i64;
    assert_eq!(euler, 2);
}
