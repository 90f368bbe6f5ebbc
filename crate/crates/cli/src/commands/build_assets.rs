use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use scene_placer::body::{build_capsule_body, save_body};
use scene_placer::fixtures;
use scene_placer::generators::corpus::{write_contact_corpus, write_pose_corpus};
use scene_placer::generators::synth;
use scene_placer::geometry::io::write_mesh;
use scene_placer::geometry::SdfGrid;
use scene_placer::scene::{load_scene, Scene};

use super::sdf_key;
use crate::args::Fixture;
use crate::hashing::sha256_file;
use crate::{create_dir, display_relative, require, unix_time, write_json, Context, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FileHash {
    pub path: String,
    pub sha256: String,
}

/// Content hashes of the inputs and outputs of an asset build.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub inputs: BTreeMap<String, FileHash>,
    /// Hash of the scene mesh and SDF settings the cached grid was built from.
    pub sdf_key: String,
    pub outputs: BTreeMap<String, FileHash>,
    pub meta: ManifestMeta,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestMeta {
    pub generated_at_unix: u64,
    pub sdf_cache_hit: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BuildOutcome {
    pub sdf_cache_hit: bool,
    pub pose_corpus_written: bool,
    pub contact_corpus_written: bool,
}

pub fn fixture_scene(f: Fixture) -> Scene {
    match f {
        Fixture::Room => fixtures::room(),
        Fixture::TwoChairRoom => fixtures::two_chair_room(),
        Fixture::SofaRoom => fixtures::sofa_room(),
        Fixture::BedRoom => fixtures::bed_room(),
        Fixture::Floor => fixtures::floor_only(),
    }
}

/// Writes a fixture scene mesh and its label sidecar.
pub fn export_fixture(f: Fixture, mesh: &Path, labels: &Path) -> Result<()> {
    let scene = fixture_scene(f);
    for p in [mesh, labels] {
        if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
            create_dir(dir)?;
        }
    }
    write_mesh(mesh, &scene.mesh)?;
    scene.label_file().save(labels)?;
    Ok(())
}

pub fn read_manifest(path: &Path) -> Option<Manifest> {
    let text = std::fs::read_to_string(path).ok()?;
    serde_json::from_str(&text).ok()
}

pub fn build_assets(ctx: &Context, fixture: Option<Fixture>) -> Result<BuildOutcome> {
    let cfg = &ctx.config;
    let paths = &cfg.paths;
    if let Some(f) = fixture {
        export_fixture(f, &paths.scene, &paths.labels)?;
    }
    require(&paths.scene, "scene mesh")?;
    require(&paths.labels, "labels file")?;
    let scene = load_scene(&paths.scene, &paths.labels)?.with_sdf_config(cfg.sdf);
    create_dir(&paths.assets_dir)?;
    let dir = paths.assets_dir.as_path();

    let body = build_capsule_body(&cfg.body)?;
    save_body(&body, &paths.body)?;
    let (spiral, length) = body.spiral_table();
    write_json(
        &paths.spiral(),
        &serde_json::json!({
            "length": length,
            "vertices": body.simplified_count(),
            "indices": spiral,
        }),
    )?;

    let key = sdf_key(&paths.scene, &cfg.sdf)?;
    let cache = paths.sdf_cache();
    let previous = read_manifest(&paths.manifest());
    let cache_hit = match &previous {
        Some(m) if m.sdf_key == key && cache.is_file() => m
            .outputs
            .get("sdf")
            .is_some_and(|h| sha256_file(&cache).is_ok_and(|now| now == h.sha256)),
        _ => false,
    };
    if cache_hit {
        log::info!("scene SDF unchanged; reusing {}", cache.display());
    } else {
        log::info!("building scene SDF at {} m", cfg.sdf.voxel_size);
        let grid: &SdfGrid = scene.sdf()?;
        grid.save(&cache)?;
    }

    let pose_corpus_written = !paths.pose_corpus().is_file();
    if pose_corpus_written {
        let samples = synth::pose_corpus(cfg.corpus.pose_per_action, cfg.corpus.seed);
        write_pose_corpus(&paths.pose_corpus(), &samples)?;
    }
    let contact_corpus_written = !paths.contact_corpus().is_file();
    if contact_corpus_written {
        let samples = synth::contact_corpus(&body, cfg.corpus.contact_per_pairing, cfg.corpus.seed);
        write_contact_corpus(&paths.contact_corpus(), &samples)?;
    }

    let hash = |p: &Path| -> Result<FileHash> {
        Ok(FileHash {
            path: display_relative(p, dir),
            sha256: sha256_file(p)?,
        })
    };
    // Inputs usually live outside the asset directory; their names and
    // contents identify them.
    let input = |p: &Path| -> Result<FileHash> {
        Ok(FileHash {
            path: p
                .file_name()
                .map(|n| n.to_string_lossy().into_owned())
                .unwrap_or_default(),
            sha256: sha256_file(p)?,
        })
    };
    let inputs = BTreeMap::from([
        ("scene".to_string(), input(&paths.scene)?),
        ("labels".to_string(), input(&paths.labels)?),
    ]);
    let outputs = BTreeMap::from([
        ("body".to_string(), hash(&paths.body)?),
        ("spiral".to_string(), hash(&paths.spiral())?),
        ("sdf".to_string(), hash(&cache)?),
        ("pose_corpus".to_string(), hash(&paths.pose_corpus())?),
        ("contact_corpus".to_string(), hash(&paths.contact_corpus())?),
    ]);
    write_json(
        &paths.manifest(),
        &Manifest {
            inputs,
            sdf_key: key,
            outputs,
            meta: ManifestMeta {
                generated_at_unix: unix_time(),
                sdf_cache_hit: cache_hit,
            },
        },
    )?;
    println!(
        "assets in {}: body {} vertices, SDF cache {}",
        dir.display(),
        body.vertex_count(),
        if cache_hit { "reused" } else { "rebuilt" }
    );
    Ok(BuildOutcome {
        sdf_cache_hit: cache_hit,
        pose_corpus_written,
        contact_corpus_written,
    })
}
