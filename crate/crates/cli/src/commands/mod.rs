mod build_assets;
mod evaluate;
mod place;
mod train;

use std::path::Path;

use scene_placer::body::load_body;
use scene_placer::generators::{load_contact_cvae, load_pose_cvae};
use scene_placer::geometry::{SdfConfig, SdfGrid};
use scene_placer::placement::Assets;
use scene_placer::scene::{load_scene, Scene};

pub use build_assets::{
    build_assets, export_fixture, fixture_scene, read_manifest, BuildOutcome, FileHash, Manifest,
};
pub use evaluate::{evaluate, EvaluationReport, EvaluationRow, EvaluationSummary};
pub use place::{pipeline, place, write_placements, PlaceOptions};
pub use train::{train, TrainOutcome};

use crate::hashing::sha256_bytes;
use crate::{require, CliError, Context, Result};

/// Cache key of a scene SDF: the mesh bytes and the grid settings.
pub fn sdf_key(mesh: &Path, sdf: &SdfConfig) -> Result<String> {
    let bytes = std::fs::read(mesh).map_err(|e| CliError::io(mesh, e))?;
    let settings = serde_json::to_vec(sdf).expect("sdf config serializes");
    Ok(sha256_bytes(&[b"sdf-v1", &bytes, &settings]))
}

/// Loads the configured scene, installing the cached SDF when its key
/// matches the manifest of the last asset build.
pub fn load_scene_cached(ctx: &Context) -> Result<Scene> {
    let paths = &ctx.config.paths;
    require(&paths.scene, "scene mesh")?;
    require(&paths.labels, "labels file")?;
    let scene = load_scene(&paths.scene, &paths.labels)?.with_sdf_config(ctx.config.sdf);
    let key = sdf_key(&paths.scene, &ctx.config.sdf)?;
    let cached = read_manifest(&paths.manifest())
        .filter(|m| m.sdf_key == key)
        .and_then(|_| SdfGrid::load(&paths.sdf_cache()).ok());
    match cached {
        Some(grid) => {
            log::debug!("using cached scene SDF {}", paths.sdf_cache().display());
            scene.set_sdf(grid);
        }
        None => log::info!("no matching SDF cache; building the scene SDF"),
    }
    Ok(scene)
}

pub fn load_assets(ctx: &Context) -> Result<Assets> {
    let paths = &ctx.config.paths;
    require(&paths.body, "body asset (run `build-assets`)")?;
    require(&paths.pose_net, "pose checkpoint (run `train pose`)")?;
    require(
        &paths.contact_net,
        "contact checkpoint (run `train contact`)",
    )?;
    let body = load_body(&paths.body)?;
    let (pose_net, _) = load_pose_cvae(&paths.pose_net)?;
    let (contact_net, _) = load_contact_cvae(&paths.contact_net)?;
    if contact_net.spiral() != body.spiral_table().0 {
        return Err(CliError::Validation(format!(
            "{} was trained on a different body than {}",
            paths.contact_net.display(),
            paths.body.display()
        )));
    }
    Ok(Assets {
        body,
        pose_net,
        contact_net,
    })
}
